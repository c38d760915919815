use crate::error::{Error, Result};

/// Uniform nodes `t_i = iT/N`, `i = 0..=N`, discretizing `{0 <= t <= s <= T}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangularGrid {
    horizon: f64,
    n: usize,
}

impl TriangularGrid {
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if n < 2 {
            return Err(Error::Domain(format!("grid needs N >= 2, got {n}")));
        }
        Ok(Self { horizon, n })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of subintervals `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }

    /// `t_j - T`, computed so that `j = N` gives exactly 0 and `j = 0` exactly `-T`.
    pub fn lag_from_end(&self, j: usize) -> f64 {
        -(self.horizon * (self.n - j) as f64 / self.n as f64)
    }

    /// Composite-trapezoid weight of node `k` on `[t_i, t_j]`; zero for an empty interval.
    #[inline]
    pub fn trap_weight(&self, i: usize, j: usize, k: usize) -> f64 {
        if i == j || k < i || k > j {
            0.0
        } else if k == i || k == j {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    /// Trapezoid of `f(k)` over nodes `i..=j`.
    pub fn trapezoid(&self, i: usize, j: usize, f: impl Fn(usize) -> f64) -> f64 {
        if i >= j {
            return 0.0;
        }
        let mut inner = 0.0;
        for k in i + 1..j {
            inner += f(k);
        }
        self.step() * (0.5 * f(i) + inner + 0.5 * f(j))
    }

    pub fn ensure_same(&self, other: &TriangularGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(T={}, N={}) vs (T={}, N={})",
                self.horizon, self.n, other.horizon, other.n
            )))
        }
    }

    pub fn ensure_horizon(&self, horizon: f64) -> Result<()> {
        if (self.horizon - horizon).abs() <= 1e-12 * self.horizon.max(1.0) {
            Ok(())
        } else {
            Err(Error::HorizonMismatch { expected: self.horizon, found: horizon })
        }
    }
}

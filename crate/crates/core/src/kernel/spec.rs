//! Registry of kernel and coefficient functions.
//!
//! All functions are extended by zero outside `{0 <= t <= s}`.

use super::grid::TriangularGrid;
use crate::error::{Error, Result};

/// A deterministic function of one time variable.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFn {
    Zero,
    Constant(f64),
    /// `a * exp(rate * t)`
    Exp { a: f64, rate: f64 },
    /// `a + b * t`
    Affine { a: f64, b: f64 },
}

impl ScalarFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Constant(c) => c,
            ScalarFn::Exp { a, rate } => a * (rate * t).exp(),
            ScalarFn::Affine { a, b } => a + b * t,
        }
    }

    /// Evaluation with zero extension for `t < 0`.
    pub fn eval_ext(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            self.eval(t)
        }
    }

    /// Supremum of `|f|` on `[0, T]`.
    pub fn sup_on(&self, horizon: f64) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Constant(c) => c.abs(),
            ScalarFn::Exp { a, rate } => a.abs() * (rate.max(0.0) * horizon).exp(),
            ScalarFn::Affine { a, b } => a.abs().max((a + b * horizon).abs()),
        }
    }
}

/// Tabulated values on a uniform triangular grid, bilinearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedKernel {
    grid: TriangularGrid,
    values: Vec<f64>,
}

impl TabulatedKernel {
    /// `values` is row-major `(N+1) x (N+1)`; entries below the diagonal are ignored.
    pub fn new(grid: TriangularGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * grid.len() {
            return Err(Error::GridMismatch(format!(
                "tabulated kernel needs {} values, got {}",
                grid.len() * grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("tabulated kernel has non-finite entries".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TriangularGrid {
        &self.grid
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.len() + j]
    }

    fn eval(&self, t: f64, s: f64) -> f64 {
        let n = self.grid.n();
        let h = self.grid.step();
        let pos = |x: f64| {
            let p = (x / h).clamp(0.0, n as f64);
            let lo = (p.floor() as usize).min(n - 1);
            (lo, p - lo as f64)
        };
        let (i, ft) = pos(t);
        let (j, fs) = pos(s);
        let v = |a: usize, b: usize| if a <= b { self.at(a, b) } else { self.at(b, b) };
        (1.0 - ft) * (1.0 - fs) * v(i, j)
            + ft * (1.0 - fs) * v(i + 1, j)
            + (1.0 - ft) * fs * v(i, j + 1)
            + ft * fs * v(i + 1, j + 1)
    }
}

/// A function of `(t, s)` on `{t <= s}`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFn {
    Zero,
    Constant(f64),
    /// `coef * (s - t)^power * exp(-rate * (s - t))`
    PolyExp { coef: f64, power: u32, rate: f64 },
    /// `T (s - t) / (T - s) * exp(-(s - t))`, set to 0 at `s = T` where it is singular.
    Example33 { horizon: f64 },
    Tabulated(TabulatedKernel),
}

impl KernelFn {
    /// Evaluation with zero extension outside `{0 <= t <= s}`.
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        if t < 0.0 || s < 0.0 || s < t {
            return 0.0;
        }
        match self {
            KernelFn::Zero => 0.0,
            KernelFn::Constant(c) => *c,
            KernelFn::PolyExp { coef, power, rate } => {
                let u = s - t;
                coef * u.powi(*power as i32) * (-rate * u).exp()
            }
            KernelFn::Example33 { horizon } => {
                if s >= *horizon {
                    0.0
                } else {
                    let u = s - t;
                    horizon * u / (horizon - s) * (-u).exp()
                }
            }
            KernelFn::Tabulated(tab) => tab.eval(t, s),
        }
    }
}

/// The generator data `G`, `g` with their declared uniform bounds.
///
/// `phi_direct`, when present, replaces `α([s-T,0]) G(t,s)` in the reduced
/// kernel. It exists for kernels whose `G` is unbounded but whose product with
/// the delay mass is bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub big_g: KernelFn,
    pub small_g: ScalarFn,
    pub bound_big_g: f64,
    pub bound_small_g: f64,
    pub phi_direct: Option<(KernelFn, f64)>,
}

impl KernelSpec {
    pub fn new(big_g: KernelFn, bound_big_g: f64, small_g: ScalarFn, bound_small_g: f64) -> Self {
        Self { big_g, small_g, bound_big_g, bound_small_g, phi_direct: None }
    }

    pub fn constant(c: f64, gamma: f64) -> Self {
        Self::new(
            KernelFn::Constant(c),
            c.abs(),
            ScalarFn::Constant(gamma),
            gamma.abs(),
        )
    }

    pub fn with_phi(mut self, phi: KernelFn, bound_phi: f64) -> Self {
        self.phi_direct = Some((phi, bound_phi));
        self
    }

    /// Uniform-delay example with `ρ(y) = e^{-y}`: `Φ(t,s) = (s-t) e^{-(s-t)}` supplied directly.
    pub fn example33(horizon: f64, small_g: ScalarFn, bound_small_g: f64) -> Self {
        Self::new(KernelFn::Example33 { horizon }, f64::INFINITY, small_g, bound_small_g).with_phi(
            KernelFn::PolyExp { coef: 1.0, power: 1, rate: 1.0 },
            (-1.0f64).exp(),
        )
    }

    pub fn g_big(&self, t: f64, s: f64) -> f64 {
        self.big_g.eval(t, s)
    }

    pub fn g_small(&self, s: f64) -> f64 {
        self.small_g.eval_ext(s)
    }

    /// Checks the declared bounds at every grid node (boundedness assumptions on `G`, `g`).
    pub fn check_bounds(&self, grid: &TriangularGrid) -> Result<()> {
        let slack = |b: f64| b * (1.0 + 1e-12) + 1e-300;
        for i in 0..=grid.n() {
            let t = grid.node(i);
            let v = self.g_small(t);
            if !(v.abs() <= slack(self.bound_small_g)) {
                return Err(Error::BoundViolation { name: "g", value: v.abs(), bound: self.bound_small_g });
            }
            for j in i..=grid.n() {
                let s = grid.node(j);
                let v = self.g_big(t, s);
                if !(v.abs() <= slack(self.bound_big_g)) {
                    return Err(Error::BoundViolation { name: "G", value: v.abs(), bound: self.bound_big_g });
                }
                if let Some((phi, bound)) = &self.phi_direct {
                    let v = phi.eval(t, s);
                    if !(v.abs() <= slack(*bound)) {
                        return Err(Error::BoundViolation { name: "Phi", value: v.abs(), bound: *bound });
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_extension() {
        let k = KernelFn::Constant(2.0);
        assert_eq!(k.eval(-0.1, 0.5), 0.0);
        assert_eq!(k.eval(0.1, -0.5), 0.0);
        assert_eq!(k.eval(0.6, 0.5), 0.0);
        assert_eq!(k.eval(0.1, 0.5), 2.0);
        assert_eq!(ScalarFn::Constant(3.0).eval_ext(-1e-9), 0.0);
    }

    #[test]
    fn tabulated_interpolates_linear_kernel() {
        let grid = TriangularGrid::new(1.0, 10).unwrap();
        let mut vals = vec![0.0; 121];
        for i in 0..=10 {
            for j in i..=10 {
                vals[i * 11 + j] = grid.node(j) - grid.node(i);
            }
        }
        let k = KernelFn::Tabulated(TabulatedKernel::new(grid, vals).unwrap());
        assert!((k.eval(0.15, 0.73) - 0.58).abs() < 1e-12);
    }

    #[test]
    fn bound_check_catches_violation() {
        let grid = TriangularGrid::new(1.0, 4).unwrap();
        let spec = KernelSpec::new(KernelFn::Constant(2.0), 1.0, ScalarFn::Zero, 0.0);
        assert!(matches!(spec.check_bounds(&grid), Err(Error::BoundViolation { name: "G", .. })));
        assert!(KernelSpec::example33(1.0, ScalarFn::Zero, 0.0).check_bounds(&grid).is_ok());
    }
}

//! Change of measure `dQ/dP = M(T)` with drift `b(s) = α((s-T,0]) g(s)`.
//!
//! Ensembles are generated per path from counter-based ChaCha streams keyed by
//! `(root seed, path index)`, so the output does not depend on how many worker
//! threads produced it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, TriangularGrid};
use crate::measure::DelayMeasure;
use crate::par;

/// Smallest admissible effective sample size `Σw / max w`.
pub const MIN_EFFECTIVE_SAMPLE_SIZE: f64 = 10.0;

/// Drift of `W` under `Q`, sampled on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftFunction {
    grid: TriangularGrid,
    values: Vec<f64>,
}

impl DriftFunction {
    pub fn zero(grid: TriangularGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: TriangularGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("drift has {} values for {} nodes", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TriangularGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&b| b == 0.0)
    }

    /// Left-point `Σ_{i <= k < j} b(t_k) Δ`.
    pub fn integral(&self, i: usize, j: usize) -> f64 {
        let h = self.grid.step();
        self.values[i..j].iter().map(|b| b * h).sum()
    }
}

/// `b(t_i) = α((t_i - T, 0]) g(t_i)`.
pub fn drift(m: &DelayMeasure, k: &KernelSpec, grid: &TriangularGrid) -> Result<DriftFunction> {
    m.validate()?;
    grid.ensure_horizon(m.horizon())?;
    let values = (0..=grid.n())
        .map(|i| Ok(m.mass_left_open(grid.lag_from_end(i))? * k.g_small(grid.node(i))))
        .collect::<Result<Vec<_>>>()?;
    Ok(DriftFunction { grid: *grid, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Standard `P` increments with Radon–Nikodym weights `M(T)`.
    P,
    /// Standard `Q` increments of `W^Q`; `W` is rebuilt by adding the drift back.
    Q,
}

/// `M` discretized Brownian paths on a grid.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    grid: TriangularGrid,
    paths: usize,
    seed: u64,
    mode: SamplingMode,
    drift: DriftFunction,
    /// Increments of `W`, row-major `M x N`.
    dw: Vec<f64>,
    /// Cumulative `W(t_i)`, row-major `M x (N+1)`.
    w: Vec<f64>,
    weights: Option<Vec<f64>>,
}

/// Borrowed view of one path.
#[derive(Debug, Clone, Copy)]
pub struct PathRef<'a> {
    pub dw: &'a [f64],
    pub w: &'a [f64],
    pub drift: &'a DriftFunction,
}

impl PathRef<'_> {
    pub fn w_at(&self, i: usize) -> f64 {
        self.w[i]
    }

    /// `W^Q(t_i) = W(t_i) - Σ_{k<i} b(t_k) Δ`.
    pub fn wq_at(&self, i: usize) -> f64 {
        self.w[i] - self.drift.integral(0, i)
    }

    /// Increment of `W^Q` over `[t_k, t_{k+1}]`.
    pub fn dwq(&self, k: usize) -> f64 {
        self.dw[k] - self.drift.at(k) * self.drift.grid().step()
    }

    pub fn terminal(&self) -> f64 {
        *self.w.last().unwrap()
    }
}

impl PathEnsemble {
    pub fn grid(&self) -> &TriangularGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.paths
    }

    pub fn is_empty(&self) -> bool {
        self.paths == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn drift(&self) -> &DriftFunction {
        &self.drift
    }

    /// Radon–Nikodym weights (mode `P` only).
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn path(&self, p: usize) -> PathRef<'_> {
        let n = self.grid.n();
        PathRef {
            dw: &self.dw[p * n..(p + 1) * n],
            w: &self.w[p * (n + 1)..(p + 1) * (n + 1)],
            drift: &self.drift,
        }
    }

    /// Copy of path `p` with increment `k` bumped by `eps`.
    pub fn bumped_path(&self, p: usize, k: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
        let base = self.path(p);
        let mut dw = base.dw.to_vec();
        dw[k] += eps;
        let mut w = Vec::with_capacity(dw.len() + 1);
        w.push(0.0);
        let mut acc = 0.0;
        for d in &dw {
            acc += d;
            w.push(acc);
        }
        (dw, w)
    }
}

/// Per-path generator for the standard normal increments of path `p`.
pub fn path_rng(seed: u64, p: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(p as u64);
    rng
}

/// Simulates `paths` Brownian paths under the requested law.
pub fn sample_paths(drift: &DriftFunction, paths: usize, seed: u64, mode: SamplingMode) -> Result<PathEnsemble> {
    if paths == 0 {
        return Err(Error::Domain("path count must be at least 1".into()));
    }
    let grid = *drift.grid();
    let n = grid.n();
    let h = grid.step();
    let sqrt_h = h.sqrt();
    let rows = par::map_indices(paths, |p| {
        let mut rng = path_rng(seed, p);
        let mut dw = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n + 1);
        w.push(0.0);
        let mut acc = 0.0;
        let mut exponent = 0.0;
        for k in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let b = drift.at(k);
            let d = match mode {
                SamplingMode::P => {
                    let d = sqrt_h * z;
                    exponent += b * d - 0.5 * b * b * h;
                    d
                }
                SamplingMode::Q => sqrt_h * z + b * h,
            };
            acc += d;
            dw.push(d);
            w.push(acc);
        }
        (dw, w, exponent.exp())
    });
    let mut dw = Vec::with_capacity(paths * n);
    let mut w = Vec::with_capacity(paths * (n + 1));
    let mut weights = Vec::with_capacity(paths);
    for (d, c, m) in rows {
        dw.extend(d);
        w.extend(c);
        weights.push(m);
    }
    if weights.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(Error::Domain("non-finite Girsanov weight".into()));
    }
    Ok(PathEnsemble {
        grid,
        paths,
        seed,
        mode,
        drift: drift.clone(),
        dw,
        w,
        weights: match mode {
            SamplingMode::P => Some(weights),
            SamplingMode::Q => None,
        },
    })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `|a - b| / sqrt(se_a² + se_b²)`-style gap between two independent estimates.
    pub fn gap(&self, other: &Estimate) -> Estimate {
        Estimate { value: self.value - other.value, se: self.se.hypot(other.se) }
    }
}

/// Plain sample mean with `sd / sqrt(M)`.
pub fn mean_estimate(values: &[f64]) -> Estimate {
    let m = values.len() as f64;
    let mean = par::ordered_sum(values.iter().copied()) / m;
    if values.len() < 2 {
        return Estimate { value: mean, se: 0.0 };
    }
    let var = par::ordered_sum(values.iter().map(|x| (x - mean).powi(2))) / (m - 1.0);
    Estimate { value: mean, se: (var / m).sqrt() }
}

/// Self-normalized weighted mean with a delta-method standard error.
pub fn weighted_estimate(values: &[f64], weights: &[f64]) -> Result<Estimate> {
    let total = par::ordered_sum(weights.iter().copied());
    let max = weights.iter().fold(0.0f64, |a, &b| a.max(b));
    let ess = total / max;
    if !(ess >= MIN_EFFECTIVE_SAMPLE_SIZE) {
        return Err(Error::DegenerateWeights { ess });
    }
    let mean = par::ordered_sum(values.iter().zip(weights).map(|(x, w)| w * x)) / total;
    let var = par::ordered_sum(values.iter().zip(weights).map(|(x, w)| (w * (x - mean)).powi(2)));
    Ok(Estimate { value: mean, se: var.sqrt() / total })
}

/// Estimates `E^Q[f(path)]` from either kind of ensemble.
pub fn expect_q<F>(ensemble: &PathEnsemble, functional: F) -> Result<Estimate>
where
    F: Fn(PathRef<'_>) -> f64 + Sync + Send,
{
    let values = par::map_indices(ensemble.len(), |p| functional(ensemble.path(p)));
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("functional is not finite on every path".into()));
    }
    estimate_under_q(ensemble, &values)
}

/// `E^Q` of per-path values already evaluated on `ensemble`.
pub fn estimate_under_q(ensemble: &PathEnsemble, values: &[f64]) -> Result<Estimate> {
    match ensemble.weights() {
        None => Ok(mean_estimate(values)),
        Some(w) => weighted_estimate(values, w),
    }
}

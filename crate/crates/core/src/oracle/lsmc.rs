//! Least-squares Monte Carlo for the delayed equation with a stochastic terminal family.
//!
//! Picard outer loop on `ξ(t_i) = F(t_i) + generator(Y, Z)(t_i)`:
//! `Y(t_i) ≈ E[ξ(t_i) | W(t_i)]` and `Z(t_i, s_j) ≈ E[(ξ(t_i) - E[ξ(t_i)|W(s_j)]) ΔW_j | W(s_j)] / Δ`,
//! each conditional expectation a ridge regression on Hermite polynomials of the
//! standardized state `W(t)/√t`. The delay measure is spread over grid lags, so
//! the generator shifts stay on the grid.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::delayed::DelayedOperator;
use super::picard::PicardConfig;
use crate::error::{Error, Result};
use crate::explicit::YField;
use crate::girsanov::{mean_estimate, Estimate, PathEnsemble, SamplingMode};
use crate::kernel::{KernelSpec, KernelTable, TriangularGrid};
use crate::measure::DelayMeasure;
use crate::par;
use crate::terminal::{evaluate_f, TerminalFamily};

/// Largest admissible condition number of a regression Gram matrix.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsmcConfig {
    pub picard: PicardConfig,
    /// Highest Hermite degree in the basis.
    pub degree: usize,
    pub ridge: f64,
}

impl Default for LsmcConfig {
    fn default() -> Self {
        Self { picard: PicardConfig::default(), degree: 4, ridge: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct LsmcResult {
    /// Fitted `Y` per path.
    pub y: YField,
    /// `E[Y(t_i)]` with the standard error of the sample mean of `ξ(t_i)`.
    pub y_mean: Vec<Estimate>,
    /// `E[Z(t_i, s_j)]`; the last column repeats the one before it.
    pub z: KernelTable,
    pub z_se: KernelTable,
    /// Sup-norm of successive regression-coefficient differences.
    pub history: Vec<f64>,
}

/// Probabilists' Hermite polynomials `He_0..He_d` at `x`.
fn hermite(d: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if d >= 1 {
        out[1] = x;
    }
    for k in 1..d {
        out[k + 1] = x * out[k] - k as f64 * out[k - 1];
    }
}

/// Basis columns at one node, with the precomputed normal-equation solver.
struct NodeBasis {
    dim: usize,
    /// Column-major `dim x M`.
    cols: Vec<f64>,
    inverse: DMatrix<f64>,
}

impl NodeBasis {
    fn new(states: &[f64], t: f64, cfg: &LsmcConfig) -> Result<Self> {
        let m = states.len();
        let dim = if t > 0.0 { cfg.degree + 1 } else { 1 };
        let scale = if t > 0.0 { 1.0 / t.sqrt() } else { 0.0 };
        let mut cols = vec![0.0; dim * m];
        let mut buf = vec![0.0; dim];
        for (p, &w) in states.iter().enumerate() {
            hermite(dim - 1, w * scale, &mut buf);
            for d in 0..dim {
                cols[d * m + p] = buf[d];
            }
        }
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        for a in 0..dim {
            for b in a..dim {
                let v = par::dot(&cols[a * m..(a + 1) * m], &cols[b * m..(b + 1) * m]) / m as f64;
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
            gram[(a, a)] += cfg.ridge;
        }
        let eig = SymmetricEigen::new(gram.clone());
        let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        let cond = hi / lo;
        if !(lo > 0.0) || cond > MAX_CONDITION {
            return Err(Error::RegressionIllConditioned(cond));
        }
        let inverse = gram.cholesky().ok_or(Error::RegressionIllConditioned(cond))?.inverse();
        Ok(Self { dim, cols, inverse })
    }

    fn m(&self) -> usize {
        self.cols.len() / self.dim
    }

    fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        let m = self.m();
        let rhs = DVector::from_iterator(self.dim, (0..self.dim).map(|d| par::dot(&self.cols[d * m..(d + 1) * m], y) / m as f64));
        (&self.inverse * rhs).iter().copied().collect()
    }

    fn fitted(&self, coef: &[f64], out: &mut [f64]) {
        let m = self.m();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (d, c) in coef.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(&self.cols[d * m..(d + 1) * m]) {
                *o += c * b;
            }
        }
    }
}

/// Regression oracle for the delayed equation under `P`.
pub fn solve_delayed_lsmc(
    fam: &TerminalFamily,
    k: &KernelSpec,
    m: &DelayMeasure,
    grid: &TriangularGrid,
    ensemble: &PathEnsemble,
    cfg: &LsmcConfig,
) -> Result<LsmcResult> {
    cfg.picard.validate()?;
    m.validate()?;
    grid.ensure_horizon(m.horizon())?;
    grid.ensure_same(ensemble.grid())?;
    if ensemble.mode() != SamplingMode::P {
        return Err(Error::Domain("regression oracle works under P; sample in P mode".into()));
    }
    let n = grid.n();
    let len = n + 1;
    let paths = ensemble.len();
    let h = grid.step();

    let lags = m.lag_weights(n);
    let points: Vec<(f64, f64)> =
        lags.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(l, &w)| (-(l as f64) * h, w)).collect();
    let op = DelayedOperator::from_points(k, points, grid).with_z(k);
    let y_op = op.y_matrix();
    let z_rows = op.z_rows().expect("operator built with Z part");

    // Node-major state, increments and terminal values.
    let w_cols: Vec<Vec<f64>> = (0..len).map(|i| (0..paths).map(|p| ensemble.path(p).w_at(i)).collect()).collect();
    let dw_cols: Vec<Vec<f64>> = (0..n).map(|j| (0..paths).map(|p| ensemble.path(p).dw[j] / h).collect()).collect();
    let f_cols: Vec<Vec<f64>> = par::map_indices(len, |i| {
        (0..paths).map(|p| evaluate_f(fam, grid.node(i), &ensemble.path(p))).collect()
    });
    let bases = par::map_indices(len, |i| NodeBasis::new(&w_cols[i], grid.node(i), cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    // Z(t_a, t_N) is extrapolated from column N-1, so its basis is that column's.
    let z_node = |b: usize| b.min(n - 1);

    let mut beta_y: Vec<Vec<f64>> = bases.iter().map(|b| vec![0.0; b.dim]).collect();
    let mut beta_z: Vec<Vec<f64>> = (0..len * len).map(|idx| vec![0.0; bases[z_node(idx % len)].dim]).collect();
    let mut history = Vec::new();
    let mut converged = false;
    let mut xi: Vec<Vec<f64>> = Vec::new();
    let mut z_stats: Vec<Estimate> = Vec::new();

    for _ in 0..cfg.picard.max_iterations {
        // ξ_i = F_i + Σ_l Γ_il · basis_l with Γ collecting both generator terms.
        xi = par::map_indices(len, |i| {
            let mut gamma: Vec<Vec<f64>> = bases.iter().map(|b| vec![0.0; b.dim]).collect();
            for l in 0..len {
                let c = y_op[i * len + l];
                if c != 0.0 {
                    gamma[l].iter_mut().zip(&beta_y[l]).for_each(|(g, b)| *g += c * b);
                }
            }
            for &(a, b, c) in &z_rows[i] {
                let node = z_node(b);
                gamma[node].iter_mut().zip(&beta_z[a * len + b]).for_each(|(g, bz)| *g += c * bz);
            }
            let mut out = f_cols[i].clone();
            let mut tmp = vec![0.0; paths];
            for (l, g) in gamma.iter().enumerate() {
                if g.iter().any(|v| *v != 0.0) {
                    bases[l].fitted(g, &mut tmp);
                    out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
                }
            }
            out
        });

        let new_y: Vec<Vec<f64>> = par::map_indices(len, |i| bases[i].coefficients(&xi[i]));
        // Z regressions for every (i, j) with i <= j < N.
        let z_cols = par::map_indices(n, |j| {
            let basis = &bases[j];
            let mut fit = vec![0.0; paths];
            let mut resp = vec![0.0; paths];
            (0..=j)
                .map(|i| {
                    let a = basis.coefficients(&xi[i]);
                    basis.fitted(&a, &mut fit);
                    for p in 0..paths {
                        resp[p] = (xi[i][p] - fit[p]) * dw_cols[j][p];
                    }
                    (basis.coefficients(&resp), mean_estimate(&resp))
                })
                .collect::<Vec<_>>()
        });
        let mut diff = 0.0f64;
        let mut size = 0.0f64;
        for (old, new) in beta_y.iter_mut().zip(new_y) {
            for (o, v) in old.iter_mut().zip(&new) {
                diff = diff.max((*o - v).abs());
                size = size.max(v.abs());
            }
            *old = new;
        }
        z_stats = vec![Estimate { value: 0.0, se: 0.0 }; len * len];
        for (j, col) in z_cols.into_iter().enumerate() {
            for (i, (coef, est)) in col.into_iter().enumerate() {
                let targets = if j + 1 == n { vec![j, n] } else { vec![j] };
                for target in targets {
                    let slot = &mut beta_z[i * len + target];
                    for (o, v) in slot.iter_mut().zip(&coef) {
                        diff = diff.max((*o - v).abs());
                        size = size.max(v.abs());
                    }
                    slot.clone_from(&coef);
                    z_stats[i * len + target] = est;
                }
            }
        }
        // Z(t_N, t_N) also repeats its left neighbour on the diagonal.
        z_stats[n * len + n] = z_stats[(n - 1) * len + n];
        history.push(diff);
        if !(size <= cfg.picard.divergence_guard) {
            return Err(Error::PicardDiverged { iteration: history.len(), sup: size });
        }
        if diff <= cfg.picard.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::PicardStalled { iterations: history.len(), last_diff: *history.last().unwrap() });
    }

    let mut fitted = vec![0.0; paths * len];
    let mut tmp = vec![0.0; paths];
    for i in 0..len {
        bases[i].fitted(&beta_y[i], &mut tmp);
        for p in 0..paths {
            fitted[p * len + i] = tmp[p];
        }
    }
    let y_mean = xi.iter().map(|c| mean_estimate(c)).collect();
    let z = KernelTable::from_fn(*grid, |i, j| z_stats[i * len + j].value);
    let z_se = KernelTable::from_fn(*grid, |i, j| z_stats[i * len + j].se);
    Ok(LsmcResult { y: YField::Paths { nodes: len, values: fitted }, y_mean, z, z_se, history })
}

use super::delayed::DelayedOperator;
use crate::error::{Error, Result};
use crate::explicit::SolutionField;
use crate::girsanov::{estimate_under_q, mean_estimate, PathEnsemble, PathRef, SamplingMode};
use crate::kernel::{KernelSpec, KernelTable, TriangularGrid};
use crate::measure::DelayMeasure;
use crate::par;
use crate::terminal::{evaluate_f, TerminalFamily};

/// Node-wise residual of a candidate solution, with Monte Carlo standard errors
/// (all zero for deterministic data).
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProfile {
    pub values: Vec<f64>,
    pub se: Vec<f64>,
}

impl ResidualProfile {
    fn exact(values: Vec<f64>) -> Self {
        let se = vec![0.0; values.len()];
        Self { values, se }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// `max_i (|R_i| - k·SE_i)`: non-positive when every node is within `k` standard errors.
    pub fn sup_excess(&self, k: f64) -> f64 {
        self.values.iter().zip(&self.se).fold(f64::NEG_INFINITY, |a, (v, s)| a.max(v.abs() - k * s))
    }

    pub fn max_se(&self) -> f64 {
        self.se.iter().fold(0.0f64, |a, &s| a.max(s))
    }
}

/// `Y(t_i) - F̄(t_i) - ∫_{t_i}^T Φ(t_i,s) Y(s) ds` (trapezoid).
pub fn residual_reduced(y: &[f64], fbar: &[f64], phi: &KernelTable) -> Result<ResidualProfile> {
    let grid = phi.grid();
    check_len(grid, y)?;
    check_len(grid, fbar)?;
    Ok(ResidualProfile::exact(
        (0..=grid.n())
            .map(|i| y[i] - fbar[i] - grid.trapezoid(i, grid.n(), |j| phi.get(i, j) * y[j]))
            .collect(),
    ))
}

/// `Y(t_i) - f₀(t_i) - ∫_{t_i}^T ∫ G(t_i+u, s+u) Y(s+u) α(du) ds` for deterministic `F`.
pub fn residual_delayed(
    y: &[f64],
    fam: &TerminalFamily,
    k: &KernelSpec,
    m: &DelayMeasure,
    grid: &TriangularGrid,
) -> Result<ResidualProfile> {
    let TerminalFamily::Deterministic(f0) = fam else {
        return Err(Error::UnsupportedFamily("use residual_delayed_field for stochastic families"));
    };
    check_len(grid, y)?;
    let op = DelayedOperator::new(k, m, grid)?;
    let f: Vec<f64> = grid.nodes().iter().map(|&t| f0.eval(t)).collect();
    Ok(ResidualProfile::exact(op.residual(y, &f)))
}

fn check_len(grid: &TriangularGrid, v: &[f64]) -> Result<()> {
    if v.len() == grid.len() {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!("profile has {} nodes, grid {}", v.len(), grid.len())))
    }
}

fn z_on(field: &SolutionField, fixed: &Option<KernelTable>, path: &PathRef<'_>) -> KernelTable {
    match fixed {
        Some(t) => t.clone(),
        None => field.z.surface_on_path(path),
    }
}

/// `Σ_{k>=i} Z(t_i, t_k) ΔX_k` on one path.
fn ito_sum(z: &KernelTable, i: usize, increments: impl Fn(usize) -> f64) -> f64 {
    let n = z.grid().n();
    (i..n).map(|k| z.get(i, k) * increments(k)).sum()
}

fn deterministic_profile(field: &SolutionField, fam: &TerminalFamily) -> Result<(Vec<f64>, Vec<f64>)> {
    match (fam, field.y.profile()) {
        (TerminalFamily::Deterministic(f0), Some(y)) => {
            Ok((y.to_vec(), field.grid.nodes().iter().map(|&t| f0.eval(t)).collect()))
        }
        _ => Err(Error::Domain("field shape does not match the terminal family".into())),
    }
}

/// Reduced-equation residual of an explicit solution, path-wise with the `dW^Q` integral,
/// reported as `Q`-means.
pub fn residual_reduced_field(
    field: &SolutionField,
    fam: &TerminalFamily,
    phi: &KernelTable,
    ensemble: Option<&PathEnsemble>,
) -> Result<ResidualProfile> {
    let grid = field.grid;
    grid.ensure_same(phi.grid())?;
    if !fam.is_stochastic() {
        let (y, f) = deterministic_profile(field, fam)?;
        return residual_reduced(&y, &f, phi);
    }
    let e = ensemble.ok_or_else(|| Error::Domain("stochastic residual needs the ensemble".into()))?;
    let fixed = field.z.table();
    let rows = par::map_indices(e.len(), |p| {
        let path = e.path(p);
        let y = field.y.row(p);
        let z = z_on(field, &fixed, &path);
        (0..=grid.n())
            .map(|i| {
                y[i] - evaluate_f(fam, grid.node(i), &path) - grid.trapezoid(i, grid.n(), |j| phi.get(i, j) * y[j])
                    + ito_sum(&z, i, |k| path.dwq(k))
            })
            .collect::<Vec<_>>()
    });
    node_estimates(&rows, |col| estimate_under_q(e, col))
}

/// Delayed-equation residual of a candidate solution, path-wise with the `dW` integral,
/// reported as `P`-means (requires a `P`-mode ensemble).
pub fn residual_delayed_field(
    field: &SolutionField,
    fam: &TerminalFamily,
    k: &KernelSpec,
    m: &DelayMeasure,
    ensemble: Option<&PathEnsemble>,
) -> Result<ResidualProfile> {
    let grid = field.grid;
    if !fam.is_stochastic() {
        let (y, _) = deterministic_profile(field, fam)?;
        return residual_delayed(&y, fam, k, m, &grid);
    }
    let e = ensemble.ok_or_else(|| Error::Domain("stochastic residual needs the ensemble".into()))?;
    if e.mode() != SamplingMode::P {
        return Err(Error::Domain("delayed residual is a P-expectation; sample in P mode".into()));
    }
    let op = DelayedOperator::new(k, m, &grid)?.with_z(k);
    let fixed = field.z.table();
    let fixed_gz = fixed.as_ref().map(|z| op.apply_z(z));
    let rows = par::map_indices(e.len(), |p| {
        let path = e.path(p);
        let y = field.y.row(p);
        let z = z_on(field, &fixed, &path);
        let gy = op.apply_y(y);
        let gz = match &fixed_gz {
            Some(v) => v.clone(),
            None => op.apply_z(&z),
        };
        (0..=grid.n())
            .map(|i| y[i] - evaluate_f(fam, grid.node(i), &path) - gy[i] - gz[i] + ito_sum(&z, i, |k| path.dw[k]))
            .collect::<Vec<_>>()
    });
    node_estimates(&rows, |col| Ok(mean_estimate(col)))
}

fn node_estimates(
    rows: &[Vec<f64>],
    estimate: impl Fn(&[f64]) -> Result<crate::girsanov::Estimate>,
) -> Result<ResidualProfile> {
    let nodes = rows.first().map_or(0, |r| r.len());
    let mut values = Vec::with_capacity(nodes);
    let mut se = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
        let est = estimate(&col)?;
        values.push(est.value);
        se.push(est.se);
    }
    Ok(ResidualProfile { values, se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explicit::{solve, YField};
    use crate::girsanov::{drift, sample_paths};
    use crate::kernel::{build_phi, resolvent, ScalarFn};
    use crate::terminal::GaussianKernel;

    #[test]
    fn identity_cases() {
        let grid = TriangularGrid::new(1.0, 10).unwrap();
        let f: Vec<f64> = grid.nodes().iter().map(|t| 2.0 - t).collect();
        assert_eq!(residual_reduced(&f, &f, &KernelTable::zeros(grid)).unwrap().sup(), 0.0);
        let fam = TerminalFamily::Deterministic(ScalarFn::Constant(1.0));
        let r = residual_delayed(&[0.0; 11], &fam, &KernelSpec::constant(0.7, 0.0), &DelayMeasure::uniform(1.0).unwrap(), &grid).unwrap();
        assert!(r.values.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn explicit_y_solves_both_equations_for_dirac_zero() {
        let grid = TriangularGrid::new(1.0, 100).unwrap();
        let m = DelayMeasure::dirac(1.0, 0.0).unwrap();
        let k = KernelSpec::constant(0.5, 0.0);
        let phi = build_phi(&m, &k, &grid).unwrap();
        let psi = resolvent(&phi, 1e-12).unwrap();
        let fam = TerminalFamily::Deterministic(ScalarFn::Constant(1.0));
        let field = solve(&fam, &phi, &psi, &drift(&m, &k, &grid).unwrap(), None).unwrap();
        let tol = 10.0 * grid.step().powi(2);
        assert!(residual_reduced_field(&field, &fam, &phi, None).unwrap().sup() < tol);
        assert!(residual_delayed_field(&field, &fam, &k, &m, None).unwrap().sup() < tol);
    }

    #[test]
    fn stochastic_reduced_residual_is_small() {
        let grid = TriangularGrid::new(1.0, 20).unwrap();
        let m = DelayMeasure::dirac(1.0, 0.0).unwrap();
        let k = KernelSpec::constant(0.3, 0.2);
        let phi = build_phi(&m, &k, &grid).unwrap();
        let psi = resolvent(&phi, 1e-12).unwrap();
        let b = drift(&m, &k, &grid).unwrap();
        let e = sample_paths(&b, 2000, 11, SamplingMode::P).unwrap();
        let fam = TerminalFamily::GaussianLinear { f0: ScalarFn::Zero, phi: GaussianKernel::constant(1.0) };
        let field = solve(&fam, &phi, &psi, &b, Some(&e)).unwrap();
        assert!(matches!(field.y, YField::Paths { .. }));
        let r = residual_reduced_field(&field, &fam, &phi, Some(&e)).unwrap();
        assert!(r.sup_excess(3.0) <= 10.0 * grid.step().powi(2), "{r:?}");
        let d = residual_delayed_field(&field, &fam, &k, &m, Some(&e)).unwrap();
        assert!(d.sup_excess(3.0) <= 10.0 * grid.step().powi(2), "{d:?}");
    }
}

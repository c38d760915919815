//! Explicit solution formulas.
//!
//! `Y(t) = E^Q[F(t) + ∫_t^T Ψ(t,r) F(r) dr | F_t]`,
//! `U(t) = F(t) + ∫_t^T α((r-T,0]) G(t,r) Y(r) dr - Y(t)`,
//! `Z(t,s) = E^Q[D_s F(t) + ∫_s^T Φ(t,r) D_s Y(r) dr | F_s]` (deterministic `g`).
//!
//! Conditional expectations are taken in closed form per terminal family, so
//! the only Monte Carlo error left in a [`SolutionField`] comes from averaging
//! over paths.

use crate::error::{Error, Result};
use crate::girsanov::{estimate_under_q, mean_estimate, DriftFunction, Estimate, PathEnsemble, PathRef};
use crate::kernel::{KernelSpec, KernelTable, ResolventTable, TriangularGrid};
use crate::measure::DelayMeasure;
use crate::par;
use crate::quadrature::GaussHermite;
use crate::terminal::{check_family_growth, evaluate_f, state_conditionals, TerminalFamily, TerminalTerm};

/// How `∂ₓ` of a Gaussian conditional is obtained for terminal functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    #[default]
    Analytic,
    /// Central difference in the conditioning state with step `1e-4 (1 + |x|)`.
    FiniteDifference,
}

/// `Y` on the grid: one profile for deterministic `F`, else one row per path.
#[derive(Debug, Clone, PartialEq)]
pub enum YField {
    Profile(Vec<f64>),
    Paths { nodes: usize, values: Vec<f64> },
}

impl YField {
    pub fn nodes(&self) -> usize {
        match self {
            YField::Profile(v) => v.len(),
            YField::Paths { nodes, .. } => *nodes,
        }
    }

    /// Number of rows (1 for a deterministic profile).
    pub fn rows(&self) -> usize {
        match self {
            YField::Profile(_) => 1,
            YField::Paths { nodes, values } => values.len() / nodes,
        }
    }

    #[inline]
    pub fn at(&self, p: usize, i: usize) -> f64 {
        match self {
            YField::Profile(v) => v[i],
            YField::Paths { nodes, values } => values[p * nodes + i],
        }
    }

    pub fn row(&self, p: usize) -> &[f64] {
        match self {
            YField::Profile(v) => v,
            YField::Paths { nodes, values } => &values[p * nodes..(p + 1) * nodes],
        }
    }

    pub fn profile(&self) -> Option<&[f64]> {
        match self {
            YField::Profile(v) => Some(v),
            YField::Paths { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            YField::Profile(v) => v.iter().all(|x| x.is_finite()),
            YField::Paths { values, .. } => values.iter().all(|x| x.is_finite()),
        }
    }

    /// `E^Q[Y(t_i)]` per node, with standard errors (zero for a profile).
    pub fn q_means(&self, ensemble: Option<&PathEnsemble>) -> Result<Vec<Estimate>> {
        match (self, ensemble) {
            (YField::Profile(v), _) => Ok(v.iter().map(|&value| Estimate { value, se: 0.0 }).collect()),
            (YField::Paths { nodes, .. }, Some(e)) => (0..*nodes)
                .map(|i| {
                    let col: Vec<f64> = (0..e.len()).map(|p| self.at(p, i)).collect();
                    estimate_under_q(e, &col)
                })
                .collect(),
            (YField::Paths { .. }, None) => Err(Error::Domain("path field needs its ensemble".into())),
        }
    }
}

/// `Z(t_i, s_j)` for `i <= j`.
#[derive(Debug, Clone)]
pub enum ZField {
    Zero(TriangularGrid),
    Table(KernelTable),
    State(StateZ),
}

/// `Z(t_i, s_j) = Σ_m A_m(i,j) E^Q[k_m'(W(T)) | W(s_j)]`, which depends on the path through `W(s_j)`.
#[derive(Debug, Clone)]
pub struct StateZ {
    drift: DriftFunction,
    terms: Vec<TerminalTerm>,
    coeffs: Vec<KernelTable>,
    mode: DerivativeMode,
}

impl StateZ {
    /// `E^Q[k_m'(W(T)) | W(t_j) = x]` for every term.
    fn derivative_conditionals(&self, x: f64, j: usize) -> Vec<f64> {
        match self.mode {
            DerivativeMode::Analytic => state_conditionals(&self.terms, x, &self.drift, j, true),
            DerivativeMode::FiniteDifference => {
                let step = 1e-4 * (1.0 + x.abs());
                let up = state_conditionals(&self.terms, x + step, &self.drift, j, false);
                let down = state_conditionals(&self.terms, x - step, &self.drift, j, false);
                up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * step)).collect()
            }
        }
    }

    pub fn at_state(&self, i: usize, j: usize, x: f64) -> f64 {
        let d = self.derivative_conditionals(x, j);
        self.coeffs.iter().zip(&d).map(|(a, dk)| a.get(i, j) * dk).sum()
    }
}

impl ZField {
    pub fn grid(&self) -> &TriangularGrid {
        match self {
            ZField::Zero(g) => g,
            ZField::Table(t) => t.grid(),
            ZField::State(s) => s.drift.grid(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, ZField::State(_))
    }

    /// Deterministic surface, if `Z` does not depend on the path.
    pub fn table(&self) -> Option<KernelTable> {
        match self {
            ZField::Zero(g) => Some(KernelTable::zeros(*g)),
            ZField::Table(t) => Some(t.clone()),
            ZField::State(_) => None,
        }
    }

    /// The surface realized on one path.
    pub fn surface_on_path(&self, path: &PathRef<'_>) -> KernelTable {
        match self {
            ZField::State(s) => {
                let grid = *s.drift.grid();
                let conds: Vec<Vec<f64>> =
                    (0..=grid.n()).map(|j| s.derivative_conditionals(path.w_at(j), j)).collect();
                KernelTable::from_fn(grid, |i, j| {
                    s.coeffs.iter().zip(&conds[j]).map(|(a, dk)| a.get(i, j) * dk).sum()
                })
            }
            _ => self.table().unwrap(),
        }
    }

    /// Ensemble mean of the surface under `Q`.
    pub fn mean_surface(&self, ensemble: &PathEnsemble) -> Result<KernelTable> {
        self.averaged_surface(ensemble, |col| estimate_under_q(ensemble, col).map(|e| e.value))
    }

    /// Plain average of the surface over the ensemble's own paths.
    pub fn path_mean_surface(&self, ensemble: &PathEnsemble) -> Result<KernelTable> {
        self.averaged_surface(ensemble, |col| Ok(mean_estimate(col).value))
    }

    fn averaged_surface(&self, ensemble: &PathEnsemble, mean: impl Fn(&[f64]) -> Result<f64>) -> Result<KernelTable> {
        match self {
            ZField::State(s) => {
                let grid = *s.drift.grid();
                // Only the state conditionals are random; average them per (term, node).
                let per_path = par::map_indices(ensemble.len(), |p| {
                    let path = ensemble.path(p);
                    (0..=grid.n()).map(|j| s.derivative_conditionals(path.w_at(j), j)).collect::<Vec<_>>()
                });
                let mut means = vec![vec![0.0; s.terms.len()]; grid.len()];
                for (j, row) in means.iter_mut().enumerate() {
                    for (m, v) in row.iter_mut().enumerate() {
                        let col: Vec<f64> = per_path.iter().map(|c| c[j][m]).collect();
                        *v = mean(&col)?;
                    }
                }
                Ok(KernelTable::from_fn(grid, |i, j| {
                    s.coeffs.iter().zip(&means[j]).map(|(a, dk)| a.get(i, j) * dk).sum()
                }))
            }
            _ => Ok(self.table().unwrap()),
        }
    }
}

/// The pair `(Y, Z)` from the explicit formulas.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub grid: TriangularGrid,
    pub y: YField,
    pub z: ZField,
    pub family: &'static str,
}

fn row_trapezoid(grid: &TriangularGrid, i: usize, f: impl Fn(usize) -> f64) -> f64 {
    grid.trapezoid(i, grid.n(), f)
}

/// `f(t_i) + ∫_{t_i}^T Ψ(t_i, r) f(r) dr` for a deterministic profile.
fn resolve_profile(psi: &ResolventTable, f: &[f64]) -> Vec<f64> {
    let grid = *psi.grid();
    (0..=grid.n())
        .map(|i| f[i] + row_trapezoid(&grid, i, |j| psi.get(i, j) * f[j]))
        .collect()
}

/// `D_{t_k} Y(t_i)` for the Gaussian-linear family: `φ(t_i,t_k) + ∫_{t_i}^T Ψ(t_i,v) φ(v,t_k) dv`, `k <= i`.
fn gaussian_sensitivities(fam: &TerminalFamily, psi: &ResolventTable) -> KernelTable {
    let grid = *psi.grid();
    let TerminalFamily::GaussianLinear { phi, .. } = fam else {
        return KernelTable::zeros(grid);
    };
    // Stored transposed: entry (k, i) holds D_{t_k} Y(t_i).
    KernelTable::from_fn(grid, |k, i| {
        let s = grid.node(k);
        phi.eval(grid.node(i), s) + row_trapezoid(&grid, i, |j| psi.get(i, j) * phi.eval(grid.node(j), s))
    })
}

/// `Y` from the resolvent formula.
pub fn solve_y(
    fam: &TerminalFamily,
    psi: &ResolventTable,
    drift: &DriftFunction,
    grid: &TriangularGrid,
    ensemble: Option<&PathEnsemble>,
) -> Result<YField> {
    grid.ensure_same(psi.grid())?;
    grid.ensure_same(drift.grid())?;
    let n = grid.n();
    match fam {
        TerminalFamily::Deterministic(f0) => {
            let f: Vec<f64> = grid.nodes().iter().map(|&t| f0.eval(t)).collect();
            Ok(YField::Profile(resolve_profile(psi, &f)))
        }
        TerminalFamily::GaussianLinear { f0, phi } => {
            let e = require_ensemble(ensemble, grid, drift)?;
            let h = grid.step();
            // Deterministic part: f0(t_j) + Σ_{k>=i} φ(t_j,t_k) b_k Δ, resolved along each row.
            let base: Vec<f64> = (0..=n)
                .map(|i| {
                    let cond = |j: usize| {
                        let tj = grid.node(j);
                        f0.eval(tj) + (i..n).map(|k| phi.eval(tj, grid.node(k)) * drift.at(k) * h).sum::<f64>()
                    };
                    cond(i) + row_trapezoid(grid, i, |j| psi.get(i, j) * cond(j))
                })
                .collect();
            let sens = gaussian_sensitivities(fam, psi);
            let rows = par::map_indices(e.len(), |p| {
                let path = e.path(p);
                (0..=n)
                    .map(|i| base[i] + (0..i).map(|k| sens.get(k, i) * path.dw[k]).sum::<f64>())
                    .collect::<Vec<_>>()
            });
            Ok(YField::Paths { nodes: n + 1, values: rows.concat() })
        }
        TerminalFamily::TerminalFunction { terms, .. } => {
            let e = require_ensemble(ensemble, grid, drift)?;
            check_family_growth(fam, grid)?;
            let weights = resolved_time_weights(terms, psi);
            let rows = par::map_indices(e.len(), |p| {
                let path = e.path(p);
                (0..=n)
                    .map(|i| {
                        let c = state_conditionals(terms, path.w_at(i), drift, i, false);
                        weights.iter().zip(&c).map(|(b, ck)| b[i] * ck).sum::<f64>()
                    })
                    .collect::<Vec<_>>()
            });
            Ok(YField::Paths { nodes: n + 1, values: rows.concat() })
        }
    }
}

/// `B_m(i) = f_m(t_i) + ∫_{t_i}^T Ψ(t_i, v) f_m(v) dv` per term.
fn resolved_time_weights(terms: &[TerminalTerm], psi: &ResolventTable) -> Vec<Vec<f64>> {
    let grid = psi.grid();
    terms
        .iter()
        .map(|m| {
            let f: Vec<f64> = grid.nodes().iter().map(|&t| m.time.eval(t)).collect();
            resolve_profile(psi, &f)
        })
        .collect()
}

fn require_ensemble<'a>(
    ensemble: Option<&'a PathEnsemble>,
    grid: &TriangularGrid,
    drift: &DriftFunction,
) -> Result<&'a PathEnsemble> {
    let e = ensemble.ok_or_else(|| Error::Domain("stochastic family needs a path ensemble".into()))?;
    grid.ensure_same(e.grid())?;
    if e.drift() != drift {
        return Err(Error::GridMismatch("ensemble was generated with a different drift".into()));
    }
    Ok(e)
}

/// Kernel `α((r-T,0]) G(t,r)` of the martingale residual `U`.
pub fn residual_kernel(m: &DelayMeasure, k: &KernelSpec, grid: &TriangularGrid) -> Result<KernelTable> {
    m.validate()?;
    grid.ensure_horizon(m.horizon())?;
    let open = (0..=grid.n())
        .map(|j| m.mass_left_open(grid.lag_from_end(j)))
        .collect::<Result<Vec<_>>>()?;
    if let Some((phi, _)) = &k.phi_direct {
        let closed = (0..=grid.n())
            .map(|j| m.mass_closed(grid.lag_from_end(j)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(KernelTable::from_fn(*grid, |i, j| {
            if closed[j] > 0.0 {
                open[j] / closed[j] * phi.eval(grid.node(i), grid.node(j))
            } else {
                0.0
            }
        }));
    }
    Ok(KernelTable::from_fn(*grid, |i, j| open[j] * k.g_big(grid.node(i), grid.node(j))))
}

/// `U(t)` per path (or as a profile for deterministic `F`).
pub fn compute_u(
    fam: &TerminalFamily,
    y: &YField,
    m: &DelayMeasure,
    k: &KernelSpec,
    grid: &TriangularGrid,
    ensemble: Option<&PathEnsemble>,
) -> Result<YField> {
    if y.nodes() != grid.len() {
        return Err(Error::GridMismatch(format!("Y has {} nodes, grid {}", y.nodes(), grid.len())));
    }
    // `α((r-T,0])` jumps where `r-T` crosses an atom. Each trapezoid panel takes the one-sided
    // limits: the open mass at its left end, the closed mass (the `Φ` weight) at its right end.
    let open = residual_kernel(m, k, grid)?;
    let closed = crate::kernel::build_phi(m, k, grid)?;
    let n = grid.n();
    let h = grid.step();
    let u_row = |yrow: &[f64], f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (0..=n)
            .map(|i| {
                let integral = par::ordered_sum(
                    (i..n).map(|j| 0.5 * h * (open.get(i, j) * yrow[j] + closed.get(i, j + 1) * yrow[j + 1])),
                );
                f(grid.node(i)) + integral - yrow[i]
            })
            .collect()
    };
    match (fam, y) {
        (TerminalFamily::Deterministic(f0), YField::Profile(v)) => Ok(YField::Profile(u_row(v, &|t| f0.eval(t)))),
        (_, YField::Paths { .. }) => {
            let e = ensemble.ok_or_else(|| Error::Domain("stochastic family needs a path ensemble".into()))?;
            if y.rows() != e.len() {
                return Err(Error::GridMismatch("Y rows do not match the ensemble".into()));
            }
            let rows = par::map_indices(e.len(), |p| {
                let path = e.path(p);
                u_row(y.row(p), &|t| evaluate_f(fam, t, &path))
            });
            Ok(YField::Paths { nodes: n + 1, values: rows.concat() })
        }
        _ => Err(Error::Domain("Y field shape does not match the terminal family".into())),
    }
}

/// Second term of the general `Z` formula, `-U(t) ∫_s^T D_s g(r) dW^Q(r)`.
///
/// `g` is a deterministic function, so `D_s g ≡ 0` and this contributes nothing.
fn drift_sensitivity_term(_u: f64) -> f64 {
    0.0
}

/// `Z` from the Clark–Ocone form of the explicit solution.
pub fn solve_z(
    fam: &TerminalFamily,
    phi: &KernelTable,
    psi: &ResolventTable,
    drift: &DriftFunction,
    grid: &TriangularGrid,
) -> Result<ZField> {
    solve_z_with(fam, phi, psi, drift, grid, DerivativeMode::Analytic)
}

pub fn solve_z_with(
    fam: &TerminalFamily,
    phi: &KernelTable,
    psi: &ResolventTable,
    drift: &DriftFunction,
    grid: &TriangularGrid,
    mode: DerivativeMode,
) -> Result<ZField> {
    grid.ensure_same(phi.grid())?;
    grid.ensure_same(psi.grid())?;
    grid.ensure_same(drift.grid())?;
    match fam {
        TerminalFamily::Deterministic(_) => Ok(ZField::Zero(*grid)),
        TerminalFamily::GaussianLinear { phi: integrand, .. } => {
            let sens = gaussian_sensitivities(fam, psi);
            Ok(ZField::Table(KernelTable::from_fn(*grid, |i, j| {
                integrand.eval(grid.node(i), grid.node(j))
                    + row_trapezoid(grid, j, |l| phi.get(i, l) * sens.get(j, l))
                    + drift_sensitivity_term(0.0)
            })))
        }
        TerminalFamily::TerminalFunction { terms, .. } => {
            check_family_growth(fam, grid)?;
            let b = resolved_time_weights(terms, psi);
            let coeffs = terms
                .iter()
                .zip(&b)
                .map(|(m, bm)| {
                    KernelTable::from_fn(*grid, |i, j| {
                        m.time.eval(grid.node(i)) + row_trapezoid(grid, j, |l| phi.get(i, l) * bm[l])
                    })
                })
                .collect();
            Ok(ZField::State(StateZ { drift: drift.clone(), terms: terms.clone(), coeffs, mode }))
        }
    }
}

/// Assembles `(Y, Z)` for one configuration.
pub fn solve(
    fam: &TerminalFamily,
    phi: &KernelTable,
    psi: &ResolventTable,
    drift: &DriftFunction,
    ensemble: Option<&PathEnsemble>,
) -> Result<SolutionField> {
    let grid = *phi.grid();
    let y = solve_y(fam, psi, drift, &grid, ensemble)?;
    if !y.is_finite() {
        return Err(Error::Domain("explicit Y is not finite".into()));
    }
    let z = solve_z(fam, phi, psi, drift, &grid)?;
    Ok(SolutionField { grid, y, z, family: fam.name() })
}

/// Finite differences of `Z` in `t` and the double integral of their squares.
#[derive(Debug, Clone)]
pub struct Smoothness {
    pub dzdt: KernelTable,
    /// Trapezoid value of `∫_0^T ∫_t^T (∂Z/∂t)² ds dt`.
    pub integral: f64,
    pub non_finite: usize,
}

pub fn smoothness_diagnostics(z: &KernelTable, grid: &TriangularGrid) -> Result<Smoothness> {
    grid.ensure_same(z.grid())?;
    let h = grid.step();
    let dzdt = KernelTable::from_fn(*grid, |i, j| {
        if j == 0 {
            // A single point in the column; no difference is available.
            return 0.0;
        }
        if i == 0 {
            (z.get(1, j) - z.get(0, j)) / h
        } else if i == j {
            (z.get(j, j) - z.get(j - 1, j)) / h
        } else {
            (z.get(i + 1, j) - z.get(i - 1, j)) / (2.0 * h)
        }
    });
    let non_finite = (0..=grid.n())
        .flat_map(|i| (i..=grid.n()).map(move |j| (i, j)))
        .filter(|&(i, j)| !dzdt.get(i, j).is_finite())
        .count();
    let integral = triangle_integral(grid, |i, j| dzdt.get(i, j).powi(2));
    Ok(Smoothness { dzdt, integral, non_finite })
}

/// `∫_0^T ∫_t^T f ds dt` by nested trapezoids on the triangle.
pub fn triangle_integral(grid: &TriangularGrid, f: impl Fn(usize, usize) -> f64) -> f64 {
    let inner: Vec<f64> = (0..=grid.n()).map(|i| row_trapezoid(grid, i, |j| f(i, j))).collect();
    grid.trapezoid(0, grid.n(), |i| inner[i])
}

/// Weighted norms of the solution pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub beta: f64,
    pub norm_h1: f64,
    pub norm_h2: f64,
    pub norm_s2: f64,
}

/// Discrete `H₁`, `H₂` and `S²` norms. Means are taken over the ensemble paths.
pub fn norms(field: &SolutionField, beta: f64, ensemble: Option<&PathEnsemble>) -> Result<NormReport> {
    let grid = field.grid;
    let weight = |i: usize| (beta * grid.node(i)).exp();
    // ∫_{-T}^0 e^{βs} ds, where Y is frozen at Y(0).
    let past = if beta == 0.0 { grid.horizon() } else { (1.0 - (-beta * grid.horizon()).exp()) / beta };
    let rows = field.y.rows();
    if rows > 1 && ensemble.map(|e| e.len()) != Some(rows) {
        return Err(Error::Domain("norms of a path field need its ensemble".into()));
    }
    let per_row = par::map_indices(rows, |p| {
        let y = field.y.row(p);
        let h1 = y[0] * y[0] * past + grid.trapezoid(0, grid.n(), |i| weight(i) * y[i] * y[i]);
        let s2 = (0..=grid.n()).map(|i| weight(i) * y[i] * y[i]).fold(0.0f64, f64::max);
        let z = match (&field.z, ensemble) {
            (ZField::State(_), Some(e)) => field.z.surface_on_path(&e.path(p)),
            _ => KernelTable::zeros(grid),
        };
        let h2 = match &field.z {
            ZField::State(_) => triangle_integral(&grid, |i, j| weight(j) * z.get(i, j).powi(2)),
            _ => 0.0,
        };
        (h1, h2, s2)
    });
    let h2_det = match field.z.table() {
        Some(t) => triangle_integral(&grid, |i, j| weight(j) * t.get(i, j).powi(2)),
        None => 0.0,
    };
    let count = rows as f64;
    let h1 = par::ordered_sum(per_row.iter().map(|r| r.0)) / count;
    let h2 = par::ordered_sum(per_row.iter().map(|r| r.1)) / count + h2_det;
    let s2 = par::ordered_sum(per_row.iter().map(|r| r.2)) / count;
    let report = NormReport { beta, norm_h1: h1.sqrt(), norm_h2: h2.sqrt(), norm_s2: s2 };
    if [report.norm_h1, report.norm_h2, report.norm_s2].iter().all(|v| v.is_finite() && *v >= 0.0) {
        Ok(report)
    } else {
        Err(Error::Domain("non-finite norm".into()))
    }
}

/// Gauss–Hermite conditional of a generic function of `W(T)`, exposed for cross-checks.
pub fn gaussian_conditional(x: f64, shift: f64, var: f64, f: impl Fn(f64) -> f64) -> f64 {
    GaussHermite::standard().expect(x + shift, var.max(0.0).sqrt(), f)
}

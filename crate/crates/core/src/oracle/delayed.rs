//! Discretization of the delayed generator
//! `∫_t^T ∫_{[-T,0]} [G(t+u, s+u) Y(s+u) + g(s+u) Z(t+u, s+u)] α(du) ds`.
//!
//! `s` runs over grid nodes with trapezoid weights; `u` runs over the measure's
//! quadrature points (atoms exactly, uniform parts by a 65-node trapezoid).
//! Shifting both arguments by `u` moves along a diagonal of the grid, so
//! off-grid values are interpolated linearly along that diagonal.

use crate::error::Result;
use crate::kernel::{KernelSpec, KernelTable, TriangularGrid};
use crate::measure::DelayMeasure;
use crate::par;

/// Trapezoid nodes used for the uniform part of the delay measure.
pub const UNIFORM_QUADRATURE_NODES: usize = 65;

/// Sparse row of `(a, b, coefficient)` entries multiplying `Z(t_a, t_b)`.
pub type ZRow = Vec<(usize, usize, f64)>;

/// Linear maps `Y ↦ generator_Y` and `Z ↦ generator_Z` on the grid.
#[derive(Debug, Clone)]
pub struct DelayedOperator {
    grid: TriangularGrid,
    points: Vec<(f64, f64)>,
    y_op: Vec<f64>,
    z_op: Option<Vec<ZRow>>,
}

/// Grid offset `-u/Δ` split into whole steps and a fraction.
fn diagonal_shift(grid: &TriangularGrid, u: f64) -> (usize, f64) {
    let p = (-u / grid.step()).max(0.0);
    let r = p.round();
    if (p - r).abs() < 1e-9 {
        (r as usize, 0.0)
    } else {
        (p.floor() as usize, p - p.floor())
    }
}

/// `t_i + u` as a time, snapping round-off at the origin.
fn shifted(grid: &TriangularGrid, i: usize, u: f64) -> f64 {
    let x = grid.node(i) + u;
    if x.abs() < 1e-12 * grid.horizon().max(1.0) {
        0.0
    } else {
        x
    }
}

impl DelayedOperator {
    /// The `Y` part only (enough for deterministic terminal families).
    pub fn new(k: &KernelSpec, m: &DelayMeasure, grid: &TriangularGrid) -> Result<Self> {
        m.validate()?;
        grid.ensure_horizon(m.horizon())?;
        Ok(Self::from_points(k, m.quadrature_points(UNIFORM_QUADRATURE_NODES), grid))
    }

    /// Same construction for an explicit list of delay points `(u, weight)`.
    pub fn from_points(k: &KernelSpec, points: Vec<(f64, f64)>, grid: &TriangularGrid) -> Self {
        let n = grid.n();
        let rows = par::map_indices(n + 1, |i| {
            let mut row = vec![0.0; n + 1];
            for j in i..=n {
                let wj = grid.trap_weight(i, n, j);
                if wj == 0.0 {
                    continue;
                }
                for &(u, wu) in &points {
                    let t = shifted(grid, i, u);
                    if t < 0.0 {
                        continue;
                    }
                    let coef = wj * wu * k.g_big(t, shifted(grid, j, u));
                    if coef == 0.0 {
                        continue;
                    }
                    let (lo, frac) = diagonal_shift(grid, u);
                    // Y(s) = Y(0) for s < 0.
                    row[j.saturating_sub(lo)] += coef * (1.0 - frac);
                    if frac > 0.0 {
                        row[j.saturating_sub(lo + 1)] += coef * frac;
                    }
                }
            }
            row
        });
        Self { grid: *grid, points, y_op: rows.concat(), z_op: None }
    }

    /// Adds the `Z` part, needed for stochastic terminal families.
    pub fn with_z(mut self, k: &KernelSpec) -> Self {
        let grid = self.grid;
        let n = grid.n();
        let points = &self.points;
        let rows = par::map_indices(n + 1, |i| {
            // buffer[l * (n+1) + j] multiplies Z(t_{i-l}, t_{j-l}).
            let mut buffer = vec![0.0; (i + 1) * (n + 1)];
            for j in i..=n {
                let wj = grid.trap_weight(i, n, j);
                if wj == 0.0 {
                    continue;
                }
                for &(u, wu) in points {
                    if shifted(&grid, i, u) < 0.0 {
                        continue;
                    }
                    let coef = wj * wu * k.g_small(shifted(&grid, j, u));
                    if coef == 0.0 {
                        continue;
                    }
                    let (lo, frac) = diagonal_shift(&grid, u);
                    buffer[lo * (n + 1) + j] += coef * (1.0 - frac);
                    if frac > 0.0 && lo < i {
                        buffer[(lo + 1) * (n + 1) + j] += coef * frac;
                    }
                }
            }
            buffer
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(idx, &c)| {
                    let (l, j) = (idx / (n + 1), idx % (n + 1));
                    (i - l, j - l, c)
                })
                .collect::<Vec<_>>()
        });
        self.z_op = Some(rows);
        self
    }

    pub fn grid(&self) -> &TriangularGrid {
        &self.grid
    }

    pub fn has_z(&self) -> bool {
        self.z_op.is_some()
    }

    /// Dense `Y` coefficients, row-major `(N+1) x (N+1)`.
    pub fn y_matrix(&self) -> &[f64] {
        &self.y_op
    }

    /// Sparse `Z` coefficients per row: `(a, b, c)` multiplies `Z(t_a, t_b)`.
    pub fn z_rows(&self) -> Option<&[ZRow]> {
        self.z_op.as_deref()
    }

    /// `∫_t^T ∫ G(t+u, s+u) Y(s+u) α(du) ds` at every node.
    pub fn apply_y(&self, y: &[f64]) -> Vec<f64> {
        let len = self.grid.len();
        (0..len).map(|i| par::dot(&self.y_op[i * len..(i + 1) * len], y)).collect()
    }

    /// `∫_t^T ∫ g(s+u) Z(t+u, s+u) α(du) ds` at every node, or zeros without a `Z` part.
    pub fn apply_z(&self, z: &KernelTable) -> Vec<f64> {
        match &self.z_op {
            None => vec![0.0; self.grid.len()],
            Some(rows) => rows.iter().map(|r| r.iter().map(|&(a, b, c)| c * z.get(a, b)).sum()).collect(),
        }
    }

    /// `Y - f - generator_Y(Y)` for deterministic data.
    pub fn residual(&self, y: &[f64], f: &[f64]) -> Vec<f64> {
        let gy = self.apply_y(y);
        y.iter().zip(f).zip(&gy).map(|((y, f), g)| y - f - g).collect()
    }
}

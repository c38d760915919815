use crate::error::{Error, Result};
use crate::kernel::KernelTable;

/// Smallest admissible `|1 - (Δ/2) Φ(t_i, t_i)|` before a step is declared singular.
pub const MIN_PIVOT: f64 = 1e-8;

/// Solves `Y(t) = F̄(t) + ∫_t^T Φ(t,s) Y(s) ds` by backward implicit-trapezoid marching.
pub fn solve_reduced_collocation(fbar: &[f64], phi: &KernelTable) -> Result<Vec<f64>> {
    let grid = phi.grid();
    let n = grid.n();
    if fbar.len() != grid.len() {
        return Err(Error::GridMismatch(format!("profile has {} nodes, grid {}", fbar.len(), grid.len())));
    }
    let h = grid.step();
    let mut y = vec![0.0; n + 1];
    y[n] = fbar[n];
    for i in (0..n).rev() {
        let pivot = 1.0 - 0.5 * h * phi.get(i, i);
        if pivot.abs() < MIN_PIVOT {
            return Err(Error::SingularStep { node: i, pivot });
        }
        let tail: f64 = (i + 1..=n).map(|j| grid.trap_weight(i, n, j) * phi.get(i, j) * y[j]).sum();
        y[i] = (fbar[i] + tail) / pivot;
    }
    Ok(y)
}

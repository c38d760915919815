//! Independent solvers used to validate the explicit formulas.

mod collocation;
mod delayed;
mod lsmc;
mod picard;
mod residual;

pub use collocation::{solve_reduced_collocation, MIN_PIVOT};
pub use delayed::{DelayedOperator, UNIFORM_QUADRATURE_NODES};
pub use lsmc::{solve_delayed_lsmc, LsmcConfig, LsmcResult, MAX_CONDITION};
pub use picard::{iterate, picard_trace, solve_delayed_picard, PicardConfig, PicardStatus, PicardTrace};
pub use residual::{residual_delayed, residual_delayed_field, residual_reduced, residual_reduced_field, ResidualProfile};

use crate::kernel::KernelSpec;

/// Lipschitz constant of the delayed generator, `2 max(C_G², C_g²)`.
pub fn lipschitz_constant(k: &KernelSpec) -> f64 {
    2.0 * (k.bound_big_g * k.bound_big_g).max(k.bound_small_g * k.bound_small_g)
}

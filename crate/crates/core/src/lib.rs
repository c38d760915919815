//! Explicit solution of linear backward stochastic Volterra integral equations
//! with time-delayed generators, together with independent numerical oracles.
//!
//! The pipeline is: a [`measure::DelayMeasure`] and generator data
//! [`kernel::KernelSpec`] give the reduced kernel `Φ` and its resolvent `Ψ`
//! ([`kernel`]); the drift `α((s-T,0]) g(s)` defines the equivalent measure `Q`
//! ([`girsanov`]); the free term `F` ([`terminal`]) is then pushed through the
//! explicit formulas for `Y` and `Z` ([`explicit`]) and cross-checked against
//! collocation, Picard and regression solvers ([`oracle`]).

// Input checks are written as `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod explicit;
pub mod girsanov;
pub mod harness;
pub mod kernel;
pub mod measure;
pub mod oracle;
pub mod par;
pub mod quadrature;
pub mod terminal;

pub use error::{Error, Result};

//! Reduced kernel `Φ`, its Volterra powers `Φ⁽ⁿ⁾` and the resolvent `Ψ` on a triangular grid.

mod grid;
mod reference;
mod spec;
mod table;

pub use grid::TriangularGrid;
pub use reference::{
    example33_reference, factorial_remainder, iterated_kernel_bound, resolvent_remainder, tail_bound,
    Example33Variant,
};
pub use spec::{KernelFn, KernelSpec, ScalarFn, TabulatedKernel};
pub use table::{
    build_phi, iterated_kernels, resolvent, resolvent_with_cap, truncation_order, volterra_compose,
    KernelTable, ResolventTable, DEFAULT_ORDER_CAP,
};

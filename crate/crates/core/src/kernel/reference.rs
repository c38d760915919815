//! Closed-form references: factorial tail bounds and the uniform-delay example.

/// `(C T)^n / n!`, the factorial bound stated for the iterated kernels.
pub fn tail_bound(c: f64, horizon: f64, n: usize) -> f64 {
    let x = c * horizon;
    (1..=n).fold(1.0, |acc, k| acc * x / k as f64)
}

/// `C^n T^{n-1} / (n-1)!`, the bound that `|Φ⁽ⁿ⁾| <= C^n (s-t)^{n-1} / (n-1)!` gives on `[0, T]`.
///
/// This is attained by constant kernels and is therefore the one used to
/// truncate the Neumann series.
pub fn iterated_kernel_bound(c: f64, horizon: f64, n: usize) -> f64 {
    assert!(n >= 1);
    c * tail_bound(c, horizon, n - 1)
}

/// Remainder `Σ_{n > order} term(n)` for a term sequence that eventually decays factorially.
fn remainder(order: usize, term: impl Fn(usize) -> f64) -> f64 {
    let mut terms = Vec::new();
    let mut n = order + 1;
    loop {
        let t = term(n);
        terms.push(t);
        // Past the peak the terms shrink at least geometrically; stop once negligible.
        if n > order + 8 && (t == 0.0 || t < 1e-18 * terms.iter().sum::<f64>().max(1e-300)) {
            break;
        }
        if n > order + 2000 {
            break;
        }
        n += 1;
    }
    terms.iter().rev().sum()
}

/// `Σ_{n > order} (C T)^n / n!`.
pub fn factorial_remainder(c: f64, horizon: f64, order: usize) -> f64 {
    remainder(order, |n| tail_bound(c, horizon, n))
}

/// `Σ_{n > order} C^n T^{n-1} / (n-1)!`, a certified bound on the truncated resolvent.
pub fn resolvent_remainder(c: f64, horizon: f64, order: usize) -> f64 {
    remainder(order, |n| iterated_kernel_bound(c, horizon, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example33Variant {
    /// `(1 - e^{-u}) / 2`, as printed alongside the example.
    Printed,
    /// `(1 - e^{-2u}) / 2`, from inverting `Lψ / (1 - Lψ) = 1 / (x (x + 2))`.
    Derived,
}

/// Closed-form resolvent `Ψ(t, s) = ψ̄(s - t)` for `Φ(t, s) = (s - t) e^{-(s - t)}`.
pub fn example33_reference(variant: Example33Variant) -> fn(f64) -> f64 {
    match variant {
        Example33Variant::Printed => |u| 0.5 * (1.0 - (-u).exp()),
        Example33Variant::Derived => |u| 0.5 * (1.0 - (-2.0 * u).exp()),
    }
}

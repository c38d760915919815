//! Free-term processes `F(t)` with closed-form `Q`-conditional expectations
//! and Hida–Malliavin derivatives.
//!
//! Three families are supported:
//! * `Deterministic`: `F(t) = f0(t)`.
//! * `GaussianLinear`: `F(t) = f0(t) + ∫_0^T φ(t,u) dW(u)`, discretized with left-point sums.
//! * `TerminalFunction`: `F(t) = h(t, W(T))` with `h(t,x) = Σ_m f_m(t) k_m(x)`.

use crate::error::{Error, Result};
use crate::girsanov::{DriftFunction, PathRef};
use crate::kernel::{ScalarFn, TriangularGrid};
use crate::quadrature::GaussHermite;

/// Function of the state `x = W(T)`.
#[derive(Debug, Clone, PartialEq)]
pub enum StateFn {
    /// `Σ_k c_k x^k`
    Poly(Vec<f64>),
    /// `a exp(rate x)`
    Exp { a: f64, rate: f64 },
}

impl StateFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            StateFn::Poly(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck),
            StateFn::Exp { a, rate } => a * (rate * x).exp(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            StateFn::Poly(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * x + k as f64 * ck),
            StateFn::Exp { a, rate } => a * rate * (rate * x).exp(),
        }
    }

    /// Constants `(a, b)` with `|k(x)| <= a e^{b|x|}`.
    pub fn growth(&self) -> (f64, f64) {
        match self {
            StateFn::Poly(c) => {
                let mut fact = 1.0;
                let mut a = 0.0;
                for (k, ck) in c.iter().enumerate() {
                    if k > 0 {
                        fact *= k as f64;
                    }
                    a += ck.abs() * fact;
                }
                (a, if c.len() > 1 { 1.0 } else { 0.0 })
            }
            StateFn::Exp { a, rate } => (a.abs(), rate.abs()),
        }
    }
}

/// One separable term `f(t) k(x)` of a terminal function.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalTerm {
    pub time: ScalarFn,
    pub state: StateFn,
}

/// Deterministic integrand `φ(t, u) = a exp(-κ t - λ u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    pub a: f64,
    pub kappa: f64,
    pub lambda: f64,
}

impl GaussianKernel {
    pub fn constant(a: f64) -> Self {
        Self { a, kappa: 0.0, lambda: 0.0 }
    }

    pub fn eval(&self, t: f64, u: f64) -> f64 {
        self.a * (-self.kappa * t - self.lambda * u).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerminalFamily {
    Deterministic(ScalarFn),
    GaussianLinear { f0: ScalarFn, phi: GaussianKernel },
    TerminalFunction { terms: Vec<TerminalTerm>, growth: (f64, f64) },
}

impl TerminalFamily {
    /// Terminal function with growth constants derived from its terms.
    pub fn terminal_function(terms: Vec<TerminalTerm>, horizon: f64) -> Self {
        let mut a = 0.0;
        let mut b = 0.0f64;
        for term in &terms {
            let (ak, bk) = term.state.growth();
            a += term.time.sup_on(horizon) * ak;
            b = b.max(bk);
        }
        TerminalFamily::TerminalFunction { terms, growth: (a, b) }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TerminalFamily::Deterministic(_) => "deterministic",
            TerminalFamily::GaussianLinear { .. } => "gaussian_linear",
            TerminalFamily::TerminalFunction { .. } => "terminal_function",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, TerminalFamily::Deterministic(_))
    }

    /// Deterministic part `f0`, where the family has one.
    pub fn mean_profile(&self) -> Option<&ScalarFn> {
        match self {
            TerminalFamily::Deterministic(f0) | TerminalFamily::GaussianLinear { f0, .. } => Some(f0),
            TerminalFamily::TerminalFunction { .. } => None,
        }
    }

    /// `h(t, x)` for the terminal-function family.
    pub fn h(&self, t: f64, x: f64) -> f64 {
        match self {
            TerminalFamily::TerminalFunction { terms, .. } => {
                terms.iter().map(|m| m.time.eval(t) * m.state.eval(x)).sum()
            }
            _ => 0.0,
        }
    }

    /// `∂ₓ h(t, x)`.
    pub fn dh(&self, t: f64, x: f64) -> f64 {
        match self {
            TerminalFamily::TerminalFunction { terms, .. } => {
                terms.iter().map(|m| m.time.eval(t) * m.state.derivative(x)).sum()
            }
            _ => 0.0,
        }
    }

    /// Checks the declared growth envelope of `h` on the given points.
    pub fn check_growth(&self, t: f64, xs: impl IntoIterator<Item = f64>) -> Result<()> {
        if let TerminalFamily::TerminalFunction { growth: (a, b), .. } = self {
            for x in xs {
                let v = self.h(t, x);
                let env = a * (b * x.abs()).exp();
                if !v.is_finite() || v.abs() > env * (1.0 + 1e-9) + 1e-300 {
                    return Err(Error::Quadrature(format!(
                        "|h({t}, {x})| = {} exceeds growth envelope {env}",
                        v.abs()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `F(t)` on one path.
pub fn evaluate_f(fam: &TerminalFamily, t: f64, path: &PathRef<'_>) -> f64 {
    match fam {
        TerminalFamily::Deterministic(f0) => f0.eval(t),
        TerminalFamily::GaussianLinear { f0, phi } => {
            let grid = path.drift.grid();
            f0.eval(t) + path.dw.iter().enumerate().map(|(k, d)| phi.eval(t, grid.node(k)) * d).sum::<f64>()
        }
        TerminalFamily::TerminalFunction { .. } => fam.h(t, path.terminal()),
    }
}

/// Law of `W(T)` given `F_{t_r}` under `Q`: mean shift `Σ_{k>=r} b_k Δ` and variance `T - t_r`.
fn terminal_law(drift: &DriftFunction, r: usize) -> (f64, f64) {
    let grid = drift.grid();
    (drift.integral(r, grid.n()), (grid.horizon() - grid.node(r)).max(0.0))
}

/// `E^Q[h(t, x + shift + sqrt(var) Z)]` by 64-node Gauss–Hermite.
pub fn terminal_conditional(fam: &TerminalFamily, t: f64, x: f64, shift: f64, var: f64) -> Result<f64> {
    let gh = GaussHermite::standard();
    let sd = var.sqrt();
    let mean = x + shift;
    fam.check_growth(t, gh.nodes().iter().map(|z| mean + sd * z))?;
    Ok(gh.expect(mean, sd, |y| fam.h(t, y)))
}

/// `E^Q[F(t) | F_{t_r}]` on one path.
pub fn conditional_f(fam: &TerminalFamily, t: f64, r: usize, path: &PathRef<'_>, drift: &DriftFunction) -> Result<f64> {
    let grid = drift.grid();
    if r > grid.n() {
        return Err(Error::Domain(format!("conditioning node {r} beyond grid")));
    }
    match fam {
        TerminalFamily::Deterministic(f0) => Ok(f0.eval(t)),
        TerminalFamily::GaussianLinear { f0, phi } => {
            let h = grid.step();
            let past: f64 = (0..r).map(|k| phi.eval(t, grid.node(k)) * path.dw[k]).sum();
            let future: f64 = (r..grid.n()).map(|k| phi.eval(t, grid.node(k)) * drift.at(k) * h).sum();
            Ok(f0.eval(t) + future + past)
        }
        TerminalFamily::TerminalFunction { .. } => {
            let (shift, var) = terminal_law(drift, r);
            terminal_conditional(fam, t, path.w_at(r), shift, var)
        }
    }
}

/// `D_s F(t)` on one path.
pub fn malliavin_f(fam: &TerminalFamily, t: f64, s: f64, path: &PathRef<'_>) -> f64 {
    match fam {
        TerminalFamily::Deterministic(_) => 0.0,
        TerminalFamily::GaussianLinear { phi, .. } => phi.eval(t, s),
        TerminalFamily::TerminalFunction { .. } => fam.dh(t, path.terminal()),
    }
}

/// `E^Q[k(W(T)) | W(t_r) = x]` for every term, in term order.
pub(crate) fn state_conditionals(
    terms: &[TerminalTerm],
    x: f64,
    drift: &DriftFunction,
    r: usize,
    derivative: bool,
) -> Vec<f64> {
    let (shift, var) = terminal_law(drift, r);
    let gh = GaussHermite::standard();
    let sd = var.sqrt();
    terms
        .iter()
        .map(|m| {
            if derivative {
                gh.expect(x + shift, sd, |y| m.state.derivative(y))
            } else {
                gh.expect(x + shift, sd, |y| m.state.eval(y))
            }
        })
        .collect()
}

/// Checks the growth envelope over a ±12 standard-deviation window for every grid time.
pub(crate) fn check_family_growth(fam: &TerminalFamily, grid: &TriangularGrid) -> Result<()> {
    let width = 12.0 * grid.horizon().sqrt().max(1.0);
    for i in 0..=grid.n() {
        fam.check_growth(grid.node(i), (0..=48).map(|k| -width + 2.0 * width * k as f64 / 48.0))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::girsanov::{sample_paths, SamplingMode};

    fn grid() -> TriangularGrid {
        TriangularGrid::new(1.0, 10).unwrap()
    }

    fn square() -> TerminalFamily {
        TerminalFamily::terminal_function(
            vec![TerminalTerm { time: ScalarFn::Constant(1.0), state: StateFn::Poly(vec![0.0, 0.0, 1.0]) }],
            1.0,
        )
    }

    #[test]
    fn evaluate_examples() {
        let d = DriftFunction::zero(grid());
        let e = sample_paths(&d, 3, 5, SamplingMode::Q).unwrap();
        let p = e.path(1);
        assert_eq!(evaluate_f(&TerminalFamily::Deterministic(ScalarFn::Constant(1.0)), 0.4, &p), 1.0);
        let gl = TerminalFamily::GaussianLinear { f0: ScalarFn::Zero, phi: GaussianKernel::constant(1.0) };
        assert!((evaluate_f(&gl, 0.2, &p) - p.terminal()).abs() < 1e-14);

        let w = vec![0.0, 0.7];
        let dw = vec![0.7];
        let g1 = TriangularGrid::new(1.0, 2).unwrap();
        let d1 = DriftFunction::zero(g1);
        let fake = PathRef { dw: &dw, w: &w, drift: &d1 };
        assert!((evaluate_f(&square(), 0.5, &fake) - 0.49).abs() < 1e-15);
        assert!((malliavin_f(&square(), 0.5, 0.1, &fake) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn conditional_examples() {
        let g = grid();
        let d = DriftFunction::zero(g);
        let e = sample_paths(&d, 4, 9, SamplingMode::Q).unwrap();
        let p = e.path(2);
        let det = TerminalFamily::Deterministic(ScalarFn::Exp { a: 2.0, rate: -1.0 });
        assert_eq!(conditional_f(&det, 0.3, 6, &p, &d).unwrap(), det.mean_profile().unwrap().eval(0.3));

        let gl = TerminalFamily::GaussianLinear { f0: ScalarFn::Zero, phi: GaussianKernel::constant(1.0) };
        assert!((conditional_f(&gl, 0.1, 4, &p, &d).unwrap() - p.w_at(4)).abs() < 1e-14);

        assert!((conditional_f(&square(), 0.0, 0, &p, &d).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tower_at_terminal_time() {
        let g = grid();
        let d = DriftFunction::from_values(g, vec![0.4; 11]).unwrap();
        let e = sample_paths(&d, 5, 2, SamplingMode::P).unwrap();
        let gl = TerminalFamily::GaussianLinear { f0: ScalarFn::Affine { a: 1.0, b: 2.0 }, phi: GaussianKernel { a: 1.0, kappa: 0.5, lambda: 1.0 } };
        for p in 0..5 {
            let path = e.path(p);
            assert!((conditional_f(&gl, 0.3, 10, &path, &d).unwrap() - evaluate_f(&gl, 0.3, &path)).abs() < 1e-14);
        }
        // Point evaluation as the remaining variance vanishes.
        let v = terminal_conditional(&square(), 0.0, 0.8, 0.0, 1e-12).unwrap();
        assert!((v - 0.64).abs() < 1e-11);
    }

    #[test]
    fn malliavin_bump_consistency() {
        let g = grid();
        let d = DriftFunction::zero(g);
        let e = sample_paths(&d, 2, 4, SamplingMode::Q).unwrap();
        let gl = TerminalFamily::GaussianLinear { f0: ScalarFn::Zero, phi: GaussianKernel { a: 1.0, kappa: 0.0, lambda: 1.0 } };
        let eps = 1e-3;
        for k in 0..10 {
            let (dw, w) = e.bumped_path(0, k, eps);
            let bumped = PathRef { dw: &dw, w: &w, drift: &d };
            let diff = evaluate_f(&gl, 0.4, &bumped) - evaluate_f(&gl, 0.4, &e.path(0));
            let expect = eps * malliavin_f(&gl, 0.4, g.node(k), &e.path(0));
            assert!((diff - expect).abs() < 1e-15);
        }
        assert!((malliavin_f(&gl, 0.9, 0.5, &e.path(0)) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(malliavin_f(&TerminalFamily::Deterministic(ScalarFn::Zero), 0.1, 0.2, &e.path(0)), 0.0);
    }

    #[test]
    fn growth_envelope_enforced() {
        let fam = TerminalFamily::TerminalFunction {
            terms: vec![TerminalTerm { time: ScalarFn::Constant(1.0), state: StateFn::Exp { a: 1.0, rate: 3.0 } }],
            growth: (1.0, 1.0),
        };
        assert!(matches!(terminal_conditional(&fam, 0.0, 0.0, 0.0, 1.0), Err(Error::Quadrature(_))));
        assert!(check_family_growth(&square(), &grid()).is_ok());
    }

    #[test]
    fn derived_growth_dominates() {
        let k = StateFn::Poly(vec![1.0, -2.0, 0.5, 0.1]);
        let (a, b) = k.growth();
        for i in -100..=100 {
            let x = i as f64 * 0.2;
            assert!(k.eval(x).abs() <= a * (b * x.abs()).exp());
        }
        assert_eq!(k.derivative(2.0), -2.0 + 2.0 * 0.5 * 2.0 + 3.0 * 0.1 * 4.0);
    }
}

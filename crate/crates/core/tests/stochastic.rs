//! Monte Carlo checks of the change of measure and the explicit stochastic solution.

use delay_bsvie::explicit::{compute_u, solve};
use delay_bsvie::girsanov::{drift, estimate_under_q, expect_q, mean_estimate, sample_paths, DriftFunction, SamplingMode};
use delay_bsvie::kernel::{build_phi, resolvent, KernelSpec, ScalarFn, TriangularGrid};
use delay_bsvie::measure::DelayMeasure;
use delay_bsvie::oracle::{residual_delayed_field, residual_reduced_field};
use delay_bsvie::terminal::{conditional_f, evaluate_f, GaussianKernel, StateFn, TerminalFamily, TerminalTerm};

fn uniform_unit_drift(n: usize) -> DriftFunction {
    let grid = TriangularGrid::new(1.0, n).unwrap();
    drift(&DelayMeasure::uniform(1.0).unwrap(), &KernelSpec::constant(0.0, 1.0), &grid).unwrap()
}

#[test]
fn weights_have_unit_mean() {
    let b = uniform_unit_drift(50);
    let e = sample_paths(&b, 100_000, 17, SamplingMode::P).unwrap();
    let m = mean_estimate(e.weights().unwrap());
    assert!((m.value - 1.0).abs() <= 3.0 * m.se, "{m:?}");
}

#[test]
fn reweighted_and_direct_sampling_agree() {
    let b = uniform_unit_drift(50);
    let p = sample_paths(&b, 100_000, 23, SamplingMode::P).unwrap();
    let q = sample_paths(&b, 100_000, 24, SamplingMode::Q).unwrap();
    type Functional = fn(delay_bsvie::girsanov::PathRef<'_>) -> f64;
    let functionals: [(&str, Functional); 3] = [
        ("W(T)", |path| path.terminal()),
        ("exp(W(T))", |path| path.terminal().exp()),
        ("max W", |path| path.w.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    ];
    for (name, f) in functionals {
        let gap = expect_q(&p, f).unwrap().gap(&expect_q(&q, f).unwrap());
        assert!(gap.value.abs() <= 3.0 * gap.se, "{name}: {gap:?}");
    }
    // Under Q, W(T) has the mean of the left-point drift sum, 1/2 + Δ/2 for this drift.
    let wt = expect_q(&q, |path| path.terminal()).unwrap();
    assert!((wt.value - b.integral(0, 50)).abs() <= 3.0 * wt.se);
    assert!((b.integral(0, 50) - 0.51).abs() < 1e-12);
}

#[test]
fn conditional_at_origin_is_the_unconditional_mean() {
    let grid = TriangularGrid::new(1.0, 10).unwrap();
    let b = DriftFunction::zero(grid);
    let fam = TerminalFamily::terminal_function(
        vec![
            TerminalTerm { time: ScalarFn::Constant(1.0), state: StateFn::Exp { a: 1.0, rate: 0.5 } },
            TerminalTerm { time: ScalarFn::Affine { a: 1.0, b: -0.5 }, state: StateFn::Poly(vec![0.0, 1.0, 1.0]) },
        ],
        1.0,
    );
    let e = sample_paths(&b, 50_000, 3, SamplingMode::P).unwrap();
    for t in [0.0, 0.5, 1.0] {
        let values: Vec<f64> = (0..e.len()).map(|p| evaluate_f(&fam, t, &e.path(p))).collect();
        let mc = mean_estimate(&values);
        let exact = conditional_f(&fam, t, 0, &e.path(0), &b).unwrap();
        assert!((mc.value - exact).abs() <= 3.0 * mc.se, "t={t}: {mc:?} vs {exact}");
    }
}

#[test]
fn ito_isometry_for_gaussian_linear() {
    let grid = TriangularGrid::new(1.0, 40).unwrap();
    let m = DelayMeasure::dirac(1.0, 0.0).unwrap();
    let k = KernelSpec::constant(0.3, 0.2);
    let phi = build_phi(&m, &k, &grid).unwrap();
    let psi = resolvent(&phi, 1e-12).unwrap();
    let b = drift(&m, &k, &grid).unwrap();
    let e = sample_paths(&b, 50_000, 99, SamplingMode::P).unwrap();
    let fam = TerminalFamily::GaussianLinear { f0: ScalarFn::Zero, phi: GaussianKernel { a: 1.0, kappa: 0.2, lambda: 0.1 } };
    let field = solve(&fam, &phi, &psi, &b, Some(&e)).unwrap();
    let u = compute_u(&fam, &field.y, &m, &k, &grid, Some(&e)).unwrap();
    let z = field.z.table().unwrap();
    for i in [0, 10, 20, 30] {
        let sq: Vec<f64> = (0..e.len()).map(|p| u.at(p, i).powi(2)).collect();
        let lhs = estimate_under_q(&e, &sq).unwrap();
        let rhs = grid.trapezoid(i, 40, |j| z.get(i, j).powi(2));
        assert!((lhs.value - rhs).abs() <= 3.0 * lhs.se, "t={}: {lhs:?} vs {rhs}", grid.node(i));
    }
}

fn quadratic_family() -> TerminalFamily {
    TerminalFamily::terminal_function(
        vec![
            TerminalTerm { time: ScalarFn::Constant(1.0), state: StateFn::Poly(vec![0.0, 0.5, 1.0]) },
            TerminalTerm { time: ScalarFn::Exp { a: 0.5, rate: -1.0 }, state: StateFn::Exp { a: 1.0, rate: 0.3 } },
        ],
        1.0,
    )
}

#[test]
fn martingale_increments_are_uncorrelated() {
    // E^Q[U(0) | F_t] = Σ_{s_k < t} Z(0, s_k) ΔW^Q_k; disjoint increments must be uncorrelated under Q.
    let grid = TriangularGrid::new(1.0, 20).unwrap();
    let m = DelayMeasure::dirac(1.0, 0.0).unwrap();
    let k = KernelSpec::constant(0.3, 0.2);
    let phi = build_phi(&m, &k, &grid).unwrap();
    let psi = resolvent(&phi, 1e-12).unwrap();
    let b = drift(&m, &k, &grid).unwrap();
    let paths = 20_000;
    let e = sample_paths(&b, paths, 5, SamplingMode::Q).unwrap();
    let fam = quadratic_family();
    let field = solve(&fam, &phi, &psi, &b, Some(&e)).unwrap();
    let blocks: Vec<[f64; 4]> = (0..paths)
        .map(|p| {
            let path = e.path(p);
            let z = field.z.surface_on_path(&path);
            let mut out = [0.0; 4];
            for kk in 0..20 {
                out[kk / 5] += z.get(0, kk) * path.dwq(kk);
            }
            out
        })
        .collect();
    let corr = |a: usize, c: usize| {
        let x: Vec<f64> = blocks.iter().map(|v| v[a]).collect();
        let y: Vec<f64> = blocks.iter().map(|v| v[c]).collect();
        let (mx, my) = (x.iter().sum::<f64>() / paths as f64, y.iter().sum::<f64>() / paths as f64);
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    };
    let limit = 3.0 / (paths as f64).sqrt();
    for (a, c) in [(0, 1), (1, 2), (2, 3), (0, 3)] {
        let rho = corr(a, c);
        assert!(rho.abs() < limit, "blocks {a},{c}: {rho}");
    }
}

#[test]
fn terminal_function_solves_the_reduced_equation() {
    let grid = TriangularGrid::new(1.0, 20).unwrap();
    let m = DelayMeasure::dirac(1.0, 0.0).unwrap();
    let k = KernelSpec::constant(0.3, 0.2);
    let phi = build_phi(&m, &k, &grid).unwrap();
    let psi = resolvent(&phi, 1e-12).unwrap();
    let b = drift(&m, &k, &grid).unwrap();
    let e = sample_paths(&b, 4000, 8, SamplingMode::P).unwrap();
    let fam = quadratic_family();
    let field = solve(&fam, &phi, &psi, &b, Some(&e)).unwrap();
    let tol = 10.0 * grid.step().powi(2);
    let reduced = residual_reduced_field(&field, &fam, &phi, Some(&e)).unwrap();
    assert!(reduced.sup_excess(3.0) <= tol, "{reduced:?}");
    // Without delay the delayed equation is the same equation.
    let delayed = residual_delayed_field(&field, &fam, &k, &m, Some(&e)).unwrap();
    assert!(delayed.sup_excess(3.0) <= tol, "{delayed:?}");
}

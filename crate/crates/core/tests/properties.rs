//! Randomized checks of the structural invariants.

use delay_bsvie::explicit::solve_y;
use delay_bsvie::girsanov::{drift, sample_paths, DriftFunction, PathRef, SamplingMode};
use delay_bsvie::kernel::{
    build_phi, iterated_kernel_bound, iterated_kernels, resolvent, volterra_compose, KernelFn, KernelSpec, KernelTable,
    ScalarFn, TriangularGrid,
};
use delay_bsvie::measure::DelayMeasure;
use delay_bsvie::oracle::{
    lipschitz_constant, picard_trace, residual_delayed, solve_reduced_collocation, PicardConfig, PicardStatus,
};
use delay_bsvie::terminal::{conditional_f, evaluate_f, GaussianKernel, TerminalFamily};
use proptest::prelude::*;

fn arb_kernel() -> impl Strategy<Value = KernelFn> {
    prop_oneof![
        (-1.5f64..1.5).prop_map(KernelFn::Constant),
        (-1.5f64..1.5, 0u32..3, -1.0f64..1.0).prop_map(|(coef, power, rate)| KernelFn::PolyExp { coef, power, rate }),
    ]
}

fn arb_measure() -> impl Strategy<Value = DelayMeasure> {
    prop_oneof![
        (-1.0f64..=0.0).prop_map(|u| DelayMeasure::dirac(1.0, u).unwrap()),
        Just(DelayMeasure::uniform(1.0).unwrap()),
        (-1.0f64..0.0, 0.05f64..0.95).prop_map(|(u, w)| DelayMeasure::atoms(1.0, vec![(u, w), (0.0, 1.0 - w)]).unwrap()),
    ]
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn resolvent_identity(g in arb_kernel(), m in arb_measure()) {
        let grid = TriangularGrid::new(1.0, 40).unwrap();
        let k = KernelSpec::new(g, 5.0, ScalarFn::Zero, 0.0);
        let phi = build_phi(&m, &k, &grid).unwrap();
        let table = resolvent(&phi, 1e-10).unwrap();
        let psi = KernelTable::from_fn(grid, |i, j| table.get(i, j));
        let left = volterra_compose(&phi, &psi).unwrap();
        let right = volterra_compose(&psi, &phi).unwrap();
        let c = phi.sup_norm().max(1.0).powi(3) * 10.0;
        for i in 0..=40 {
            for j in i..=40 {
                let base = psi.get(i, j) - phi.get(i, j);
                prop_assert!((base - left.get(i, j)).abs() <= 1e-10 + c * grid.step().powi(2));
                prop_assert!((base - right.get(i, j)).abs() <= 1e-10 + c * grid.step().powi(2));
            }
        }
    }

    #[test]
    fn iterated_kernels_within_sound_bound(g in arb_kernel(), m in arb_measure()) {
        let grid = TriangularGrid::new(1.0, 30).unwrap();
        let k = KernelSpec::new(g, 5.0, ScalarFn::Zero, 0.0);
        let phi = build_phi(&m, &k, &grid).unwrap();
        let c = phi.sup_norm();
        for (n, table) in iterated_kernels(&phi, 8).unwrap().iter().enumerate() {
            let bound = iterated_kernel_bound(c, 1.0, n + 1);
            prop_assert!(table.sup_norm() <= bound * (1.0 + 1e-9) + 10.0 * grid.step().powi(2));
        }
    }

    #[test]
    fn kernels_vanish_at_negative_arguments(g in arb_kernel(), t in -2.0f64..1.0, s in -2.0f64..1.0, gamma in -1.0f64..1.0) {
        let k = KernelSpec::new(g, 5.0, ScalarFn::Constant(gamma), gamma.abs());
        if t < 0.0 || s < 0.0 {
            prop_assert_eq!(k.g_big(t, s), 0.0);
        }
        if s < 0.0 {
            prop_assert_eq!(k.g_small(s), 0.0);
        }
    }

    #[test]
    fn deterministic_oracles_agree_without_delay(c in 0.0f64..1.2, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let grid = TriangularGrid::new(1.0, 50).unwrap();
        let m = DelayMeasure::dirac(1.0, 0.0).unwrap();
        let k = KernelSpec::constant(c, 0.0);
        let fam = TerminalFamily::Deterministic(ScalarFn::Affine { a, b });
        let phi = build_phi(&m, &k, &grid).unwrap();
        let psi = resolvent(&phi, 1e-12).unwrap();
        let explicit = solve_y(&fam, &psi, &DriftFunction::zero(grid), &grid, None).unwrap();
        let explicit = explicit.profile().unwrap();
        let fbar: Vec<f64> = grid.nodes().iter().map(|t| a + b * t).collect();
        let colloc = solve_reduced_collocation(&fbar, &phi).unwrap();
        let picard = picard_trace(&fam, &k, &m, &grid, &PicardConfig::default()).unwrap().into_result().unwrap().y;
        let tol = 10.0 * grid.step().powi(2);
        prop_assert!(max_gap(explicit, &colloc) <= tol);
        prop_assert!(max_gap(explicit, &picard) <= tol);
        prop_assert!(max_gap(&colloc, &picard) <= tol);
    }

    #[test]
    fn converged_picard_is_a_fixed_point(m in arb_measure(), c in 0.1f64..1.0, f in -2.0f64..2.0) {
        let grid = TriangularGrid::new(1.0, 40).unwrap();
        let k = KernelSpec::constant(c, 0.0);
        let fam = TerminalFamily::Deterministic(ScalarFn::Constant(f));
        let cfg = PicardConfig::default();
        let trace = picard_trace(&fam, &k, &m, &grid, &cfg).unwrap();
        prop_assert_eq!(trace.status, PicardStatus::Converged);
        let r = residual_delayed(&trace.y, &fam, &k, &m, &grid).unwrap();
        prop_assert!(r.sup() <= cfg.tolerance + 10.0 * grid.step().powi(2));
        // Geometric decrease once the iteration has settled.
        for w in trace.history.windows(2).skip(2) {
            if w[0] > 1e-13 {
                prop_assert!(w[1] < w[0], "{:?}", trace.history);
            }
        }
    }

    #[test]
    fn gaussian_linear_bump_moves_terminal_by_integrand(
        a in -2.0f64..2.0, kappa in 0.0f64..1.0, lambda in 0.0f64..1.0,
        k in 0usize..16, eps in -0.5f64..0.5, ti in 0usize..=16, seed in any::<u64>(),
    ) {
        let grid = TriangularGrid::new(1.0, 16).unwrap();
        let phi = GaussianKernel { a, kappa, lambda };
        let fam = TerminalFamily::GaussianLinear { f0: ScalarFn::Constant(0.3), phi };
        let b = DriftFunction::zero(grid);
        let e = sample_paths(&b, 3, seed, SamplingMode::P).unwrap();
        let (dw, w) = e.bumped_path(1, k, eps);
        let bumped = PathRef { dw: &dw, w: &w, drift: &b };
        let t = grid.node(ti);
        let change = evaluate_f(&fam, t, &bumped) - evaluate_f(&fam, t, &e.path(1));
        prop_assert!((change - eps * phi.eval(t, grid.node(k))).abs() < 1e-12);
    }

    #[test]
    fn conditional_at_horizon_is_the_terminal_value(a in -2.0f64..2.0, gamma in -1.0f64..1.0, ti in 0usize..=12, seed in any::<u64>()) {
        let grid = TriangularGrid::new(1.0, 12).unwrap();
        let m = DelayMeasure::uniform(1.0).unwrap();
        let b = drift(&m, &KernelSpec::constant(0.0, gamma), &grid).unwrap();
        let e = sample_paths(&b, 2, seed, SamplingMode::P).unwrap();
        let fam = TerminalFamily::GaussianLinear { f0: ScalarFn::Affine { a, b: 1.0 }, phi: GaussianKernel::constant(a) };
        let t = grid.node(ti);
        let path = e.path(0);
        prop_assert!((conditional_f(&fam, t, 12, &path, &b).unwrap() - evaluate_f(&fam, t, &path)).abs() < 1e-12);
    }

    #[test]
    fn ensembles_are_bit_reproducible(seed in any::<u64>(), gamma in -1.0f64..1.0) {
        let grid = TriangularGrid::new(1.0, 8).unwrap();
        let b = drift(&DelayMeasure::uniform(1.0).unwrap(), &KernelSpec::constant(0.0, gamma), &grid).unwrap();
        for mode in [SamplingMode::P, SamplingMode::Q] {
            let x = sample_paths(&b, 17, seed, mode).unwrap();
            let y = sample_paths(&b, 17, seed, mode).unwrap();
            for p in 0..17 {
                prop_assert_eq!(x.path(p).w, y.path(p).w);
            }
            prop_assert_eq!(x.weights(), y.weights());
        }
    }

    #[test]
    fn lipschitz_constant_is_twice_the_larger_square(cg in 0.0f64..5.0, cs in 0.0f64..5.0) {
        let k = KernelSpec::new(KernelFn::Constant(cg), cg, ScalarFn::Constant(cs), cs);
        prop_assert_eq!(lipschitz_constant(&k), 2.0 * (cg * cg).max(cs * cs));
    }
}

#[test]
fn factorial_bound_counterexample() {
    // Φ ≡ 1 on [0,1]: Φ⁽ⁿ⁾(0,1) = 1/(n-1)!, which exceeds (CT)ⁿ/n! = 1/n! for every n ≥ 2.
    let grid = TriangularGrid::new(1.0, 64).unwrap();
    let phi = KernelTable::from_fn(grid, |_, _| 1.0);
    let mut fact = 1.0;
    for (n, table) in iterated_kernels(&phi, 6).unwrap().iter().enumerate().skip(1) {
        let order = n + 1;
        fact *= order as f64;
        assert!(table.get(0, 64) > 1.0 / fact + 0.1 / fact, "order {order}");
    }
}

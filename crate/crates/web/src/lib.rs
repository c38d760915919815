//! Browser bindings for three small interactive experiments.
//!
//! Each export returns a flat `Float64Array`; the page slices it into columns.
//! The computations live in plain Rust functions so they can be tested natively.

use delay_bsvie::explicit::solve_y;
use delay_bsvie::girsanov::{drift, mean_estimate, sample_paths, DriftFunction, SamplingMode};
use delay_bsvie::kernel::{build_phi, resolvent, KernelSpec, ScalarFn, TriangularGrid};
use delay_bsvie::measure::DelayMeasure;
use delay_bsvie::oracle::{residual_delayed, residual_reduced, solve_delayed_picard, PicardConfig};
use delay_bsvie::terminal::TerminalFamily;
use wasm_bindgen::prelude::*;

const MAX_NODES: usize = 400;
const MAX_PATHS: usize = 200_000;

fn grid(n: usize) -> Result<TriangularGrid, String> {
    if n > MAX_NODES {
        return Err(format!("at most {MAX_NODES} grid steps"));
    }
    TriangularGrid::new(1.0, n).map_err(|e| e.to_string())
}

/// `[s_j, Ψ(0, s_j), reference(s_j)]` for `j = 0..=n`, flattened.
///
/// `kernel` is `"constant"` (Φ ≡ c, reference `c e^{cs}`) or `"example"`
/// (uniform delay, Φ = u e^{-u}, reference `(1 - e^{-2s}) / 2`).
pub fn resolvent_curve(kernel: &str, c: f64, n: usize) -> Result<Vec<f64>, String> {
    let g = grid(n)?;
    let (m, k, reference): (DelayMeasure, KernelSpec, Box<dyn Fn(f64) -> f64>) = match kernel {
        "constant" => (
            DelayMeasure::dirac(1.0, 0.0).map_err(|e| e.to_string())?,
            KernelSpec::constant(c, 0.0),
            Box::new(move |s: f64| c * (c * s).exp()),
        ),
        "example" => (
            DelayMeasure::uniform(1.0).map_err(|e| e.to_string())?,
            KernelSpec::example33(1.0, ScalarFn::Zero, 0.0),
            Box::new(|s: f64| 0.5 * (1.0 - (-2.0 * s).exp())),
        ),
        other => return Err(format!("unknown kernel {other:?}")),
    };
    let phi = build_phi(&m, &k, &g).map_err(|e| e.to_string())?;
    let psi = resolvent(&phi, 1e-10).map_err(|e| e.to_string())?;
    Ok((0..=n).flat_map(|j| [g.node(j), psi.get(0, j), reference(g.node(j))]).collect())
}

/// Delay measure `(1 - w) δ_{u0} + w · Uniform[-1, 0]`.
fn blended_measure(u0: f64, w: f64) -> Result<DelayMeasure, String> {
    if !(0.0..=1.0).contains(&w) {
        return Err("uniform weight must lie in [0, 1]".into());
    }
    let dirac = DelayMeasure::dirac(1.0, u0).map_err(|e| e.to_string())?;
    let uniform = DelayMeasure::uniform(1.0).map_err(|e| e.to_string())?;
    match w {
        0.0 => Ok(dirac),
        1.0 => Ok(uniform),
        w => DelayMeasure::mixture(1.0, vec![(dirac, 1.0 - w), (uniform, w)]).map_err(|e| e.to_string()),
    }
}

/// Explicit and Picard solutions of `Y = 1 + generator(Y)` with constant `G = c`.
///
/// Returns `[t_i, Y_explicit, Y_picard]` rows followed by four sups:
/// explicit delayed/reduced residual, Picard delayed/reduced residual.
pub fn delay_comparison(u0: f64, uniform_weight: f64, c: f64, n: usize) -> Result<Vec<f64>, String> {
    let g = grid(n)?;
    let m = blended_measure(u0, uniform_weight)?;
    let k = KernelSpec::constant(c, 0.0);
    let fam = TerminalFamily::Deterministic(ScalarFn::Constant(1.0));
    let phi = build_phi(&m, &k, &g).map_err(|e| e.to_string())?;
    let psi = resolvent(&phi, 1e-10).map_err(|e| e.to_string())?;
    let explicit = solve_y(&fam, &psi, &DriftFunction::zero(g), &g, None).map_err(|e| e.to_string())?;
    let explicit = explicit.profile().expect("deterministic profile").to_vec();
    let picard = solve_delayed_picard(&fam, &k, &m, &g, &PicardConfig::default()).map_err(|e| e.to_string())?.y;
    let fbar = vec![1.0; n + 1];
    let sup = |y: &[f64]| -> Result<[f64; 2], String> {
        let d = residual_delayed(y, &fam, &k, &m, &g).map_err(|e| e.to_string())?;
        let r = residual_reduced(y, &fbar, &phi).map_err(|e| e.to_string())?;
        Ok([d.sup(), r.sup()])
    };
    let mut out: Vec<f64> = (0..=n).flat_map(|i| [g.node(i), explicit[i], picard[i]]).collect();
    out.extend(sup(&explicit)?);
    out.extend(sup(&picard)?);
    Ok(out)
}

/// Girsanov weights for a uniform delay and constant `g = gamma`.
///
/// Returns `[mean, se, min, max]` of the weights followed by `bins` histogram
/// counts of `log M(T)` over `[min, max]` of the log-weights.
pub fn girsanov_weights(gamma: f64, paths: usize, seed: u32, bins: usize) -> Result<Vec<f64>, String> {
    if paths == 0 || paths > MAX_PATHS || bins == 0 {
        return Err(format!("need 1..={MAX_PATHS} paths and at least one bin"));
    }
    let g = grid(50)?;
    let b = drift(&DelayMeasure::uniform(1.0).map_err(|e| e.to_string())?, &KernelSpec::constant(0.0, gamma), &g)
        .map_err(|e| e.to_string())?;
    let e = sample_paths(&b, paths, u64::from(seed), SamplingMode::P).map_err(|e| e.to_string())?;
    let w = e.weights().expect("P-mode weights");
    let est = mean_estimate(w);
    let logs: Vec<f64> = w.iter().map(|x| x.ln()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for x in &logs {
        let k = if width > 0.0 { (((x - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[k] += 1.0;
    }
    let mut out = vec![est.value, est.se, lo.exp(), hi.exp()];
    out.extend(counts);
    Ok(out)
}

#[wasm_bindgen(js_name = resolventCurve)]
pub fn resolvent_curve_js(kernel: &str, c: f64, n: usize) -> Result<Vec<f64>, JsError> {
    resolvent_curve(kernel, c, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = delayComparison)]
pub fn delay_comparison_js(u0: f64, uniform_weight: f64, c: f64, n: usize) -> Result<Vec<f64>, JsError> {
    delay_comparison(u0, uniform_weight, c, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = girsanovWeights)]
pub fn girsanov_weights_js(gamma: f64, paths: usize, seed: u32, bins: usize) -> Result<Vec<f64>, JsError> {
    girsanov_weights(gamma, paths, seed, bins).map_err(|e| JsError::new(&e))
}

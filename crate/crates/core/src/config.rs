//! Line-oriented `key = value` experiment configuration.
//!
//! ```text
//! # comments run to the end of the line
//! horizon = 1
//! grid.n = 200
//! measure.kind = mixture
//! measure.mixture = dirac(-0.3)*0.4 + uniform*0.6
//! kernel.name = constant
//! kernel.c = 0.5
//! drift.g = constant:0.2
//! terminal.kind = gaussian_linear
//! terminal.phi = 1:0:0
//! mc.paths = 20000
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{KernelFn, KernelSpec, ScalarFn, TabulatedKernel, TriangularGrid};
use crate::measure::DelayMeasure;
use crate::oracle::{LsmcConfig, PicardConfig};
use crate::terminal::{GaussianKernel, StateFn, TerminalFamily, TerminalTerm};

const KNOWN_KEYS: &[&str] = &[
    "horizon",
    "grid.n",
    "measure.kind",
    "measure.u0",
    "measure.atoms",
    "measure.mixture",
    "kernel.name",
    "kernel.c",
    "kernel.coef",
    "kernel.power",
    "kernel.rate",
    "kernel.file",
    "kernel.bound",
    "drift.g",
    "drift.bound",
    "terminal.kind",
    "terminal.f0",
    "terminal.phi",
    "terminal.h",
    "mc.paths",
    "mc.seed",
    "tol.resolvent",
    "tol.picard",
    "tol.slack",
    "picard.max_iterations",
    "beta",
    "output.dir",
];

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub horizon: f64,
    pub n: usize,
    pub measure: DelayMeasure,
    pub kernel: KernelSpec,
    pub terminal: TerminalFamily,
    pub paths: usize,
    pub seed: u64,
    pub tol_resolvent: f64,
    pub tol_picard: f64,
    /// Constant `c` in quadrature tolerances `c·Δ²`.
    pub slack: f64,
    pub picard_max_iterations: usize,
    pub beta: f64,
    pub output_dir: Option<PathBuf>,
    entries: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn number(key: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| config_err(format!("{key}: expected a number, got {s:?}")))
}

fn numbers(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(':').map(|p| number(key, p)).collect()
}

/// `zero`, `<number>`, `constant:c`, `exp:a:rate` or `affine:a:b`.
pub fn parse_scalar_fn(key: &str, s: &str) -> Result<ScalarFn> {
    let s = s.trim();
    if s == "zero" {
        return Ok(ScalarFn::Zero);
    }
    if let Ok(c) = s.parse::<f64>() {
        return Ok(ScalarFn::Constant(c));
    }
    let (name, rest) = s.split_once(':').ok_or_else(|| config_err(format!("{key}: unknown function {s:?}")))?;
    let args = numbers(key, rest)?;
    match (name, args.as_slice()) {
        ("constant", [c]) => Ok(ScalarFn::Constant(*c)),
        ("exp", [a, rate]) => Ok(ScalarFn::Exp { a: *a, rate: *rate }),
        ("affine", [a, b]) => Ok(ScalarFn::Affine { a: *a, b: *b }),
        _ => Err(config_err(format!("{key}: unknown function {s:?}"))),
    }
}

/// `poly:c0:c1:...` or `exp:a:rate`.
fn parse_state_fn(key: &str, s: &str) -> Result<StateFn> {
    let (name, rest) = s.trim().split_once(':').ok_or_else(|| config_err(format!("{key}: bad state function {s:?}")))?;
    let args = numbers(key, rest)?;
    match (name, args.as_slice()) {
        ("poly", c) if !c.is_empty() => Ok(StateFn::Poly(c.to_vec())),
        ("exp", [a, rate]) => Ok(StateFn::Exp { a: *a, rate: *rate }),
        _ => Err(config_err(format!("{key}: bad state function {s:?}"))),
    }
}

/// Splits on `+` tokens surrounded by whitespace, so exponents like `1e+3` survive.
fn split_sum(s: &str) -> Vec<String> {
    let mut parts = vec![String::new()];
    for tok in s.split_whitespace() {
        if tok == "+" {
            parts.push(String::new());
        } else {
            let cur = parts.last_mut().unwrap();
            cur.push_str(tok);
        }
    }
    parts
}

fn parse_atoms(key: &str, s: &str, sep: char) -> Result<Vec<(f64, f64)>> {
    s.split(sep)
        .map(|pair| {
            let v = numbers(key, pair)?;
            match v.as_slice() {
                [u, w] => Ok((*u, *w)),
                _ => Err(config_err(format!("{key}: expected u:w, got {pair:?}"))),
            }
        })
        .collect()
}

/// One mixture component: `dirac(u)`, `uniform` or `atoms(u:w;u:w)`.
fn parse_component(key: &str, horizon: f64, s: &str) -> Result<DelayMeasure> {
    let inner = |prefix: &str| s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')'));
    if s == "uniform" {
        DelayMeasure::uniform(horizon)
    } else if let Some(u) = inner("dirac(") {
        DelayMeasure::dirac(horizon, number(key, u)?)
    } else if let Some(a) = inner("atoms(") {
        DelayMeasure::atoms(horizon, parse_atoms(key, a, ';')?)
    } else {
        Err(config_err(format!("{key}: unknown measure component {s:?}")))
    }
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(s)
}

/// `sup_{0<=u<=T} |coef u^p e^{-rate u}|`.
fn poly_exp_sup(coef: f64, power: u32, rate: f64, horizon: f64) -> f64 {
    let f = |u: f64| (coef * u.powi(power as i32) * (-rate * u).exp()).abs();
    let mut best = f(0.0).max(f(horizon));
    if rate > 0.0 {
        best = best.max(f((power as f64 / rate).clamp(0.0, horizon)));
    }
    best
}

struct Entries<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Entries<'_> {
    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| unquote(s))
    }

    fn req(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| config_err(format!("missing key {key}")))
    }

    fn num_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |s| number(key, s))
    }

    fn count_or(&self, key: &str, default: u64) -> Result<u64> {
        self.get(key).map_or(Ok(default), |s| {
            s.trim().parse::<u64>().map_err(|_| config_err(format!("{key}: expected a non-negative integer, got {s:?}")))
        })
    }
}

impl ExperimentConfig {
    /// Parses configuration text; `base` resolves relative file references.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(config_err(format!("line {}: unknown key {key}", lineno + 1)));
            }
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(config_err(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }
        Self::from_entries(map, base)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    fn from_entries(map: BTreeMap<String, String>, base: Option<&Path>) -> Result<Self> {
        let e = Entries { map: &map };
        let horizon = number("horizon", e.req("horizon")?)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(config_err("horizon must be positive"));
        }
        let n = e.count_or("grid.n", 100)? as usize;
        let grid = TriangularGrid::new(horizon, n).map_err(|err| config_err(err.to_string()))?;

        let measure = match e.req("measure.kind")? {
            "dirac" => DelayMeasure::dirac(horizon, number("measure.u0", e.get("measure.u0").unwrap_or("0"))?),
            "uniform" => DelayMeasure::uniform(horizon),
            "atoms" => DelayMeasure::atoms(horizon, parse_atoms("measure.atoms", e.req("measure.atoms")?, ',')?),
            "mixture" => {
                let parts = split_sum(e.req("measure.mixture")?)
                    .iter()
                    .map(|part| {
                        let (comp, w) = part
                            .rsplit_once('*')
                            .ok_or_else(|| config_err(format!("measure.mixture: expected component*weight, got {part:?}")))?;
                        Ok((parse_component("measure.mixture", horizon, comp)?, number("measure.mixture", w)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                DelayMeasure::mixture(horizon, parts)
            }
            other => return Err(config_err(format!("measure.kind: unknown {other:?}"))),
        }
        .map_err(|err| config_err(format!("measure: {err}")))?;

        let small_g = parse_scalar_fn("drift.g", e.get("drift.g").unwrap_or("zero"))?;
        let bound_small_g = e.num_or("drift.bound", small_g.sup_on(horizon))?;
        let kernel = match e.req("kernel.name")? {
            "zero" => KernelSpec::new(KernelFn::Zero, 0.0, small_g, bound_small_g),
            "constant" => {
                let c = number("kernel.c", e.req("kernel.c")?)?;
                KernelSpec::new(KernelFn::Constant(c), e.num_or("kernel.bound", c.abs())?, small_g, bound_small_g)
            }
            "poly_exp" => {
                let coef = e.num_or("kernel.coef", 1.0)?;
                let power = e.count_or("kernel.power", 0)? as u32;
                let rate = e.num_or("kernel.rate", 0.0)?;
                let bound = e.num_or("kernel.bound", poly_exp_sup(coef, power, rate, horizon))?;
                KernelSpec::new(KernelFn::PolyExp { coef, power, rate }, bound, small_g, bound_small_g)
            }
            "example33" => KernelSpec::example33(horizon, small_g, bound_small_g),
            "tabulated" => {
                let file = e.req("kernel.file")?;
                let path = base.map_or_else(|| PathBuf::from(file), |b| b.join(file));
                let text = std::fs::read_to_string(&path)
                    .map_err(|err| config_err(format!("kernel.file {}: {err}", path.display())))?;
                let values = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .flat_map(|l| l.split(',').map(|v| number("kernel.file", v)).collect::<Vec<_>>())
                    .collect::<Result<Vec<_>>>()?;
                let tab = TabulatedKernel::new(grid, values).map_err(|err| config_err(err.to_string()))?;
                let sup = (0..=n)
                    .flat_map(|i| (i..=n).map(move |j| (i, j)))
                    .map(|(i, j)| KernelFn::Tabulated(tab.clone()).eval(grid.node(i), grid.node(j)).abs())
                    .fold(0.0, f64::max);
                KernelSpec::new(KernelFn::Tabulated(tab), e.num_or("kernel.bound", sup)?, small_g, bound_small_g)
            }
            other => return Err(config_err(format!("kernel.name: unknown {other:?}"))),
        };
        kernel.check_bounds(&grid).map_err(|err| config_err(err.to_string()))?;

        let f0 = parse_scalar_fn("terminal.f0", e.get("terminal.f0").unwrap_or("zero"))?;
        let terminal = match e.req("terminal.kind")? {
            "deterministic" => TerminalFamily::Deterministic(f0),
            "gaussian_linear" => {
                let v = numbers("terminal.phi", e.req("terminal.phi")?)?;
                let phi = match v.as_slice() {
                    [a] => GaussianKernel::constant(*a),
                    [a, kappa, lambda] => GaussianKernel { a: *a, kappa: *kappa, lambda: *lambda },
                    _ => return Err(config_err("terminal.phi: expected a or a:kappa:lambda")),
                };
                TerminalFamily::GaussianLinear { f0, phi }
            }
            "terminal_function" => {
                let terms = split_sum(e.req("terminal.h")?)
                    .iter()
                    .map(|term| {
                        let (time, state) = term
                            .split_once('*')
                            .ok_or_else(|| config_err(format!("terminal.h: expected time*state, got {term:?}")))?;
                        Ok(TerminalTerm { time: parse_scalar_fn("terminal.h", time)?, state: parse_state_fn("terminal.h", state)? })
                    })
                    .collect::<Result<Vec<_>>>()?;
                TerminalFamily::terminal_function(terms, horizon)
            }
            other => return Err(config_err(format!("terminal.kind: unknown {other:?}"))),
        };

        let paths = e.count_or("mc.paths", 10_000)? as usize;
        if paths == 0 {
            return Err(config_err("mc.paths must be at least 1"));
        }
        let cfg = Self {
            horizon,
            n,
            measure,
            kernel,
            terminal,
            paths,
            seed: e.count_or("mc.seed", 0)?,
            tol_resolvent: e.num_or("tol.resolvent", 1e-10)?,
            tol_picard: e.num_or("tol.picard", 1e-10)?,
            slack: e.num_or("tol.slack", 10.0)?,
            picard_max_iterations: e.count_or("picard.max_iterations", 200)? as usize,
            beta: e.num_or("beta", 0.0)?,
            output_dir: e.get("output.dir").map(|d| base.map_or_else(|| PathBuf::from(d), |b| b.join(d))),
            entries: map,
        };
        if !(cfg.tol_resolvent > 0.0 && cfg.tol_picard > 0.0 && cfg.slack >= 0.0) || cfg.picard_max_iterations == 0 {
            return Err(config_err("tolerances must be positive and picard.max_iterations at least 1"));
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> TriangularGrid {
        TriangularGrid::new(self.horizon, self.n).expect("validated at parse time")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.entries.insert("mc.seed".into(), seed.to_string());
        self
    }

    pub fn picard(&self) -> PicardConfig {
        PicardConfig { max_iterations: self.picard_max_iterations, tolerance: self.tol_picard, ..PicardConfig::default() }
    }

    pub fn lsmc(&self) -> LsmcConfig {
        LsmcConfig { picard: self.picard(), ..LsmcConfig::default() }
    }

    /// `c·Δ²`.
    pub fn quadrature_tolerance(&self) -> f64 {
        self.slack * self.grid().step().powi(2)
    }

    /// Canonical `key = value` listing of the effective configuration.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

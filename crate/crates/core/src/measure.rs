//! Delay probability measures on `[-T, 0]`.
//!
//! Two interval conventions are exposed because both appear downstream:
//! the reduced kernel weighs `G` by the closed mass `α([a, 0])`, while the
//! Girsanov drift and the martingale residual `U` use the left-open mass
//! `α((a, 0])`. The two differ only by atoms sitting exactly at `a`.

use crate::error::{Error, Result};

/// Tolerance on the total mass of atoms and mixture weights.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    DiracAt(f64),
    Uniform,
    Atoms(Vec<(f64, f64)>),
    Mixture(Vec<(DelayMeasure, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayMeasure {
    horizon: f64,
    kind: MeasureKind,
}

impl DelayMeasure {
    /// Builds and validates a measure.
    pub fn new(horizon: f64, kind: MeasureKind) -> Result<Self> {
        let m = Self::new_unchecked(horizon, kind);
        m.validate()?;
        Ok(m)
    }

    /// Builds a measure without checking invariants; call [`validate`](Self::validate) before use.
    pub fn new_unchecked(horizon: f64, kind: MeasureKind) -> Self {
        Self { horizon, kind }
    }

    pub fn dirac(horizon: f64, u0: f64) -> Result<Self> {
        Self::new(horizon, MeasureKind::DiracAt(u0))
    }

    pub fn uniform(horizon: f64) -> Result<Self> {
        Self::new(horizon, MeasureKind::Uniform)
    }

    pub fn atoms(horizon: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(horizon, MeasureKind::Atoms(atoms))
    }

    pub fn mixture(horizon: f64, parts: Vec<(DelayMeasure, f64)>) -> Result<Self> {
        Self::new(horizon, MeasureKind::Mixture(parts))
    }

    /// Rescales atom or mixture weights so they sum to one. Only applied on request.
    pub fn normalized(mut self) -> Result<Self> {
        match &mut self.kind {
            MeasureKind::Atoms(atoms) => normalize(atoms.iter_mut().map(|(_, w)| w))?,
            MeasureKind::Mixture(parts) => normalize(parts.iter_mut().map(|(_, w)| w))?,
            _ => {}
        }
        self.validate()?;
        Ok(self)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    /// Checks unit total mass and support in `[-T, 0]`, returning the first violation.
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        let check_loc = |u: f64| {
            if !(u >= -self.horizon && u <= 0.0) {
                Err(Error::Support { location: u, horizon: self.horizon })
            } else {
                Ok(())
            }
        };
        match &self.kind {
            MeasureKind::DiracAt(u0) => check_loc(*u0),
            MeasureKind::Uniform => Ok(()),
            MeasureKind::Atoms(atoms) => {
                for &(u, _) in atoms {
                    check_loc(u)?;
                }
                check_weights(atoms.iter().map(|&(_, w)| w))
            }
            MeasureKind::Mixture(parts) => {
                for (part, _) in parts {
                    if part.horizon != self.horizon {
                        return Err(Error::HorizonMismatch {
                            expected: self.horizon,
                            found: part.horizon,
                        });
                    }
                    part.validate()?;
                }
                check_weights(parts.iter().map(|(_, w)| *w))
            }
        }
    }

    fn check_point(&self, a: f64) -> Result<()> {
        if a >= -self.horizon && a <= 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("{a} not in [-{}, 0]", self.horizon)))
        }
    }

    /// `α([a, 0])`.
    pub fn mass_closed(&self, a: f64) -> Result<f64> {
        self.check_point(a)?;
        Ok(self.closed(a))
    }

    /// `α((a, 0])`.
    pub fn mass_left_open(&self, a: f64) -> Result<f64> {
        self.check_point(a)?;
        Ok(self.left_open(a))
    }

    /// Total weight of atoms located exactly at `a`.
    pub fn atom_weight_at(&self, a: f64) -> f64 {
        match &self.kind {
            MeasureKind::DiracAt(u0) => {
                if *u0 == a {
                    1.0
                } else {
                    0.0
                }
            }
            MeasureKind::Uniform => 0.0,
            MeasureKind::Atoms(atoms) => atoms.iter().filter(|(u, _)| *u == a).map(|(_, w)| w).sum(),
            MeasureKind::Mixture(parts) => parts.iter().map(|(p, w)| w * p.atom_weight_at(a)).sum(),
        }
    }

    fn closed(&self, a: f64) -> f64 {
        match &self.kind {
            MeasureKind::DiracAt(u0) => indicator(*u0 >= a),
            MeasureKind::Uniform => (-a / self.horizon).clamp(0.0, 1.0),
            MeasureKind::Atoms(atoms) => atoms.iter().filter(|(u, _)| *u >= a).map(|(_, w)| w).sum(),
            MeasureKind::Mixture(parts) => parts.iter().map(|(p, w)| w * p.closed(a)).sum(),
        }
    }

    fn left_open(&self, a: f64) -> f64 {
        match &self.kind {
            MeasureKind::DiracAt(u0) => indicator(*u0 > a),
            MeasureKind::Uniform => (-a / self.horizon).clamp(0.0, 1.0),
            MeasureKind::Atoms(atoms) => atoms.iter().filter(|(u, _)| *u > a).map(|(_, w)| w).sum(),
            MeasureKind::Mixture(parts) => parts.iter().map(|(p, w)| w * p.left_open(a)).sum(),
        }
    }

    /// Flattens the measure into weighted points for quadrature over `u`.
    ///
    /// Atoms are exact; the uniform part becomes a composite trapezoid with
    /// `uniform_nodes` nodes on `[-T, 0]`.
    pub fn quadrature_points(&self, uniform_nodes: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        self.push_points(1.0, uniform_nodes.max(2), &mut out);
        out
    }

    fn push_points(&self, scale: f64, uniform_nodes: usize, out: &mut Vec<(f64, f64)>) {
        match &self.kind {
            MeasureKind::DiracAt(u0) => out.push((*u0, scale)),
            MeasureKind::Uniform => {
                let intervals = (uniform_nodes - 1) as f64;
                for k in 0..uniform_nodes {
                    let u = -self.horizon + self.horizon * k as f64 / intervals;
                    let w = if k == 0 || k + 1 == uniform_nodes { 0.5 } else { 1.0 };
                    out.push((u, scale * w / intervals));
                }
            }
            MeasureKind::Atoms(atoms) => out.extend(atoms.iter().map(|&(u, w)| (u, scale * w))),
            MeasureKind::Mixture(parts) => {
                for (p, w) in parts {
                    p.push_points(scale * w, uniform_nodes, out);
                }
            }
        }
    }

    /// Spreads the measure over the lags `u = -kΔ`, `k = 0..=n`, of a uniform grid.
    ///
    /// Off-grid atoms are split linearly between their two neighbouring lags and
    /// the uniform part uses the trapezoid rule on the grid itself.
    pub fn lag_weights(&self, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; n + 1];
        self.push_lags(1.0, n, &mut w);
        w
    }

    fn push_lags(&self, scale: f64, n: usize, w: &mut [f64]) {
        let nf = n as f64;
        let put_atom = |u: f64, mass: f64, w: &mut [f64]| {
            let pos = (-u / self.horizon * nf).clamp(0.0, nf);
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if lo >= n || frac == 0.0 {
                w[lo.min(n)] += mass;
            } else {
                w[lo] += mass * (1.0 - frac);
                w[lo + 1] += mass * frac;
            }
        };
        match &self.kind {
            MeasureKind::DiracAt(u0) => put_atom(*u0, scale, w),
            MeasureKind::Uniform => {
                for (k, wk) in w.iter_mut().enumerate() {
                    let half = if k == 0 || k == n { 0.5 } else { 1.0 };
                    *wk += scale * half / nf;
                }
            }
            MeasureKind::Atoms(atoms) => {
                for &(u, m) in atoms {
                    put_atom(u, scale * m, w);
                }
            }
            MeasureKind::Mixture(parts) => {
                for (p, m) in parts {
                    p.push_lags(scale * m, n, w);
                }
            }
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn check_weights(weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    for w in weights {
        if !(w >= 0.0) {
            return Err(Error::Mass { sum: w });
        }
        sum += w;
    }
    if (sum - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::Mass { sum });
    }
    Ok(())
}

fn normalize<'a>(weights: impl Iterator<Item = &'a mut f64>) -> Result<()> {
    let weights: Vec<&mut f64> = weights.collect();
    let sum: f64 = weights.iter().map(|w| **w).sum();
    if !(sum > 0.0) {
        return Err(Error::Mass { sum });
    }
    for w in weights {
        *w /= sum;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_and_open_masses() {
        let u = DelayMeasure::uniform(1.0).unwrap();
        assert_eq!(u.mass_closed(-0.5).unwrap(), 0.5);
        assert_eq!(u.mass_left_open(-0.25).unwrap(), 0.25);

        let d0 = DelayMeasure::dirac(1.0, 0.0).unwrap();
        assert_eq!(d0.mass_closed(-0.7).unwrap(), 1.0);
        assert_eq!(d0.mass_closed(0.0).unwrap(), 1.0);
        assert_eq!(d0.mass_left_open(0.0).unwrap(), 0.0);

        let d = DelayMeasure::dirac(1.0, -0.3).unwrap();
        assert_eq!(d.mass_closed(-0.2).unwrap(), 0.0);
        assert_eq!(d.mass_left_open(-0.3).unwrap(), 0.0);
        assert_eq!(d.mass_closed(-0.3).unwrap(), 1.0);
    }

    #[test]
    fn out_of_range_queries() {
        let u = DelayMeasure::uniform(1.0).unwrap();
        assert!(matches!(u.mass_closed(0.1), Err(Error::Domain(_))));
        assert!(matches!(u.mass_left_open(-1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn validation_errors() {
        assert!(DelayMeasure::atoms(1.0, vec![(-0.5, 0.5), (0.0, 0.5)]).is_ok());
        assert!(matches!(
            DelayMeasure::atoms(1.0, vec![(-0.5, 0.6), (0.0, 0.5)]),
            Err(Error::Mass { .. })
        ));
        assert!(matches!(DelayMeasure::dirac(1.0, -2.0), Err(Error::Support { .. })));
        assert!(matches!(
            DelayMeasure::atoms(1.0, vec![(-0.5, -0.5), (0.0, 1.5)]),
            Err(Error::Mass { .. })
        ));
    }

    #[test]
    fn normalization_on_request() {
        let m = DelayMeasure::new_unchecked(1.0, MeasureKind::Atoms(vec![(-0.5, 2.0), (0.0, 6.0)]));
        assert!(m.validate().is_err());
        let m = m.normalized().unwrap();
        assert_eq!(m.mass_closed(-0.1).unwrap(), 0.75);
    }

    #[test]
    fn uniform_quadrature_points_sum_to_one() {
        let m = DelayMeasure::mixture(
            2.0,
            vec![
                (DelayMeasure::uniform(2.0).unwrap(), 0.4),
                (DelayMeasure::dirac(2.0, -0.5).unwrap(), 0.6),
            ],
        )
        .unwrap();
        let pts = m.quadrature_points(65);
        assert_eq!(pts.len(), 66);
        let total: f64 = pts.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-14);
        let lags = m.lag_weights(8);
        assert!((lags.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // -0.5 sits exactly on lag 2 of an 8-step grid over T = 2.
        assert!((lags[2] - (0.6 + 0.4 / 8.0)).abs() < 1e-14);
    }

    fn arb_measure() -> impl Strategy<Value = DelayMeasure> {
        let atoms = prop::collection::vec((-1.0f64..=0.0, 0.01f64..1.0), 1..5).prop_map(|a| {
            DelayMeasure::new_unchecked(1.0, MeasureKind::Atoms(a)).normalized().unwrap()
        });
        let leaf = prop_oneof![
            (-1.0f64..=0.0).prop_map(|u| DelayMeasure::dirac(1.0, u).unwrap()),
            Just(DelayMeasure::uniform(1.0).unwrap()),
            atoms,
        ];
        prop::collection::vec((leaf, 0.01f64..1.0), 1..4).prop_map(|parts| {
            DelayMeasure::new_unchecked(1.0, MeasureKind::Mixture(parts)).normalized().unwrap()
        })
    }

    proptest! {
        #[test]
        fn open_vs_closed_differ_by_endpoint_atom(m in arb_measure(), a in -1.0f64..=0.0) {
            let c = m.mass_closed(a).unwrap();
            let o = m.mass_left_open(a).unwrap();
            prop_assert!(o <= c + 1e-15);
            prop_assert!((c - o - m.atom_weight_at(a)).abs() < 1e-12);
        }

        #[test]
        fn closed_mass_monotone(m in arb_measure(), a in -1.0f64..=0.0, b in -1.0f64..=0.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m.mass_closed(lo).unwrap() >= m.mass_closed(hi).unwrap() - 1e-15);
            prop_assert!((m.mass_closed(-1.0).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn mixture_is_linear(m in arb_measure(), a in -1.0f64..=0.0) {
            if let MeasureKind::Mixture(parts) = m.kind() {
                let c: f64 = parts.iter().map(|(p, w)| w * p.mass_closed(a).unwrap()).sum();
                let o: f64 = parts.iter().map(|(p, w)| w * p.mass_left_open(a).unwrap()).sum();
                prop_assert!((c - m.mass_closed(a).unwrap()).abs() < 1e-14);
                prop_assert!((o - m.mass_left_open(a).unwrap()).abs() < 1e-14);
            }
        }
    }
}

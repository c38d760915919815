use super::grid::TriangularGrid;
use super::reference::{factorial_remainder, resolvent_remainder};
use super::spec::KernelSpec;
use crate::error::{Error, Result};
use crate::measure::DelayMeasure;
use crate::par;

/// Default cap on the number of Neumann-series orders.
pub const DEFAULT_ORDER_CAP: usize = 60;

/// Kernel values `K(t_i, t_j)` for `i <= j`, stored row-major with zeros below the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    grid: TriangularGrid,
    values: Vec<f64>,
}

impl KernelTable {
    pub fn zeros(grid: TriangularGrid) -> Self {
        let len = grid.len();
        Self { grid, values: vec![0.0; len * len] }
    }

    /// Tabulates `f(i, j)` on `i <= j`.
    pub fn from_fn(grid: TriangularGrid, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> Self {
        let len = grid.len();
        let rows = par::map_indices(len, |i| {
            let mut row = vec![0.0; len];
            for (j, v) in row.iter_mut().enumerate().skip(i) {
                *v = f(i, j);
            }
            row
        });
        Self { grid, values: rows.concat() }
    }

    pub fn grid(&self) -> &TriangularGrid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i > j {
            0.0
        } else {
            self.values[i * self.grid.len() + j]
        }
    }

    /// Row `i`, entries `j = i..=N`.
    pub fn row(&self, i: usize) -> &[f64] {
        let len = self.grid.len();
        &self.values[i * len + i..(i + 1) * len]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn transposed(&self) -> Vec<f64> {
        let len = self.grid.len();
        let mut t = vec![0.0; len * len];
        for i in 0..len {
            for j in i..len {
                t[j * len + i] = self.values[i * len + j];
            }
        }
        t
    }

    fn add_assign(&mut self, other: &KernelTable) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

/// `Φ(t_i, t_j) = α([t_j - T, 0]) G(t_i, t_j)`, or the directly supplied `Φ`.
pub fn build_phi(m: &DelayMeasure, k: &KernelSpec, grid: &TriangularGrid) -> Result<KernelTable> {
    m.validate()?;
    grid.ensure_horizon(m.horizon())?;
    if let Some((phi, _)) = &k.phi_direct {
        return Ok(KernelTable::from_fn(*grid, |i, j| phi.eval(grid.node(i), grid.node(j))));
    }
    let masses = (0..=grid.n())
        .map(|j| m.mass_closed(grid.lag_from_end(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelTable::from_fn(*grid, |i, j| masses[j] * k.g_big(grid.node(i), grid.node(j))))
}

/// Composite trapezoid approximation of `∫_{t_i}^{t_j} A(t_i, s) B(s, t_j) ds`.
pub fn volterra_compose(a: &KernelTable, b: &KernelTable) -> Result<KernelTable> {
    a.grid.ensure_same(&b.grid)?;
    let grid = a.grid;
    let len = grid.len();
    let h = grid.step();
    let bt = b.transposed();
    let rows = par::map_indices(len, |i| {
        let mut row = vec![0.0; len];
        let arow = &a.values[i * len..(i + 1) * len];
        for j in i + 1..len {
            let bcol = &bt[j * len..(j + 1) * len];
            let ends = 0.5 * (arow[i] * bcol[i] + arow[j] * bcol[j]);
            let inner = par::dot(&arow[i + 1..j], &bcol[i + 1..j]);
            row[j] = h * (ends + inner);
        }
        row
    });
    Ok(KernelTable { grid, values: rows.concat() })
}

/// `Φ⁽¹⁾ = Φ`, `Φ⁽ⁿ⁾ = Φ⁽ⁿ⁻¹⁾ ∘ Φ` for `n = 1..=count`.
pub fn iterated_kernels(phi: &KernelTable, count: usize) -> Result<Vec<KernelTable>> {
    let mut out: Vec<KernelTable> = Vec::with_capacity(count);
    for n in 0..count {
        let next = match out.last() {
            None => phi.clone(),
            Some(prev) => volterra_compose(prev, phi)?,
        };
        out.push(next);
        debug_assert_eq!(out.len(), n + 1);
    }
    Ok(out)
}

/// Truncated Neumann series `Ψ = Σ_{n=1}^{n*} Φ⁽ⁿ⁾` with its truncation certificate.
#[derive(Debug, Clone)]
pub struct ResolventTable {
    pub psi: KernelTable,
    /// `n*`.
    pub order: usize,
    /// Certified remainder `Σ_{n>n*} C_Φ^n T^{n-1}/(n-1)!`; always below the requested tolerance.
    pub tail_bound: f64,
    /// `Σ_{n>n*} (C_Φ T)^n/n!`, reported for comparison only.
    pub factorial_tail: f64,
    /// `C_Φ`, the measured grid bound of `Φ`.
    pub phi_bound: f64,
    /// Sup-norm of each `Φ⁽ⁿ⁾` table, `n = 1..=n*`.
    pub series_sup: Vec<f64>,
}

impl ResolventTable {
    pub fn grid(&self) -> &TriangularGrid {
        self.psi.grid()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.psi.get(i, j)
    }
}

/// Smallest order whose certified remainder is below `tol`.
pub fn truncation_order(c: f64, horizon: f64, tol: f64, cap: usize) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if !(c * horizon).is_finite() {
        return Err(Error::Domain("C_Φ T is not finite".into()));
    }
    (1..=cap)
        .find(|&n| resolvent_remainder(c, horizon, n) < tol)
        .ok_or(Error::ToleranceUnreachable { tol, cap })
}

pub fn resolvent(phi: &KernelTable, tol: f64) -> Result<ResolventTable> {
    resolvent_with_cap(phi, tol, DEFAULT_ORDER_CAP)
}

pub fn resolvent_with_cap(phi: &KernelTable, tol: f64, cap: usize) -> Result<ResolventTable> {
    let horizon = phi.grid.horizon();
    let c = phi.sup_norm();
    let order = truncation_order(c, horizon, tol, cap)?;
    let mut psi = phi.clone();
    let mut series_sup = vec![c];
    let mut term = phi.clone();
    for _ in 2..=order {
        term = volterra_compose(&term, phi)?;
        series_sup.push(term.sup_norm());
        psi.add_assign(&term);
    }
    Ok(ResolventTable {
        psi,
        order,
        tail_bound: resolvent_remainder(c, horizon, order),
        factorial_tail: factorial_remainder(c, horizon, order),
        phi_bound: c,
        series_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::spec::{KernelFn, ScalarFn};
    use proptest::prelude::*;

    fn grid(n: usize) -> TriangularGrid {
        TriangularGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn dirac_at_zero_recovers_g() {
        let g = grid(20);
        let m = DelayMeasure::dirac(1.0, 0.0).unwrap();
        let k = KernelSpec::new(KernelFn::PolyExp { coef: 2.0, power: 2, rate: 0.5 }, 2.0, ScalarFn::Zero, 0.0);
        let phi = build_phi(&m, &k, &g).unwrap();
        for i in 0..=20 {
            for j in i..=20 {
                assert_eq!(phi.get(i, j), k.g_big(g.node(i), g.node(j)));
            }
        }
    }

    #[test]
    fn shifted_dirac_truncates_kernel() {
        let g = grid(10);
        let m = DelayMeasure::dirac(1.0, -0.3).unwrap();
        let k = KernelSpec::constant(1.5, 0.0);
        let phi = build_phi(&m, &k, &g).unwrap();
        for i in 0..=10 {
            for j in i..=10 {
                let expect = if g.node(j) <= 0.7 + 1e-12 { 1.5 } else { 0.0 };
                assert_eq!(phi.get(i, j), expect, "({i},{j})");
            }
        }
    }

    #[test]
    fn uniform_example_kernel_matches_direct_phi() {
        // α([s-T,0]) G(t,s) with G = T(s-t)/(T-s) e^{-(s-t)} equals (s-t)e^{-(s-t)} below s = T.
        let g = grid(50);
        let m = DelayMeasure::uniform(1.0).unwrap();
        let k = KernelSpec::new(KernelFn::Example33 { horizon: 1.0 }, f64::INFINITY, ScalarFn::Zero, 0.0);
        let phi = build_phi(&m, &k, &g).unwrap();
        for i in 0..50 {
            for j in i..50 {
                let u = g.node(j) - g.node(i);
                assert!((phi.get(i, j) - u * (-u).exp()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let m = DelayMeasure::uniform(2.0).unwrap();
        let r = build_phi(&m, &KernelSpec::constant(1.0, 0.0), &grid(10));
        assert!(matches!(r, Err(Error::HorizonMismatch { .. })));
    }

    #[test]
    fn compose_constants_exact() {
        let g = grid(16);
        let a = KernelTable::from_fn(g, |_, _| 0.7);
        let c = volterra_compose(&a, &a).unwrap();
        for i in 0..=16 {
            assert_eq!(c.get(i, i), 0.0);
            for j in i..=16 {
                let expect = 0.49 * (g.node(j) - g.node(i));
                assert!((c.get(i, j) - expect).abs() < 1e-14);
            }
        }
        let z = volterra_compose(&a, &KernelTable::zeros(g)).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
    }

    #[test]
    fn compose_linear_kernel_second_order() {
        // ∫_0^1 s (1 - s) ds = 1/6
        let err = |n: usize| {
            let g = grid(n);
            let a = KernelTable::from_fn(g, |i, j| g.node(j) - g.node(i));
            (volterra_compose(&a, &a).unwrap().get(0, n) - 1.0 / 6.0).abs()
        };
        let (e1, e2) = (err(20), err(40));
        // Trapezoid error on a quadratic is exactly h² f''/12 over a unit interval.
        assert!((e1 - 1.0 / (6.0 * 400.0)).abs() < 1e-13);
        assert!(e1 / e2 > 3.9, "ratio {}", e1 / e2);
        assert!(volterra_compose(&KernelTable::zeros(grid(4)), &KernelTable::zeros(grid(5))).is_err());
    }

    #[test]
    fn constant_kernel_resolvent() {
        let g = grid(200);
        let phi = KernelTable::from_fn(g, |_, _| 1.0);
        let r = resolvent(&phi, 1e-10).unwrap();
        assert!(r.tail_bound < 1e-10);
        assert!((r.get(0, 200) - std::f64::consts::E).abs() < 1e-4);
    }

    #[test]
    fn zero_kernel_resolvent() {
        let r = resolvent(&KernelTable::zeros(grid(10)), 1e-8).unwrap();
        assert_eq!(r.order, 1);
        assert_eq!(r.psi.sup_norm(), 0.0);
    }

    #[test]
    fn order_cap_enforced() {
        let g = grid(4);
        let phi = KernelTable::from_fn(g, |_, _| 40.0);
        assert!(matches!(resolvent(&phi, 1e-12), Err(Error::ToleranceUnreachable { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn resolvent_identity_holds(c0 in -1.5f64..1.5, c1 in -1.0f64..1.0, rate in 0.0f64..2.0) {
            let g = grid(40);
            let phi = KernelTable::from_fn(g, |i, j| {
                let u = g.node(j) - g.node(i);
                c0 + c1 * u * (-rate * u).exp()
            });
            let tol = 1e-10;
            let r = resolvent(&phi, tol).unwrap();
            let left = volterra_compose(&phi, &r.psi).unwrap();
            let right = volterra_compose(&r.psi, &phi).unwrap();
            let mut gap_left = 0.0f64;
            let mut gap_right = 0.0f64;
            for i in 0..=40 {
                for j in i..=40 {
                    let base = r.get(i, j) - phi.get(i, j);
                    gap_left = gap_left.max((base - left.get(i, j)).abs());
                    gap_right = gap_right.max((base - right.get(i, j)).abs());
                }
            }
            // The discrete series satisfies the discrete resolvent equation up to truncation.
            prop_assert!(gap_left <= tol + 1e-12, "left {gap_left}");
            prop_assert!(gap_right <= tol + 1e-12, "right {gap_right}");
        }

        #[test]
        fn iterated_kernels_respect_certified_bound(c in 0.1f64..2.5) {
            let g = grid(30);
            let phi = KernelTable::from_fn(g, |_, _| c);
            let its = iterated_kernels(&phi, 8).unwrap();
            for (n, k) in its.iter().enumerate() {
                let bound = super::super::reference::iterated_kernel_bound(c, 1.0, n + 1);
                prop_assert!(k.sup_norm() <= bound * (1.0 + 1e-9) + 10.0 / 900.0);
            }
        }
    }
}

//! Gauss–Hermite rules for expectations against the standard normal law.

use nalgebra::{DMatrix, SymmetricEigen};

/// Node count used for conditional expectations of terminal functions.
pub const GAUSS_HERMITE_NODES: usize = 64;

/// Nodes `z_i` and weights `w_i` with `E[f(Z)] ≈ Σ w_i f(z_i)`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut roots: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        roots.sort_by(f64::total_cmp);
        // Newton polish on the orthonormal recurrence, then Christoffel weights.
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for (i, &x0) in roots.iter().enumerate() {
            let mut x = x0;
            for _ in 0..3 {
                let (p, dp, _) = orthonormal_hermite(n, x);
                if dp != 0.0 {
                    x -= p / dp;
                }
            }
            nodes[i] = x;
            weights[i] = 1.0 / orthonormal_hermite(n, x).2;
        }
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { nodes, weights }
    }

    pub fn standard() -> &'static GaussHermite {
        use std::sync::OnceLock;
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(GAUSS_HERMITE_NODES))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(mean + sd Z)]`.
    pub fn expect(&self, mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
        if sd == 0.0 {
            return f(mean);
        }
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * f(mean + sd * z))
            .sum()
    }
}

/// `(p_n(x), p_n'(x), Σ_{k<n} p_k(x)²)` for the orthonormal probabilists' Hermite polynomials.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, (n as f64).sqrt() * prev, sumsq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments_exact() {
        let gh = GaussHermite::standard();
        // E[Z^{2k}] = (2k-1)!!
        let mut dfact = 1.0;
        for k in 0..20i32 {
            if k > 0 {
                dfact *= (2 * k - 1) as f64;
            }
            let m = gh.expect(0.0, 1.0, |z| z.powi(2 * k));
            assert!((m / dfact - 1.0).abs() < 1e-10, "moment {}: {m} vs {dfact}", 2 * k);
            let odd = gh.expect(0.0, 1.0, |z| z.powi(2 * k + 1));
            assert!(odd.abs() < 1e-9 * dfact.max(1.0));
        }
    }

    #[test]
    fn exponential_moment() {
        let gh = GaussHermite::standard();
        let v = gh.expect(0.3, 1.2, f64::exp);
        assert!((v - (0.3f64 + 0.72).exp()).abs() < 1e-12);
        assert_eq!(gh.expect(0.7, 0.0, |x| x * x), 0.7 * 0.7);
    }
}

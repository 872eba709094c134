//! Orthogonal-function recurrences and quadrature helpers.
//!
//! Everything here avoids explicit factorials: Hermite functions use the
//! normalized three-term recurrence and Laguerre polynomials their standard
//! recurrence, so orders in the hundreds stay finite.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Highest Fock index accepted by [`hermite_function`].
pub const MAX_FOCK_ORDER: usize = 512;

/// Fills `out[j] = ψ_j(x)` for `j = 0..out.len()`.
pub fn hermite_functions_into(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if out.len() == 1 {
        return;
    }
    out[1] = std::f64::consts::SQRT_2 * x * out[0];
    for j in 1..out.len() - 1 {
        let jf = j as f64;
        out[j + 1] =
            (std::f64::consts::SQRT_2 * x * out[j] - jf.sqrt() * out[j - 1]) / (jf + 1.0).sqrt();
    }
}

/// The normalized Hermite function ψ_j(x) of the Fock basis.
pub fn hermite_function(j: usize, x: f64) -> Result<f64> {
    if j > MAX_FOCK_ORDER {
        return Err(Error::UnsupportedOrder {
            order: j,
            max: MAX_FOCK_ORDER,
        });
    }
    let mut buf = vec![0.0; j + 1];
    hermite_functions_into(x, &mut buf);
    Ok(buf[j])
}

/// Generalized Laguerre polynomial L_k^α(x).
pub fn laguerre(k: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for m in 1..k {
        let mf = m as f64;
        let next = ((2.0 * mf + 1.0 + alpha - x) * cur - (mf + alpha) * prev) / (mf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[k] = L_k^α(x)` for `k = 0..out.len()`.
pub fn laguerre_sequence_into(alpha: f64, x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = 1.0 + alpha - x;
    for m in 1..out.len() - 1 {
        let mf = m as f64;
        out[m + 1] =
            ((2.0 * mf + 1.0 + alpha - x) * out[m] - (mf + alpha) * out[m - 1]) / (mf + 1.0);
    }
}

/// sqrt(k!/j!) for j ≥ k, as a running product.
pub fn sqrt_factorial_ratio(j: usize, k: usize) -> f64 {
    debug_assert!(j >= k);
    ((k + 1)..=j).fold(1.0, |acc, m| acc / (m as f64).sqrt())
}

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for m in 2..=n {
                    let mf = m as f64;
                    let p2 = ((2.0 * mf - 1.0) * x * p1 - (mf - 1.0) * p0) / mf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = nf * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 16-point rule.
    pub fn order16() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(16))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Composite rule with `panels` equal subintervals of [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * width;
            let mid = lo + 0.5 * width;
            let half = 0.5 * width;
            let mut acc = 0.0;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                acc += w * f(mid + half * x);
            }
            total += acc * half;
        }
        total
    }

    /// Expands the composite rule into explicit (node, weight) pairs on [a, b].
    pub fn composite_nodes(&self, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        let mut xs = Vec::with_capacity(panels * self.nodes.len());
        let mut ws = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * width;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                xs.push(mid + 0.5 * width * x);
                ws.push(0.5 * width * w);
            }
        }
        (xs, ws)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_spot_values() {
        let psi0 = hermite_function(0, 0.0).unwrap();
        assert!((psi0 - 0.751_125_544_464_942_5).abs() < 1e-15);
        assert_eq!(hermite_function(1, 0.0).unwrap(), 0.0);
        // H_2(0) = -2 with normalization 1/sqrt(sqrt(pi) 2^2 2!)
        let expected = -2.0 / (8.0 * PI.sqrt()).sqrt();
        assert!((hermite_function(2, 0.0).unwrap() - expected).abs() < 1e-15);
        // H_3(x) = 8x^3 - 12x at x = 0.7
        let x: f64 = 0.7;
        let h3 = 8.0 * x.powi(3) - 12.0 * x;
        let expected = h3 * (-x * x / 2.0).exp() / (PI.sqrt() * 8.0 * 6.0).sqrt();
        assert!((hermite_function(3, x).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn hermite_order_guard() {
        assert!(hermite_function(512, 1.0).unwrap().is_finite());
        assert!(matches!(
            hermite_function(513, 1.0),
            Err(Error::UnsupportedOrder { order: 513, .. })
        ));
        for &x in &[-40.0, -20.0, 0.3, 40.0] {
            assert!(hermite_function(512, x).unwrap().is_finite());
        }
    }

    #[test]
    fn laguerre_matches_explicit_forms() {
        // L_2^a(x) = (x^2 - 2(a+2)x + (a+1)(a+2)) / 2
        for &(a, x) in &[(0.0, 0.3), (1.0, 2.5), (3.0, 7.0)] {
            let explicit = (x * x - 2.0 * (a + 2.0) * x + (a + 1.0) * (a + 2.0)) / 2.0;
            assert!((laguerre(2, a, x) - explicit).abs() < 1e-12);
        }
        let mut seq = vec![0.0; 6];
        laguerre_sequence_into(2.0, 1.3, &mut seq);
        for (k, v) in seq.iter().enumerate() {
            assert!((v - laguerre(k, 2.0, 1.3)).abs() < 1e-12);
        }
        // L_k^a(0) = binom(k + a, k)
        assert!((laguerre(5, 3.0, 0.0) - 56.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let rule = GaussLegendre::new(16);
        let sum: f64 = rule.weights().iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
        let v = rule.integrate(0.0, 2.0, 3, |x| x.powi(31));
        assert!((v / (2f64.powi(32) / 32.0) - 1.0).abs() < 1e-13);
        let g = rule.integrate(-8.0, 8.0, 8, |x| (-x * x).exp());
        assert!((g - PI.sqrt()).abs() < 1e-13);
    }
}

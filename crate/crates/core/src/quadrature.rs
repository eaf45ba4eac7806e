//! Quadrature rules: Gauss-Legendre and the periodic trapezoid rule.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Result, SpadeError};

/// Node counts and tolerance used when averaging over dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct QuadratureSpec {
    /// Trapezoid nodes per period for trajectory models.
    pub trapezoid_nodes: usize,
    /// Gauss-Legendre nodes in the azimuthal angle.
    pub phi_nodes: usize,
    /// Gauss-Legendre nodes in the polar angle.
    pub theta_nodes: usize,
    /// Absolute tolerance on the change under node doubling.
    pub tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            trapezoid_nodes: 64,
            phi_nodes: 48,
            theta_nodes: 48,
            tolerance: 1e-10,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, n) in [
            ("trapezoid-nodes", self.trapezoid_nodes),
            ("phi-nodes", self.phi_nodes),
            ("theta-nodes", self.theta_nodes),
        ] {
            if n < 16 {
                return Err(SpadeError::invalid(
                    field,
                    format!("need at least 16 nodes, got {n}"),
                ));
            }
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(SpadeError::invalid("tolerance", "must be positive"));
        }
        Ok(())
    }

    /// The same rule with every node count doubled.
    pub fn refined(&self) -> Self {
        QuadratureSpec {
            trapezoid_nodes: 2 * self.trapezoid_nodes,
            phi_nodes: 2 * self.phi_nodes,
            theta_nodes: 2 * self.theta_nodes,
            tolerance: self.tolerance,
        }
    }
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `P_n` from the Chebyshev initial guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, half * w))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Fractions of a period `t/T = j/n`, `j = 0..n`, each with weight `1/n`.
pub fn periodic_trapezoid(n: usize) -> impl Iterator<Item = (f64, f64)> {
    let w = 1.0 / n as f64;
    (0..n).map(move |j| (j as f64 * w, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in [1, 2, 5, 16, 48, 200] {
            let gl = GaussLegendre::new(n);
            let s: f64 = gl.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} sum={s}");
        }
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let gl = GaussLegendre::new(6);
        // exact through degree 11
        let v = gl.integrate(0.0, 2.0, |x| x.powi(11));
        assert!((v - 2f64.powi(12) / 12.0).abs() < 1e-10);
    }

    #[test]
    fn gauss_legendre_three_point_nodes() {
        let gl = GaussLegendre::new(3);
        assert!((gl.nodes[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((gl.weights[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_integrates_trig_exactly() {
        let avg: f64 = periodic_trapezoid(16)
            .map(|(t, w)| w * (2.0 * PI * t).cos().powi(2))
            .sum();
        assert!((avg - 0.5).abs() < 1e-15);
    }

    #[test]
    fn spec_rejects_too_few_nodes() {
        let q = QuadratureSpec {
            trapezoid_nodes: 8,
            ..Default::default()
        };
        assert!(q.validate().is_err());
        assert!(QuadratureSpec::default().validate().is_ok());
    }
}

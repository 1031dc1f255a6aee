//! Gauss-Hermite quadrature.
//!
//! Physicists' convention: nodes and weights integrate against exp(-x^2),
//! so for `Z ~ N(m, s^2)`,
//!
//! ```text
//! E[f(Z)] = (1/sqrt(pi)) * sum_i w_i f(m + sqrt(2) s x_i).
//! ```
//!
//! Nodes are the roots of the degree-n Hermite polynomial, found by Newton
//! iteration on the orthonormal three-term recurrence with the classical
//! asymptotic initial guesses; stable well past n = 300 in f64. The 127-node
//! rule is the independent oracle that closed-form prices are checked
//! against.

use crate::error::{Error, Result};

const SQRT_PI: f64 = 1.772_453_850_905_516;

#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("Gauss-Hermite rule needs n >= 1".into()));
        }
        let nf = n as f64;
        // Orthonormal Hermite recurrence: h_j = x sqrt(2/j) h_{j-1}
        //   - sqrt((j-1)/j) h_{j-2}, h_0 = pi^{-1/4}; h_n' = sqrt(2n) h_{n-1}.
        let eval = |z: f64| -> (f64, f64) {
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            (p1, (2.0 * nf).sqrt() * p2)
        };

        // Locate the nonnegative roots by scanning for sign changes and
        // polishing each bracket with Newton, falling back to bisection
        // whenever a step would leave the bracket. All roots lie inside
        // (-sqrt(2n+1), sqrt(2n+1)) and their spacing is tightest at the
        // origin, about pi/sqrt(2n+1), so a scan step of a third of that
        // isolates every root regardless of n.
        let m = (n + 1) / 2;
        let edge = (2.0 * nf + 1.0).sqrt();
        let step = std::f64::consts::PI / (3.0 * edge);
        let mut found: Vec<(f64, f64)> = Vec::with_capacity(m);
        if n % 2 == 1 {
            // Odd-degree rules have a root pinned at the origin.
            let (_, pp) = eval(0.0);
            found.push((0.0, pp));
        }
        let mut a = if n % 2 == 1 { 0.5 * step } else { 0.0 };
        let mut fa = eval(a).0;
        while found.len() < m && a < edge {
            let b = a + step;
            let fb = eval(b).0;
            if fa == 0.0 {
                found.push((a, eval(a).1));
            } else if fa * fb < 0.0 {
                found.push(polish_root(&eval, a, fa, b)?);
            }
            a = b;
            fa = fb;
        }
        if found.len() != m {
            return Err(Error::numerical(
                "gauss_hermite",
                format!(
                    "root scan for the n={n} rule located {} of {m} nonnegative roots",
                    found.len()
                ),
            ));
        }

        // found is ascending; mirror it into the full symmetric rule.
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for (idx, &(z, pp)) in found.iter().enumerate() {
            let w = 2.0 / (pp * pp);
            nodes[n - m + idx] = z;
            weights[n - m + idx] = w;
            nodes[m - 1 - idx] = -z;
            weights[m - 1 - idx] = w;
        }
        Ok(GaussHermite { nodes, weights })
    }

    /// E[f(Z)] for Z ~ N(mean, sd^2). Degenerate sd = 0 collapses to f(mean).
    pub fn expect_normal<F: Fn(f64) -> f64>(&self, mean: f64, sd: f64, f: F) -> f64 {
        if sd == 0.0 {
            return f(mean);
        }
        let scale = std::f64::consts::SQRT_2 * sd;
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mean + scale * x);
        }
        acc / SQRT_PI
    }

    /// Same expectation computed stably in log space: returns
    /// ln E[exp(le(Z))] where `le` supplies log-integrand values.
    pub fn log_expect_normal<F: Fn(f64) -> f64>(&self, mean: f64, sd: f64, le: F) -> f64 {
        if sd == 0.0 {
            return le(mean);
        }
        let scale = std::f64::consts::SQRT_2 * sd;
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w.ln() + le(mean + scale * x))
            .collect();
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
        m + s.ln() - SQRT_PI.ln()
    }
}

/// Newton with a bisection safeguard inside the sign-change bracket
/// [a, b]. Returns the root and the derivative there.
fn polish_root<F: Fn(f64) -> (f64, f64)>(
    eval: &F,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
) -> Result<(f64, f64)> {
    let mut z = 0.5 * (a + b);
    for _ in 0..200 {
        let (f, d) = eval(z);
        if f == 0.0 {
            return Ok((z, d));
        }
        if f * fa < 0.0 {
            b = z;
        } else {
            a = z;
            fa = f;
        }
        let newton = z - f / d;
        let z_next = if newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (z_next - z).abs() < 1e-15 * (1.0 + z.abs()) {
            let (_, d_final) = eval(z_next);
            return Ok((z_next, d_final));
        }
        z = z_next;
    }
    Err(Error::numerical(
        "gauss_hermite",
        format!("root refinement stalled in [{a}, {b}]"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for &n in &[1usize, 2, 5, 31, 64, 127, 200, 255] {
            let gh = GaussHermite::new(n).unwrap();
            let s: f64 = gh.weights.iter().sum();
            assert_relative_eq!(s, SQRT_PI, max_relative = 1e-12);
        }
    }

    #[test]
    fn integrates_monomials_against_gaussian_weight() {
        let gh = GaussHermite::new(20).unwrap();
        // int x^2 e^{-x^2} dx = sqrt(pi)/2, int x^4 e^{-x^2} dx = 3 sqrt(pi)/4.
        let m2: f64 = gh
            .nodes
            .iter()
            .zip(&gh.weights)
            .map(|(x, w)| w * x * x)
            .sum();
        let m4: f64 = gh
            .nodes
            .iter()
            .zip(&gh.weights)
            .map(|(x, w)| w * x.powi(4))
            .sum();
        assert_relative_eq!(m2, SQRT_PI / 2.0, max_relative = 1e-12);
        assert_relative_eq!(m4, 0.75 * SQRT_PI, max_relative = 1e-12);
    }

    #[test]
    fn nodes_are_symmetric_and_ascending() {
        let gh = GaussHermite::new(127).unwrap();
        for i in 1..gh.nodes.len() {
            assert!(gh.nodes[i] > gh.nodes[i - 1]);
        }
        for i in 0..gh.nodes.len() {
            assert_relative_eq!(
                gh.nodes[i],
                -gh.nodes[gh.nodes.len() - 1 - i],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn expect_normal_reproduces_lognormal_mean() {
        // E[e^Z] = e^{m + s^2/2} for Z ~ N(m, s^2).
        let gh = GaussHermite::new(64).unwrap();
        let (m, s) = (0.3, 0.7);
        let got = gh.expect_normal(m, s, |z| z.exp());
        assert_relative_eq!(got, (m + 0.5 * s * s).exp(), max_relative = 1e-13);
    }

    #[test]
    fn expect_normal_reproduces_gaussian_moments() {
        let gh = GaussHermite::new(40).unwrap();
        let (m, s) = (-0.5, 1.3);
        assert_relative_eq!(gh.expect_normal(m, s, |z| z), m, epsilon = 1e-12);
        assert_relative_eq!(
            gh.expect_normal(m, s, |z| (z - m) * (z - m)),
            s * s,
            max_relative = 1e-12
        );
        // Fourth central moment 3 s^4.
        assert_relative_eq!(
            gh.expect_normal(m, s, |z| (z - m).powi(4)),
            3.0 * s.powi(4),
            max_relative = 1e-12
        );
    }

    #[test]
    fn log_expect_normal_matches_linear_expectation() {
        let gh = GaussHermite::new(64).unwrap();
        let got = gh.log_expect_normal(0.1, 0.4, |z| -2.0 * z);
        // ln E[e^{-2Z}] = -2m + 2 s^2.
        assert_relative_eq!(got, -0.2 + 2.0 * 0.16, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_sd_collapses_to_point_evaluation() {
        let gh = GaussHermite::new(16).unwrap();
        assert_relative_eq!(gh.expect_normal(1.5, 0.0, |z| z * z), 2.25);
    }

    #[test]
    fn node_doubling_is_stable_on_smooth_integrands() {
        let g1 = GaussHermite::new(127).unwrap();
        let g2 = GaussHermite::new(255).unwrap();
        let f = |z: f64| (-0.7 * (z + 0.3) * (z + 0.3)).exp();
        let a = g1.expect_normal(0.0, 1.0, f);
        let b = g2.expect_normal(0.0, 1.0, f);
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }
}

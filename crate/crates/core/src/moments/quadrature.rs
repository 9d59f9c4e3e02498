//! Gauss–Legendre and Gauss–Hermite rules, computed by Newton iteration on
//! the orthonormal three-term recurrences.

use std::f64::consts::PI;

/// Nodes and weights of a quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

const MAX_NEWTON: usize = 100;

/// `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "a quadrature rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..MAX_NEWTON {
            let (p, dp) = legendre_with_derivative(n, z);
            let step = p / dp;
            z -= step;
            if step.abs() <= 1e-16 {
                break;
            }
        }
        let (_, deriv) = legendre_with_derivative(n, z);
        let w = 2.0 / ((1.0 - z * z) * deriv * deriv);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
    }
    let dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
    (p1, dp)
}

/// `n`-point Gauss–Hermite rule for the weight `exp(−z²)` on the real line.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1, "a quadrature rule needs at least one node");
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut roots = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        // Initial guesses for the largest roots, then extrapolation from the
        // two previously found ones.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * roots[0],
            3 => 1.91 * z - 0.91 * roots[1],
            _ => 2.0 * z - roots[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..MAX_NEWTON {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        roots[i] = z;
        roots[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    // Ascending order.
    roots.reverse();
    weights.reverse();
    if n % 2 == 1 {
        roots[n / 2] = 0.0;
    }
    Rule { nodes: roots, weights }
}

/// Gauss–Hermite rule rescaled to integrate against the standard normal
/// density: `E[h(Z)] ≈ Σ wᵢ h(zᵢ)`.
pub fn standard_normal_rule(n: usize) -> Rule {
    let Rule { nodes, weights } = gauss_hermite(n);
    let inv_sqrt_pi = 1.0 / PI.sqrt();
    Rule {
        nodes: nodes.into_iter().map(|z| z * std::f64::consts::SQRT_2).collect(),
        weights: weights.into_iter().map(|w| w * inv_sqrt_pi).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(8);
        // ∫ x^k over [-1, 1] for k ≤ 15
        for k in 0..16 {
            let q: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "k={k}: {q} vs {exact}");
        }
    }

    #[test]
    fn legendre_large_rule_weights_sum_to_two() {
        for n in [1, 2, 3, 64, 129] {
            let rule = gauss_legendre(n);
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}: {s}");
            assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn hermite_reproduces_normal_moments() {
        for n in [2, 5, 20, 64, 128] {
            let rule = standard_normal_rule(n);
            let moment = |k: i32| -> f64 {
                rule.nodes.iter().zip(&rule.weights).map(|(z, w)| w * z.powi(k)).sum()
            };
            assert!((moment(0) - 1.0).abs() < 1e-13, "n={n}");
            assert!(moment(1).abs() < 1e-13, "n={n}");
            assert!((moment(2) - 1.0).abs() < 1e-12, "n={n}");
            if n >= 3 {
                assert!((moment(4) - 3.0).abs() < 1e-11, "n={n}");
            }
            assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

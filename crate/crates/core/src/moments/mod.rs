//! Gaussian expectations of the clipped and soft-thresholded system output.
//!
//! In the large-N limit the system output `x = gᵀu` and the filter output
//! `y = wᵀu` are zero-mean jointly Gaussian with covariance
//!
//! ```text
//! Σ = ρ² [ σ_g²  r ]
//!        [ r     Q ]
//! ```
//!
//! Everything the macroscopic dynamics needs reduces to five expectations:
//! `⟨f(x)²⟩`, `⟨y²⟩`, `⟨f(x)y⟩`, `⟨xy⟩` and `⟨f(x)x⟩`. For both nonlinearities
//! `⟨f(x)y⟩` and `⟨f(x)x⟩` share a single scalar factor, the *gain*
//! `E = P(|x| < S)` for saturation and `E = P(|x| > D)` for the dead zone.

pub mod quadrature;

use std::f64::consts::FRAC_2_PI;

pub use libm::{erf, erfc};
use thiserror::Error;

use crate::model::{MacroState, Nonlinearity, NonlinearityKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentsError {
    #[error("parameter `{0}` must be positive and finite")]
    InvalidParameter(&'static str),
    #[error("nonlinearity threshold must be nonnegative, got {0}")]
    InvalidThreshold(f64),
    #[error("covariance is not positive semidefinite: r = {r}, q = {q}, sigma_g2 = {sigma_g2}")]
    NotPositiveSemidefinite { r: f64, q: f64, sigma_g2: f64 },
    #[error("quadrature needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
}

/// The five sample means entering the MSE and the macroscopic ODEs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    /// ⟨f(x)²⟩
    pub fx2: f64,
    /// ⟨y²⟩
    pub y2: f64,
    /// ⟨f(x)y⟩
    pub fxy: f64,
    /// ⟨xy⟩
    pub xy: f64,
    /// ⟨f(x)x⟩
    pub fxx: f64,
}

impl GaussianMoments {
    /// `⟨(f(x) − y + ξ)²⟩` with independent zero-mean noise of variance `sigma_xi2`.
    pub fn mse(&self, sigma_xi2: f64) -> f64 {
        self.fx2 + self.y2 - 2.0 * self.fxy + sigma_xi2
    }

    /// Largest absolute component-wise difference.
    pub fn max_abs_diff(&self, other: &GaussianMoments) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.fx2, self.y2, self.fxy, self.xy, self.fxx]
    }
}

fn check_params(rho2: f64, sigma_g2: f64) -> Result<(), MomentsError> {
    if !(rho2.is_finite() && rho2 > 0.0) {
        return Err(MomentsError::InvalidParameter("rho2"));
    }
    if !(sigma_g2.is_finite() && sigma_g2 > 0.0) {
        return Err(MomentsError::InvalidParameter("sigma_g2"));
    }
    Ok(())
}

fn check_threshold(nl: &Nonlinearity) -> Result<(), MomentsError> {
    if nl.threshold.is_nan() || nl.threshold < 0.0 {
        return Err(MomentsError::InvalidThreshold(nl.threshold));
    }
    Ok(())
}

/// Shared scalar factor of `⟨f(x)y⟩ = ρ²r·E` and `⟨f(x)x⟩ = ρ²σ_g²·E`:
/// `erf(S/√(2ρ²σ_g²))` for saturation, `1 − erf(D/√(2ρ²σ_g²))` for the dead zone.
pub fn gain(nl: &Nonlinearity, rho2: f64, sigma_g2: f64) -> f64 {
    let z = nl.threshold / (2.0 * rho2 * sigma_g2).sqrt();
    match nl.kind {
        NonlinearityKind::Saturation => erf(z),
        NonlinearityKind::DeadZone => erfc(z),
    }
}

/// `⟨f(x)²⟩` for `x ~ N(0, ρ²σ_g²)`.
pub fn output_power(nl: &Nonlinearity, rho2: f64, sigma_g2: f64) -> f64 {
    let var = rho2 * sigma_g2;
    let th = nl.threshold;
    match nl.kind {
        NonlinearityKind::Saturation if th.is_infinite() => var,
        NonlinearityKind::Saturation => {
            // S² − S·√(2v/π)·e^{−S²/2v} + (v − S²)·erf, regrouped so that the
            // S² terms do not cancel when erf rounds to one.
            let z = th / (2.0 * var).sqrt();
            th * th * erfc(z) - th * (FRAC_2_PI * var).sqrt() * (-z * z).exp() + var * erf(z)
        }
        NonlinearityKind::DeadZone => {
            let z = th / (2.0 * var).sqrt();
            (th * th + var) * erfc(z) - th * (FRAC_2_PI * var).sqrt() * (-z * z).exp()
        }
    }
}

/// Closed-form Gaussian moments at macroscopic state `state`.
pub fn closed_form_moments(
    nl: &Nonlinearity,
    rho2: f64,
    sigma_g2: f64,
    state: MacroState,
) -> Result<GaussianMoments, MomentsError> {
    check_params(rho2, sigma_g2)?;
    check_threshold(nl)?;
    let e = gain(nl, rho2, sigma_g2);
    Ok(GaussianMoments {
        fx2: output_power(nl, rho2, sigma_g2),
        y2: rho2 * state.q,
        fxy: rho2 * state.r * e,
        xy: rho2 * state.r,
        fxx: rho2 * sigma_g2 * e,
    })
}

/// Half-width of the standardized x-range integrated by the oracle; the
/// Gaussian mass outside is below 1e-40.
const ORACLE_RANGE: f64 = 14.0;
/// Widest panel (in standard deviations of x) of the piecewise Legendre rule.
const ORACLE_PANEL: f64 = 2.0;

/// Numerical evaluation of the same five expectations by tensor-product
/// quadrature over the bivariate Gaussian.
///
/// `x` is integrated with a piecewise Gauss–Legendre rule (`nodes` points per
/// panel) whose panel edges include the kinks at `±threshold`; `y` is written
/// as `(r/σ_g²)x + s·z` with `z` standard normal and integrated with an
/// `nodes`-point Gauss–Hermite rule. A singular covariance (`Q = r²/σ_g²`)
/// collapses `y` onto its conditional mean.
pub fn oracle_moments(
    nl: &Nonlinearity,
    rho2: f64,
    sigma_g2: f64,
    state: MacroState,
    nodes: usize,
) -> Result<GaussianMoments, MomentsError> {
    check_params(rho2, sigma_g2)?;
    check_threshold(nl)?;
    if nodes < 2 {
        return Err(MomentsError::TooFewNodes(nodes));
    }
    let MacroState { r, q } = state;
    let cond_q = q - r * r / sigma_g2;
    let slack = 1e-12 * q.abs().max(r * r / sigma_g2).max(f64::MIN_POSITIVE);
    if !(q >= 0.0 && cond_q >= -slack) {
        return Err(MomentsError::NotPositiveSemidefinite { r, q, sigma_g2 });
    }
    let slope = r / sigma_g2;
    let cond_sd = (rho2 * cond_q.max(0.0)).sqrt();
    let x_sd = (rho2 * sigma_g2).sqrt();

    let legendre = quadrature::gauss_legendre(nodes);
    let normal = quadrature::standard_normal_rule(nodes);

    let mut edges = vec![-ORACLE_RANGE, ORACLE_RANGE];
    let kink = nl.threshold / x_sd;
    if kink > 0.0 && kink < ORACLE_RANGE {
        edges.extend([-kink, kink]);
    }
    edges.sort_by(f64::total_cmp);

    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = GaussianMoments { fx2: 0.0, y2: 0.0, fxy: 0.0, xy: 0.0, fxx: 0.0 };
    for piece in edges.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        let panels = ((b - a) / ORACLE_PANEL).ceil().max(1.0) as usize;
        let width = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * width;
            let half = 0.5 * width;
            let mid = lo + half;
            for (t, wt) in legendre.nodes.iter().zip(&legendre.weights) {
                let s = mid + half * t;
                let weight_x = wt * half * inv_sqrt_2pi * (-0.5 * s * s).exp();
                let x = x_sd * s;
                let fx = nl.apply(x);
                acc.fx2 += weight_x * fx * fx;
                acc.fxx += weight_x * fx * x;
                let mean_y = slope * x;
                for (z, wz) in normal.nodes.iter().zip(&normal.weights) {
                    let y = mean_y + cond_sd * z;
                    let w = weight_x * wz;
                    acc.y2 += w * y * y;
                    acc.fxy += w * fx * y;
                    acc.xy += w * x * y;
                }
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    // Reference values from mpmath at 40 significant digits, rounded to f64.
    const ERF_TABLE: &[(f64, f64)] = &[
        (0.0, 0.0),
        (1e-10, 1.1283791670955126e-10),
        (0.1, 0.1124629160182849),
        (0.25, 0.27632639016823696),
        (0.5, 0.5204998778130465),
        (0.6, 0.6038560908479259),
        (0.84375, 0.7672256612323416),
        (1.0, 0.8427007929497149),
        (1.25, 0.9229001282564583),
        (2.0, 0.9953222650189527),
        (2.857, 0.9999466417399131),
        (3.5, 0.9999992569016276),
        (5.0, 0.9999999999984626),
        (6.0, 1.0),
        (40.0, 1.0),
    ];

    const ERFC_TABLE: &[(f64, f64)] = &[
        (0.3, 0.6713732405408726),
        (0.7, 0.3221988061625815),
        (1.0, 0.15729920705028513),
        (2.0, 0.004677734981047266),
        (4.0, 1.541725790028002e-8),
        (10.0, 2.088487583762545e-45),
        (26.0, 5.663192408856143e-296),
        (-1.0, 1.8427007929497148),
    ];

    #[test]
    fn erf_matches_high_precision_reference() {
        for &(x, want) in ERF_TABLE {
            let got = erf(x);
            assert!((got - want).abs() <= 1e-15, "erf({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn erfc_matches_high_precision_reference_relatively() {
        for &(x, want) in ERFC_TABLE {
            let got = erfc(x);
            assert!(((got - want) / want).abs() <= 4e-15, "erfc({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn erf_special_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(40.0) - 1.0).abs() <= 1e-15);
        assert_eq!(erf(f64::INFINITY), 1.0);
        assert_eq!(erf(f64::NEG_INFINITY), -1.0);
        assert!(erf(f64::NAN).is_nan());
        assert_eq!(erfc(f64::INFINITY), 0.0);
        assert_eq!(erfc(f64::NEG_INFINITY), 2.0);
    }

    #[test]
    fn erf_is_exactly_odd() {
        for i in 0..2000 {
            let x = i as f64 * 0.0037 + 1e-9;
            assert_eq!(erf(-x).to_bits(), (-erf(x)).to_bits());
        }
    }

    #[test]
    fn erf_and_erfc_are_complementary() {
        for i in 0..600 {
            let x = -3.0 + i as f64 * 0.01;
            assert!((erf(x) + erfc(x) - 1.0).abs() <= 2e-16 * 4.0, "x={x}");
        }
    }

    fn expanded_fx2_saturation(s: f64, v: f64) -> f64 {
        let z = s / (2.0 * v).sqrt();
        s * s - s * (2.0 * v / PI).sqrt() * (-s * s / (2.0 * v)).exp() + (v - s * s) * erf(z)
    }

    fn expanded_fx2_dead_zone(d: f64, v: f64) -> f64 {
        let z = d / (2.0 * v).sqrt();
        (d * d + v) * (1.0 - erf(z)) - d * (2.0 * v / PI).sqrt() * (-d * d / (2.0 * v)).exp()
    }

    #[test]
    fn regrouped_forms_equal_the_expanded_expressions() {
        for &v in &[0.1, 1.0, 3.7] {
            for i in 0..60 {
                let th = i as f64 * 0.1;
                let sat = output_power(&Nonlinearity::saturation(th), v, 1.0);
                let dz = output_power(&Nonlinearity::dead_zone(th), v, 1.0);
                assert!((sat - expanded_fx2_saturation(th, v)).abs() < 1e-13);
                assert!((dz - expanded_fx2_dead_zone(th, v)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_clip_level_kills_the_output() {
        let m = closed_form_moments(&Nonlinearity::saturation(0.0), 1.0, 1.0, MacroState::new(0.3, 0.5))
            .unwrap();
        assert_eq!((m.fx2, m.fxy, m.fxx), (0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_dead_zone_is_linear() {
        let m = closed_form_moments(&Nonlinearity::dead_zone(0.0), 1.0, 1.0, MacroState::new(0.3, 0.5))
            .unwrap();
        assert_eq!(m, GaussianMoments { fx2: 1.0, y2: 0.5, fxy: 0.3, xy: 0.3, fxx: 1.0 });
    }

    #[test]
    fn reference_output_powers() {
        // 1 − √(2/π)·e^{−1/2} and 2·erfc(1/√2) − √(2/π)·e^{−1/2}, from mpmath.
        let sat = output_power(&Nonlinearity::saturation(1.0), 1.0, 1.0);
        let dz = output_power(&Nonlinearity::dead_zone(1.0), 1.0, 1.0);
        assert!((sat - 0.5160585509617133).abs() < 1e-15, "{sat}");
        assert!((dz - 0.150_679_566_687_541_5).abs() < 1e-15, "{dz}");
    }

    #[test]
    fn infinite_clip_is_linear() {
        let m = closed_form_moments(&Nonlinearity::identity(), 2.0, 0.5, MacroState::new(0.2, 0.4))
            .unwrap();
        assert_eq!(m, GaussianMoments { fx2: 1.0, y2: 0.8, fxy: 0.4, xy: 0.4, fxx: 1.0 });
    }

    #[test]
    fn invalid_inputs() {
        let nl = Nonlinearity::saturation(1.0);
        assert_eq!(
            closed_form_moments(&nl, 0.0, 1.0, MacroState::ZERO),
            Err(MomentsError::InvalidParameter("rho2"))
        );
        assert_eq!(
            closed_form_moments(&nl, 1.0, -1.0, MacroState::ZERO),
            Err(MomentsError::InvalidParameter("sigma_g2"))
        );
        assert!(matches!(
            oracle_moments(&nl, 1.0, 1.0, MacroState::new(0.9, 0.5), 64),
            Err(MomentsError::NotPositiveSemidefinite { .. })
        ));
        assert_eq!(
            oracle_moments(&nl, 1.0, 1.0, MacroState::ZERO, 1),
            Err(MomentsError::TooFewNodes(1))
        );
    }

    #[test]
    fn oracle_linear_limit() {
        let m = oracle_moments(&Nonlinearity::saturation(1e6), 1.0, 1.0, MacroState::new(0.2, 0.4), 64)
            .unwrap();
        assert!((m.fx2 - 1.0).abs() < 1e-12);
        assert!((m.fxy - 0.2).abs() < 1e-12);
        assert!((m.y2 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn oracle_uncorrelated_output() {
        let m = oracle_moments(&Nonlinearity::saturation(1.0), 1.0, 1.0, MacroState::new(0.0, 1.0), 64)
            .unwrap();
        assert!(m.fxy.abs() < 1e-14);
    }

    #[test]
    fn oracle_dead_zone_agrees_with_closed_form() {
        let nl = Nonlinearity::dead_zone(0.5);
        let state = MacroState::new(0.4, 0.6);
        let c = closed_form_moments(&nl, 1.0, 1.0, state).unwrap();
        let o = oracle_moments(&nl, 1.0, 1.0, state, 64).unwrap();
        assert!(c.max_abs_diff(&o) <= 1e-8, "{c:?} vs {o:?}");
    }

    #[test]
    fn oracle_handles_singular_covariance() {
        // Q = r²/σ_g² exactly, and the origin r = Q = 0.
        for state in [MacroState::new(0.5, 0.25), MacroState::ZERO] {
            for nl in [Nonlinearity::saturation(0.7), Nonlinearity::dead_zone(0.7)] {
                let c = closed_form_moments(&nl, 1.0, 1.0, state).unwrap();
                let o = oracle_moments(&nl, 1.0, 1.0, state, 64).unwrap();
                assert!(c.max_abs_diff(&o) <= 1e-10, "{nl}: {c:?} vs {o:?}");
            }
        }
    }

    #[test]
    fn moments_obey_cauchy_schwarz() {
        for th in [0.0, 0.3, 1.0, 2.5] {
            for nl in [Nonlinearity::saturation(th), Nonlinearity::dead_zone(th)] {
                let m = closed_form_moments(&nl, 1.3, 0.8, MacroState::new(0.5, 0.4)).unwrap();
                assert!(m.fx2 >= 0.0 && m.y2 >= 0.0);
                assert!(m.fxy.abs() <= (m.fx2 * m.y2).sqrt() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn monotone_in_threshold() {
        let mut prev_sat = -1.0;
        let mut prev_dz = f64::INFINITY;
        for i in 0..=500 {
            let th = i as f64 * 0.01;
            let sat = output_power(&Nonlinearity::saturation(th), 1.0, 1.0);
            let dz = output_power(&Nonlinearity::dead_zone(th), 1.0, 1.0);
            assert!(sat >= prev_sat, "saturation fx2 decreased at {th}");
            assert!(dz <= prev_dz, "dead-zone fx2 increased at {th}");
            prev_sat = sat;
            prev_dz = dz;
        }
    }

    #[test]
    fn fxx_is_fxy_rescaled() {
        for nl in [Nonlinearity::saturation(0.8), Nonlinearity::dead_zone(0.8)] {
            let r = 0.37;
            let m = closed_form_moments(&nl, 1.5, 0.9, MacroState::new(r, 0.5)).unwrap();
            assert!((m.fxx - 0.9 / r * m.fxy).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_mse_at_origin_is_output_power() {
        let nl = Nonlinearity::saturation(1.0);
        let m = closed_form_moments(&nl, 1.0, 1.0, MacroState::ZERO).unwrap();
        assert_eq!(m.mse(0.25), m.fx2 + 0.25);
    }
}

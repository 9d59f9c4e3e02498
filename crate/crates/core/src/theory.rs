//! Analytic learning curves and steady-state results.
//!
//! Substituting the closed-form moments into the macroscopic ODEs gives a
//! linear system in `(r, Q)` with constant coefficients, solved exactly by
//!
//! ```text
//! r(t) = σ_g² E (1 − e^{−μρ²t})
//! Q(t) = 2σ_g² E² (1 − e^{−μρ²t}) − A (1 − e^{−μρ²(2−μρ²)t})
//! A    = (2σ_g² E² − μ(⟨f(x)²⟩ + σ_ξ²)) / (2 − μρ²)
//! ```
//!
//! where `E` is the type's gain factor (see [`crate::moments::gain`]). The
//! MSE then relaxes with the single rate `μρ²(2−μρ²)`.

use std::f64::consts::{FRAC_2_PI, SQRT_2};

use thiserror::Error;

use crate::model::{
    ConfigError, ExperimentConfig, MacroState, Nonlinearity, Trajectory, TrajectoryPoint,
    TrajectorySource,
};
use crate::moments::{self, erf, erfc, MomentsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Moments(#[from] MomentsError),
    #[error("mu * rho2 = 2 exactly; the analytic solution is undefined")]
    DegenerateStepSize,
    #[error("no steady state: mu * rho2 = {mu_rho2} is outside (0, 2)")]
    Diverges { mu_rho2: f64 },
    #[error("root of the maximization condition is not bracketed by [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
}

/// Closed-form coefficients of the learning dynamics for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticSolution {
    pub config: ExperimentConfig,
    /// Amplitude of the slow transient shared by Q and the MSE.
    pub a_coeff: f64,
    gain: f64,
    output_power: f64,
    r_const: f64,
    q_const: f64,
    mse_const: f64,
    converges: bool,
}

/// Solve the macroscopic dynamics in closed form.
pub fn solve(config: &ExperimentConfig) -> Result<AnalyticSolution, TheoryError> {
    AnalyticSolution::new(config)
}

impl AnalyticSolution {
    pub fn new(config: &ExperimentConfig) -> Result<Self, TheoryError> {
        let validation = config.validate()?;
        let mu_rho2 = config.mu_rho2();
        if mu_rho2 == 2.0 {
            return Err(TheoryError::DegenerateStepSize);
        }
        let ExperimentConfig { rho2, sigma_g2, sigma_xi2, mu, nonlinearity, .. } = *config;
        let gain = moments::gain(&nonlinearity, rho2, sigma_g2);
        let output_power = moments::output_power(&nonlinearity, rho2, sigma_g2);
        let q_drive = 2.0 * sigma_g2 * gain * gain;
        let a_coeff = (q_drive - mu * (output_power + sigma_xi2)) / (2.0 - mu_rho2);
        Ok(Self {
            config: *config,
            a_coeff,
            gain,
            output_power,
            r_const: sigma_g2 * gain,
            q_const: q_drive - a_coeff,
            mse_const: steady_state_mse_formula(&nonlinearity, rho2, sigma_g2, sigma_xi2, mu_rho2),
            converges: validation.converges,
        })
    }

    /// Relaxation rate of `r`: `μρ²`.
    pub fn fast_rate(&self) -> f64 {
        self.config.mu_rho2()
    }

    /// Relaxation rate of the MSE (and the second mode of `Q`): `μρ²(2 − μρ²)`.
    /// Negative when the configuration diverges.
    pub fn slow_rate(&self) -> f64 {
        let k = self.config.mu_rho2();
        k * (2.0 - k)
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// `⟨f(x)²⟩`, independent of the state.
    pub fn output_power(&self) -> f64 {
        self.output_power
    }

    pub fn converges(&self) -> bool {
        self.converges
    }

    pub fn r_inf(&self) -> Option<f64> {
        self.converges.then_some(self.r_const)
    }

    pub fn q_inf(&self) -> Option<f64> {
        self.converges.then_some(self.q_const)
    }

    pub fn mse_inf(&self) -> Option<f64> {
        self.converges.then_some(self.mse_const)
    }

    /// `(r(t), Q(t))` from the closed-form solution, starting at `r = Q = 0`.
    pub fn macro_at(&self, t: f64) -> MacroState {
        let sigma_g2 = self.config.sigma_g2;
        let rise_fast = -(-self.fast_rate() * t).exp_m1();
        let rise_slow = -(-self.slow_rate() * t).exp_m1();
        MacroState {
            r: self.r_const * rise_fast,
            q: 2.0 * sigma_g2 * self.gain * self.gain * rise_fast - self.a_coeff * rise_slow,
        }
    }

    /// `MSE(t) = ρ²A·e^{−μρ²(2−μρ²)t} + MSE(∞)`.
    pub fn mse_at(&self, t: f64) -> f64 {
        self.config.rho2 * self.a_coeff * (-self.slow_rate() * t).exp() + self.mse_const
    }

    pub fn nmsd_at(&self, t: f64) -> f64 {
        self.macro_at(t).nmsd(self.config.sigma_g2)
    }

    /// `σ_g² − 2r(∞) + Q(∞)`.
    pub fn steady_state_nmsd(&self) -> Result<f64, TheoryError> {
        if !self.converges {
            return Err(TheoryError::Diverges { mu_rho2: self.config.mu_rho2() });
        }
        Ok(self.config.sigma_g2 - 2.0 * self.r_const + self.q_const)
    }

    pub fn point_at(&self, t: f64) -> TrajectoryPoint {
        let state = self.macro_at(t);
        TrajectoryPoint {
            t,
            state,
            mse: self.mse_at(t),
            nmsd: state.nmsd(self.config.sigma_g2),
        }
    }

    /// Evaluate the solution at each of `times`.
    pub fn trajectory<I>(&self, times: I) -> Trajectory
    where
        I: IntoIterator<Item = f64>,
    {
        let mut traj = Trajectory::new(TrajectorySource::Theory, self.config);
        traj.points.extend(times.into_iter().map(|t| self.point_at(t)));
        traj
    }
}

/// The kind-independent bracket of the steady-state MSE as a function of
/// `u = threshold/(ρσ_g)`:
/// `erfc(u/√2)·(u² + erf(u/√2)) − √(2/π)·u·e^{−u²/2}`.
pub fn steady_state_bracket(u: f64) -> f64 {
    if u.is_infinite() {
        return 0.0;
    }
    let z = u / SQRT_2;
    erfc(z) * (u * u + erf(z)) - FRAC_2_PI.sqrt() * u * (-0.5 * u * u).exp()
}

fn steady_state_mse_formula(
    nl: &Nonlinearity,
    rho2: f64,
    sigma_g2: f64,
    sigma_xi2: f64,
    mu_rho2: f64,
) -> f64 {
    let var = rho2 * sigma_g2;
    let u = nl.threshold / var.sqrt();
    let denom = 2.0 - mu_rho2;
    2.0 * var / denom * steady_state_bracket(u) + 2.0 / denom * sigma_xi2
}

/// Steady-state MSE. Saturation and dead zone give identical values for a
/// common threshold, so `nl.kind` does not enter.
pub fn steady_state_mse(
    nl: &Nonlinearity,
    rho2: f64,
    sigma_g2: f64,
    sigma_xi2: f64,
    mu: f64,
) -> Result<f64, TheoryError> {
    let config = ExperimentConfig {
        rho2,
        sigma_g2,
        sigma_xi2,
        mu,
        nonlinearity: *nl,
        ..ExperimentConfig::default()
    };
    if !config.validate()?.converges {
        return Err(TheoryError::Diverges { mu_rho2: config.mu_rho2() });
    }
    Ok(steady_state_mse_formula(nl, rho2, sigma_g2, sigma_xi2, config.mu_rho2()))
}

/// Threshold maximizing the steady-state MSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxThreshold {
    /// The saturation value / dead-zone width itself.
    pub threshold: f64,
    /// `threshold / (ρσ_g)`.
    pub normalized: f64,
    /// Left-hand side minus one of the stationarity condition at `threshold`.
    pub residual: f64,
}

/// `(1 + √(2ρ²σ_g²/(π θ²))·e^{−θ²/(2ρ²σ_g²)})·erf(θ/√(2ρ²σ_g²)) − 1`; zero at the
/// threshold maximizing the steady-state MSE.
pub fn max_condition_residual(threshold: f64, rho2: f64, sigma_g2: f64) -> f64 {
    let var = rho2 * sigma_g2;
    let th2 = threshold * threshold;
    (1.0 + (2.0 * var / (std::f64::consts::PI * th2)).sqrt() * (-th2 / (2.0 * var)).exp())
        * erf(threshold / (2.0 * var).sqrt())
        - 1.0
}

fn normalized_condition(u: f64) -> f64 {
    let tail = FRAC_2_PI.sqrt() * (-0.5 * u * u).exp();
    (1.0 + tail / u) * erf(u / SQRT_2) - 1.0
}

fn normalized_condition_slope(u: f64) -> f64 {
    let tail = FRAC_2_PI.sqrt() * (-0.5 * u * u).exp();
    -tail * (u * u + 1.0) / (u * u) * erf(u / SQRT_2) + (1.0 + tail / u) * tail
}

const BRACKET_LO: f64 = 1e-8;
const BRACKET_HI: f64 = 10.0;
const BRACKET_WIDTH: f64 = 1e-13;

/// Solve the stationarity condition of the steady-state MSE for the
/// threshold. The condition depends only on `threshold/(ρσ_g)`, so neither
/// the step size nor the noise level enters.
///
/// Bisection on `u ∈ [1e-8, 10]` down to a width of 1e-13, then one Newton
/// step that is kept only if it does not increase the residual.
pub fn solve_max_threshold(rho2: f64, sigma_g2: f64) -> Result<MaxThreshold, TheoryError> {
    for (name, v) in [("rho2", rho2), ("sigma_g2", sigma_g2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(ConfigError::NonPositiveParameter(name).into());
        }
    }
    let (mut lo, mut hi) = (BRACKET_LO, BRACKET_HI);
    if !(normalized_condition(lo) < 0.0 && normalized_condition(hi) >= 0.0) {
        return Err(TheoryError::BracketFailure { lo, hi });
    }
    while hi - lo > BRACKET_WIDTH {
        let mid = 0.5 * (lo + hi);
        if normalized_condition(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut u = 0.5 * (lo + hi);
    let polished = u - normalized_condition(u) / normalized_condition_slope(u);
    if polished.is_finite()
        && (polished - u).abs() <= BRACKET_WIDTH
        && normalized_condition(polished).abs() <= normalized_condition(u).abs()
    {
        u = polished;
    }
    let scale = (rho2 * sigma_g2).sqrt();
    let threshold = u * scale;
    Ok(MaxThreshold {
        threshold,
        normalized: u,
        residual: max_condition_residual(threshold, rho2, sigma_g2),
    })
}

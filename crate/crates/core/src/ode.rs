//! Direct numerical integration of the macroscopic ODEs
//!
//! ```text
//! dr/dt = μ(⟨f(x)x⟩ − ⟨xy⟩)
//! dQ/dt = μ²(⟨f(x)²⟩ − 2⟨f(x)y⟩ + ⟨y²⟩ + σ_ξ²) + 2μ(⟨f(x)y⟩ − ⟨y²⟩)
//! ```
//!
//! with the moments evaluated in closed form at each stage. This is the
//! independent check on the analytic solution in [`crate::theory`].

use thiserror::Error;

use crate::model::{
    ConfigError, ExperimentConfig, MacroState, Trajectory, TrajectoryPoint, TrajectorySource,
};
use crate::moments::{closed_form_moments, MomentsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Moments(#[from] MomentsError),
    #[error("invalid integrator settings: {0}")]
    InvalidSettings(&'static str),
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OdeMethod {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeSettings {
    pub dt: f64,
    pub t_end: f64,
    pub method: OdeMethod,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self { dt: 1e-3, t_end: 200.0, method: OdeMethod::Rk4 }
    }
}

/// Right-hand side `(dr/dt, dQ/dt)` at `state`.
pub fn rhs(config: &ExperimentConfig, state: MacroState) -> Result<(f64, f64), OdeError> {
    let m = closed_form_moments(&config.nonlinearity, config.rho2, config.sigma_g2, state)?;
    let mu = config.mu;
    let dr = mu * (m.fxx - m.xy);
    let dq = mu * mu * m.mse(config.sigma_xi2) + 2.0 * mu * (m.fxy - m.y2);
    Ok((dr, dq))
}

fn step(
    config: &ExperimentConfig,
    s: MacroState,
    h: f64,
    method: OdeMethod,
) -> Result<MacroState, OdeError> {
    let shift = |s: MacroState, k: (f64, f64), c: f64| MacroState::new(s.r + c * k.0, s.q + c * k.1);
    let k1 = rhs(config, s)?;
    match method {
        OdeMethod::Euler => Ok(shift(s, k1, h)),
        OdeMethod::Rk4 => {
            let k2 = rhs(config, shift(s, k1, 0.5 * h))?;
            let k3 = rhs(config, shift(s, k2, 0.5 * h))?;
            let k4 = rhs(config, shift(s, k3, h))?;
            Ok(MacroState::new(
                s.r + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                s.q + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            ))
        }
    }
}

fn point(config: &ExperimentConfig, t: f64, state: MacroState) -> Result<TrajectoryPoint, OdeError> {
    let m = closed_form_moments(&config.nonlinearity, config.rho2, config.sigma_g2, state)?;
    Ok(TrajectoryPoint { t, state, mse: m.mse(config.sigma_xi2), nmsd: state.nmsd(config.sigma_g2) })
}

/// Integrate from `r = Q = 0` at `t = 0` to `settings.t_end` with a fixed
/// step, recording every step. The last step is shortened to land on `t_end`.
pub fn integrate(config: &ExperimentConfig, settings: &OdeSettings) -> Result<Trajectory, OdeError> {
    integrate_recorded(config, settings, 1)
}

/// As [`integrate`], recording every `record_every`-th step plus the final one.
pub fn integrate_recorded(
    config: &ExperimentConfig,
    settings: &OdeSettings,
    record_every: usize,
) -> Result<Trajectory, OdeError> {
    config.validate()?;
    let OdeSettings { dt, t_end, method } = *settings;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(OdeError::InvalidSettings("dt must be positive and finite"));
    }
    if !(t_end.is_finite() && t_end >= dt) {
        return Err(OdeError::InvalidSettings("t_end must be finite and at least dt"));
    }
    if record_every == 0 {
        return Err(OdeError::InvalidSettings("record_every must be at least 1"));
    }
    // Absorb rounding in t_end/dt so that 20/1e-3 gives 20000 steps, not 20001.
    let ratio = t_end / dt;
    let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio { ratio.round() } else { ratio.ceil() } as usize;
    let mut traj = Trajectory::new(TrajectorySource::Theory, *config);
    traj.points.reserve(steps / record_every + 2);
    let mut state = MacroState::ZERO;
    traj.points.push(point(config, 0.0, state)?);
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let t1 = if k + 1 == steps { t_end } else { (k + 1) as f64 * dt };
        state = step(config, state, t1 - t0, method)?;
        if !(state.r.is_finite() && state.q.is_finite()) {
            return Err(OdeError::NonFiniteState { t: t1 });
        }
        if (k + 1) % record_every == 0 || k + 1 == steps {
            traj.points.push(point(config, t1, state)?);
        }
    }
    Ok(traj)
}

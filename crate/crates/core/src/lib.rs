//! Statistical-mechanical analysis of LMS system identification when the
//! unknown system's output is clipped (saturation) or soft-thresholded
//! (dead zone).
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: domain types shared by everything else ([`ExperimentConfig`],
//!   [`Nonlinearity`], [`MacroState`], [`ImpulseResponse`], [`Trajectory`]).
//! - [`moments`]: closed-form Gaussian expectations of the nonlinearities, the
//!   error function, and an independent quadrature oracle.
//! - [`theory`]: analytic learning curves, steady-state MSE/MSD and the
//!   threshold that maximizes the steady-state MSE.
//! - [`ode`]: direct numerical integration of the macroscopic ODEs.
//! - [`sim`]: seeded, parallel Monte Carlo ensembles of the actual adaptive
//!   filter.

pub mod model;
pub mod moments;
pub mod ode;
pub mod sim;
pub mod theory;

pub use model::{
    ConfigError, ExperimentConfig, ImpulseError, ImpulseResponse, MacroState, Nonlinearity,
    NonlinearityKind, SignalDistribution, Trajectory, TrajectoryPoint, TrajectorySource,
    Validation,
};
pub use moments::{closed_form_moments, erf, erfc, oracle_moments, GaussianMoments, MomentsError};
pub use ode::{OdeError, OdeMethod, OdeSettings};
pub use sim::{
    Algorithm, ColumnStats, EnsembleResult, EnsembleStat, EnsembleStats, SimError, SimPlan,
    TrialSeries,
};
pub use theory::{AnalyticSolution, MaxThreshold, TheoryError};

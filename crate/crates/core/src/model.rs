//! Domain types and the dimensionless reductions shared by every module.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Relative tolerance for `(1/N)·‖g‖² = σ_g²` after normalization.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parameter `{0}` must be positive")]
    NonPositiveParameter(&'static str),
    #[error("parameter `{0}` must be finite")]
    NonFiniteParameter(&'static str),
    #[error("nonlinearity threshold must be nonnegative, got {0}")]
    NegativeThreshold(f64),
    #[error("an infinite threshold is only meaningful for the saturation type")]
    InfiniteDeadZone,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImpulseError {
    #[error("impulse response is empty")]
    Empty,
    #[error("impulse response is identically zero")]
    AllZeroResponse,
    #[error("impulse response has {len} samples but the filter only has {taps} taps")]
    LengthExceedsTaps { len: usize, taps: usize },
    #[error("impulse response contains a non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("target sigma_g2 must be positive and finite, got {0}")]
    InvalidTarget(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NonlinearityKind {
    Saturation,
    DeadZone,
}

impl fmt::Display for NonlinearityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonlinearityKind::Saturation => f.write_str("saturation"),
            NonlinearityKind::DeadZone => f.write_str("dead_zone"),
        }
    }
}

/// The memoryless nonlinearity placed after the unknown system.
///
/// `threshold` is the saturation value S for [`NonlinearityKind::Saturation`]
/// and the dead-zone width D for [`NonlinearityKind::DeadZone`]. A saturation
/// with `threshold == f64::INFINITY` is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nonlinearity {
    pub kind: NonlinearityKind,
    pub threshold: f64,
}

impl Nonlinearity {
    pub const fn saturation(threshold: f64) -> Self {
        Self { kind: NonlinearityKind::Saturation, threshold }
    }

    pub const fn dead_zone(threshold: f64) -> Self {
        Self { kind: NonlinearityKind::DeadZone, threshold }
    }

    /// Saturation with an infinite clip level.
    pub const fn identity() -> Self {
        Self::saturation(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.threshold.is_nan() {
            return Err(ConfigError::NonFiniteParameter("threshold"));
        }
        if self.threshold < 0.0 {
            return Err(ConfigError::NegativeThreshold(self.threshold));
        }
        if self.threshold.is_infinite() && self.kind == NonlinearityKind::DeadZone {
            return Err(ConfigError::InfiniteDeadZone);
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        let th = self.threshold;
        match self.kind {
            NonlinearityKind::Saturation => x.clamp(-th, th),
            NonlinearityKind::DeadZone => {
                if x > th {
                    x - th
                } else if x < -th {
                    x + th
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind, self.threshold)
    }
}

/// Zero-mean distribution family used for the input and the background noise.
/// Each is scaled to the requested variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SignalDistribution {
    #[default]
    Gaussian,
    /// Uniform on `[-√3σ, √3σ]`.
    Uniform,
    /// `±σ` with equal probability.
    Rademacher,
}

impl SignalDistribution {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R, std_dev: f64) -> f64 {
        match self {
            SignalDistribution::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                z * std_dev
            }
            SignalDistribution::Uniform => {
                let half_width = 3f64.sqrt() * std_dev;
                (2.0 * rng.random::<f64>() - 1.0) * half_width
            }
            SignalDistribution::Rademacher => {
                if rng.random::<bool>() {
                    std_dev
                } else {
                    -std_dev
                }
            }
        }
    }
}

impl fmt::Display for SignalDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalDistribution::Gaussian => f.write_str("gaussian"),
            SignalDistribution::Uniform => f.write_str("uniform"),
            SignalDistribution::Rademacher => f.write_str("rademacher"),
        }
    }
}

/// Scalar parameters of one theory or simulation scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    /// ρ² = Nσ², the input power seen by the whole tap-delay line.
    pub rho2: f64,
    /// σ_g² = (1/N)‖g‖².
    pub sigma_g2: f64,
    /// Background-noise variance σ_ξ².
    pub sigma_xi2: f64,
    /// LMS step size μ.
    pub mu: f64,
    /// Adaptive filter length N.
    pub taps: usize,
    pub nonlinearity: Nonlinearity,
    pub input_dist: SignalDistribution,
    pub noise_dist: SignalDistribution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rho2: 1.0,
            sigma_g2: 1.0,
            sigma_xi2: 0.0,
            mu: 1.0,
            taps: 400,
            nonlinearity: Nonlinearity::identity(),
            input_dist: SignalDistribution::Gaussian,
            noise_dist: SignalDistribution::Gaussian,
        }
    }
}

/// Outcome of a successful [`ExperimentConfig::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Validation {
    pub converges: bool,
}

impl Validation {
    pub fn warnings(&self) -> Vec<String> {
        if self.converges {
            Vec::new()
        } else {
            vec!["step size violates 0 < mu < 2/rho2; the MSE diverges".to_owned()]
        }
    }
}

impl ExperimentConfig {
    pub fn with_nonlinearity(mut self, nonlinearity: Nonlinearity) -> Self {
        self.nonlinearity = nonlinearity;
        self
    }

    /// Per-sample input variance σ² = ρ²/N.
    pub fn input_variance(&self) -> f64 {
        self.rho2 / self.taps as f64
    }

    /// μρ², the only combination of step size and input power the theory sees.
    pub fn mu_rho2(&self) -> f64 {
        self.mu * self.rho2
    }

    /// `0 < μ < 2/ρ²`.
    pub fn converges(&self) -> bool {
        self.mu > 0.0 && self.mu_rho2() < 2.0
    }

    pub fn validate(&self) -> Result<Validation, ConfigError> {
        positive_finite("rho2", self.rho2)?;
        positive_finite("sigma_g2", self.sigma_g2)?;
        positive_finite("mu", self.mu)?;
        if !self.sigma_xi2.is_finite() {
            return Err(ConfigError::NonFiniteParameter("sigma_xi2"));
        }
        if self.sigma_xi2 < 0.0 {
            return Err(ConfigError::NonPositiveParameter("sigma_xi2"));
        }
        if self.taps == 0 {
            return Err(ConfigError::NonPositiveParameter("taps"));
        }
        self.nonlinearity.validate()?;
        Ok(Validation { converges: self.converges() })
    }
}

fn positive_finite(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_nan() || value.is_infinite() {
        return Err(ConfigError::NonFiniteParameter(name));
    }
    if value <= 0.0 {
        return Err(ConfigError::NonPositiveParameter(name));
    }
    Ok(())
}

/// Macroscopic overlaps r = (1/N)gᵀw and Q = (1/N)wᵀw.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MacroState {
    pub r: f64,
    pub q: f64,
}

impl MacroState {
    pub const ZERO: MacroState = MacroState { r: 0.0, q: 0.0 };

    pub const fn new(r: f64, q: f64) -> Self {
        Self { r, q }
    }

    /// Normalized MSD (1/N)‖g − w‖² = σ_g² − 2r + Q.
    pub fn nmsd(&self, sigma_g2: f64) -> f64 {
        sigma_g2 - 2.0 * self.r + self.q
    }
}

/// Unknown-system impulse response, zero-padded to the adaptive filter length
/// and scaled so that `(1/N)‖g‖² = σ_g²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    coeffs: Vec<f64>,
    support_len: usize,
    target_sigma_g2: f64,
}

impl ImpulseResponse {
    /// Scale `raw` to the requested power and pad it with zeros to `taps`.
    pub fn normalize(raw: &[f64], taps: usize, target_sigma_g2: f64) -> Result<Self, ImpulseError> {
        if raw.is_empty() {
            return Err(ImpulseError::Empty);
        }
        if raw.len() > taps {
            return Err(ImpulseError::LengthExceedsTaps { len: raw.len(), taps });
        }
        if !(target_sigma_g2.is_finite() && target_sigma_g2 > 0.0) {
            return Err(ImpulseError::InvalidTarget(target_sigma_g2));
        }
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(ImpulseError::NonFiniteSample(i));
        }
        // Pre-scale by the largest magnitude so the energy cannot overflow or underflow.
        let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return Err(ImpulseError::AllZeroResponse);
        }
        let energy: f64 = raw.iter().map(|v| (v / peak) * (v / peak)).sum();
        let scale = (target_sigma_g2 * taps as f64 / energy).sqrt() / peak;

        let mut coeffs = vec![0.0; taps];
        for (c, v) in coeffs.iter_mut().zip(raw) {
            *c = v * scale;
        }
        Ok(Self { coeffs, support_len: raw.len(), target_sigma_g2 })
    }

    /// Gaussian white response of length `support_len`, normalized.
    pub fn random(
        seed: u64,
        support_len: usize,
        taps: usize,
        target_sigma_g2: f64,
    ) -> Result<Self, ImpulseError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..support_len).map(|_| rng.sample(StandardNormal)).collect();
        Self::normalize(&raw, taps, target_sigma_g2)
    }

    /// Acoustically plausible response: a short bulk delay, a direct-path
    /// spike, a few discrete early reflections and an exponentially decaying
    /// diffuse tail.
    pub fn synthetic_room(
        seed: u64,
        support_len: usize,
        taps: usize,
        target_sigma_g2: f64,
    ) -> Result<Self, ImpulseError> {
        const DELAY: usize = 6;
        const DECAY_SAMPLES: f64 = 72.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut raw = vec![0.0; support_len];
        for (k, v) in raw.iter_mut().enumerate().skip(DELAY.min(support_len)) {
            let n: f64 = rng.sample(StandardNormal);
            *v = 0.35 * n * (-((k - DELAY) as f64) / DECAY_SAMPLES).exp();
        }
        if support_len > DELAY {
            raw[DELAY] += 1.0;
        }
        for (offset, gain) in [(11usize, -0.55), (23, 0.4), (37, -0.3)] {
            if let Some(v) = raw.get_mut(DELAY + offset) {
                *v += gain;
            }
        }
        if raw.iter().all(|v| *v == 0.0) {
            raw[0] = 1.0;
        }
        Self::normalize(&raw, taps, target_sigma_g2)
    }

    /// All N coefficients, zero beyond [`Self::support_len`].
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// The unpadded response g₀.
    pub fn g0(&self) -> &[f64] {
        &self.coeffs[..self.support_len]
    }

    pub fn support_len(&self) -> usize {
        self.support_len
    }

    pub fn padded_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn target_sigma_g2(&self) -> f64 {
        self.target_sigma_g2
    }

    /// `(1/N)·Σ gᵢ²` recomputed from the stored coefficients.
    pub fn measured_sigma_g2(&self) -> f64 {
        self.coeffs.iter().map(|g| g * g).sum::<f64>() / self.coeffs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectorySource {
    Theory,
    Simulation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub state: MacroState,
    pub mse: f64,
    pub nmsd: f64,
}

/// Time series of macroscopic state, MSE and normalized MSD.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub source: TrajectorySource,
    pub meta: ExperimentConfig,
}

impl Trajectory {
    pub fn new(source: TrajectorySource, meta: ExperimentConfig) -> Self {
        Self { points: Vec::new(), source, meta }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectoryPoint> {
        self.points.last()
    }

    /// Largest |a − b| of the MSE over points shared by both trajectories
    /// (matched by index; the time grids must agree).
    pub fn max_mse_deviation(&self, other: &Trajectory) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a.mse - b.mse).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_config() -> ExperimentConfig {
        ExperimentConfig::default().with_nonlinearity(Nonlinearity::saturation(0.5))
    }

    #[test]
    fn reference_setting_validates_and_converges() {
        let v = reference_config().validate().unwrap();
        assert!(v.converges);
        assert!(v.warnings().is_empty());
    }

    #[test]
    fn zero_step_size_is_rejected() {
        let cfg = ExperimentConfig { mu: 0.0, ..reference_config() };
        assert_eq!(cfg.validate(), Err(ConfigError::NonPositiveParameter("mu")));
    }

    #[test]
    fn divergent_step_is_a_warning_not_an_error() {
        let cfg = ExperimentConfig { mu: 2.5, ..reference_config() };
        let v = cfg.validate().unwrap();
        assert!(!v.converges);
        assert_eq!(v.warnings().len(), 1);
    }

    #[test]
    fn other_parameter_errors() {
        let base = reference_config();
        assert_eq!(
            ExperimentConfig { rho2: -1.0, ..base }.validate(),
            Err(ConfigError::NonPositiveParameter("rho2"))
        );
        assert_eq!(
            ExperimentConfig { sigma_g2: 0.0, ..base }.validate(),
            Err(ConfigError::NonPositiveParameter("sigma_g2"))
        );
        assert_eq!(
            ExperimentConfig { taps: 0, ..base }.validate(),
            Err(ConfigError::NonPositiveParameter("taps"))
        );
        assert_eq!(
            base.with_nonlinearity(Nonlinearity::dead_zone(-0.1)).validate(),
            Err(ConfigError::NegativeThreshold(-0.1))
        );
        assert_eq!(
            base.with_nonlinearity(Nonlinearity::dead_zone(f64::INFINITY)).validate(),
            Err(ConfigError::InfiniteDeadZone)
        );
        assert_eq!(
            ExperimentConfig { mu: f64::NAN, ..base }.validate(),
            Err(ConfigError::NonFiniteParameter("mu"))
        );
    }

    #[test]
    fn input_variance_is_rho2_over_taps() {
        let cfg = ExperimentConfig { rho2: 2.0, taps: 400, ..Default::default() };
        assert_eq!(cfg.input_variance(), 0.005);
    }

    #[test]
    fn nonlinearity_shapes() {
        let sat = Nonlinearity::saturation(1.0);
        assert_eq!(sat.apply(2.5), 1.0);
        assert_eq!(sat.apply(-2.5), -1.0);
        assert_eq!(sat.apply(0.3), 0.3);
        let dz = Nonlinearity::dead_zone(1.0);
        assert_eq!(dz.apply(2.5), 1.5);
        assert_eq!(dz.apply(-2.5), -1.5);
        assert_eq!(dz.apply(0.3), 0.0);
        for x in [-1e6, -3.0, -0.1, 0.0, 0.7, 1e9] {
            assert_eq!(Nonlinearity::identity().apply(x), x);
            assert_eq!(Nonlinearity::dead_zone(0.0).apply(x), x);
        }
    }

    #[test]
    fn normalization_examples() {
        let ir = ImpulseResponse::normalize(&[1.0, 1.0], 2, 1.0).unwrap();
        assert_eq!(ir.coeffs(), &[1.0, 1.0]);

        let ir = ImpulseResponse::normalize(&[3.0, 0.0, 0.0], 4, 1.0).unwrap();
        assert_eq!(ir.coeffs(), &[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(ir.support_len(), 3);
        assert_eq!(ir.padded_len(), 4);
    }

    #[test]
    fn normalization_errors() {
        assert_eq!(ImpulseResponse::normalize(&[], 4, 1.0), Err(ImpulseError::Empty));
        assert_eq!(
            ImpulseResponse::normalize(&[0.0, 0.0], 4, 1.0),
            Err(ImpulseError::AllZeroResponse)
        );
        assert_eq!(
            ImpulseResponse::normalize(&[1.0; 5], 4, 1.0),
            Err(ImpulseError::LengthExceedsTaps { len: 5, taps: 4 })
        );
        assert_eq!(
            ImpulseResponse::normalize(&[1.0, f64::NAN], 4, 1.0),
            Err(ImpulseError::NonFiniteSample(1))
        );
    }

    #[test]
    fn measured_like_response_is_normalized_and_padded() {
        let ir = ImpulseResponse::synthetic_room(7, 256, 400, 1.0).unwrap();
        let direct: f64 = ir.coeffs().iter().map(|g| g * g).sum::<f64>() / 400.0;
        assert!((direct - 1.0).abs() <= NORMALIZATION_TOLERANCE);
        assert!(ir.coeffs()[256..].iter().all(|&g| g == 0.0));
        assert_eq!(ir.g0().len(), 256);
    }

    #[test]
    fn nmsd_from_overlaps() {
        assert_eq!(MacroState::new(1.0, 1.0).nmsd(1.0), 0.0);
        assert_eq!(MacroState::ZERO.nmsd(2.0), 2.0);
    }
}

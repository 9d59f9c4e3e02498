//! Monte Carlo simulation of the adaptive filter itself.
//!
//! Each trial owns a ChaCha8 generator seeded with the plan seed and switched
//! to a stream equal to the trial index, so any trial can be reproduced in
//! isolation. Trials run in parallel and are reduced in index order, so the
//! ensemble statistics do not depend on the number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    ConfigError, ExperimentConfig, ImpulseResponse, MacroState, Trajectory, TrajectoryPoint,
    TrajectorySource,
};

/// Ratio of the asymptotic standard error of a sample median to that of a
/// sample mean for normal data, `√(π/2)`.
const MEDIAN_SE_FACTOR: f64 = 1.253_314_137_315_500_3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("impulse response has sigma_g2 = {measured}, config says {configured}")]
    SigmaMismatch { measured: f64, configured: f64 },
    #[error("invalid simulation plan: {0}")]
    InvalidPlan(&'static str),
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Algorithm {
    #[default]
    Lms,
    /// Normalized LMS with step `mu_tilde / ‖u‖²`.
    Nlms { mu_tilde: f64 },
}

/// How trials are combined at each recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnsembleStat {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimPlan {
    pub config: ExperimentConfig,
    pub trials: usize,
    /// Number of weight updates; errors are observed at steps `0..=steps`.
    pub steps: usize,
    /// Record every this many steps (the final step is always recorded).
    pub record_every: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub stat: EnsembleStat,
    /// Each recorded per-trial value (squared error, NMSD, r, Q) is the mean
    /// over the last `window` steps up to and including the recorded one.
    pub window: usize,
}

impl SimPlan {
    pub fn new(config: ExperimentConfig, trials: usize, steps: usize, seed: u64) -> Self {
        Self {
            config,
            trials,
            steps,
            record_every: 1,
            seed,
            algorithm: Algorithm::Lms,
            stat: EnsembleStat::Mean,
            window: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.config.validate()?;
        if self.trials == 0 {
            return Err(SimError::InvalidPlan("trials must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(SimError::InvalidPlan("record_every must be at least 1"));
        }
        if self.window == 0 {
            return Err(SimError::InvalidPlan("window must be at least 1"));
        }
        if let Algorithm::Nlms { mu_tilde } = self.algorithm {
            if !(mu_tilde.is_finite() && mu_tilde > 0.0) {
                return Err(SimError::InvalidPlan("nlms mu_tilde must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Steps at which trials record their state.
    pub fn record_steps(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (0..=self.steps).step_by(self.record_every.max(1)).collect();
        if out.last() != Some(&self.steps) {
            out.push(self.steps);
        }
        out
    }

    /// Normalized times `t = n/N` of [`Self::record_steps`].
    pub fn record_times(&self) -> Vec<f64> {
        let n = self.config.taps as f64;
        self.record_steps().into_iter().map(|k| k as f64 / n).collect()
    }
}

/// Recorded observables of one trial, aligned with [`SimPlan::record_steps`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSeries {
    pub mse: Vec<f64>,
    pub nmsd: Vec<f64>,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    /// Weights after the last update.
    pub weights: Vec<f64>,
}

/// Per-time centre and spread of one observable over the ensemble.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnStats {
    /// Mean or median, per [`SimPlan::stat`].
    pub center: Vec<f64>,
    /// Sample standard deviation over trials.
    pub std_dev: Vec<f64>,
    /// Standard error of `center`.
    pub std_err: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub plan: SimPlan,
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub mse: ColumnStats,
    pub nmsd: ColumnStats,
    pub r: ColumnStats,
    pub q: ColumnStats,
}

/// Ensemble summary at one recorded time. Spreads are sample standard
/// deviations over trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleStats {
    pub t: f64,
    pub mse_center: f64,
    pub mse_spread: f64,
    pub mse_std_err: f64,
    pub nmsd_center: f64,
    pub nmsd_spread: f64,
    pub nmsd_std_err: f64,
    pub r_center: f64,
    pub q_center: f64,
}

impl EnsembleResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, i: usize) -> EnsembleStats {
        EnsembleStats {
            t: self.times[i],
            mse_center: self.mse.center[i],
            mse_spread: self.mse.std_dev[i],
            mse_std_err: self.mse.std_err[i],
            nmsd_center: self.nmsd.center[i],
            nmsd_spread: self.nmsd.std_dev[i],
            nmsd_std_err: self.nmsd.std_err[i],
            r_center: self.r.center[i],
            q_center: self.q.center[i],
        }
    }

    pub fn rows(&self) -> Vec<EnsembleStats> {
        (0..self.len()).map(|i| self.row(i)).collect()
    }

    pub fn trajectory(&self) -> Trajectory {
        let mut traj = Trajectory::new(TrajectorySource::Simulation, self.plan.config);
        traj.points = (0..self.times.len())
            .map(|i| TrajectoryPoint {
                t: self.times[i],
                state: MacroState::new(self.r.center[i], self.q.center[i]),
                mse: self.mse.center[i],
                nmsd: self.nmsd.center[i],
            })
            .collect();
        traj
    }
}

/// `(r, Q) = ((1/N)gᵀw, (1/N)wᵀw)`.
pub fn measure_macro(g: &[f64], w: &[f64]) -> Result<MacroState, SimError> {
    if g.len() != w.len() {
        return Err(SimError::LengthMismatch { expected: g.len(), got: w.len() });
    }
    if g.is_empty() {
        return Err(SimError::InvalidPlan("empty weight vector"));
    }
    let n = g.len() as f64;
    Ok(MacroState::new(dot(g, w) / n, dot(w, w) / n))
}

/// Independent seed for sub-experiment `index` (for example one point of a
/// sweep), mixed with the SplitMix64 finalizer.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix(seed ^ splitmix(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy(w: &mut [f64], c: f64, u: &[f64]) {
    for (wi, ui) in w.iter_mut().zip(u) {
        *wi += c * ui;
    }
}

fn squared_distance(g: &[f64], w: &[f64]) -> f64 {
    g.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_inputs(plan: &SimPlan, g: &ImpulseResponse) -> Result<(), SimError> {
    plan.validate()?;
    let n = plan.config.taps;
    if g.padded_len() != n {
        return Err(SimError::LengthMismatch { expected: n, got: g.padded_len() });
    }
    let measured = g.measured_sigma_g2();
    let configured = plan.config.sigma_g2;
    if (measured - configured).abs() > 1e-9 * configured {
        return Err(SimError::SigmaMismatch { measured, configured });
    }
    Ok(())
}

/// Run trial `index` of `plan` against the unknown system `g`.
pub fn run_trial(plan: &SimPlan, g: &ImpulseResponse, index: u64) -> Result<TrialSeries, SimError> {
    check_inputs(plan, g)?;
    Ok(trial(plan, g, index))
}

fn trial(plan: &SimPlan, g: &ImpulseResponse, index: u64) -> TrialSeries {
    let cfg = &plan.config;
    let n = cfg.taps;
    let m = g.support_len();
    let gc = g.coeffs();
    let input_sd = cfg.input_variance().sqrt();
    let noise_sd = cfg.sigma_xi2.sqrt();
    let nl = cfg.nonlinearity;

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(index);

    // Tap-delay line stored twice so that the current regressor, newest
    // sample first, is always the contiguous slice buf[head..head + n].
    let mut buf = vec![0.0f64; 2 * n];
    let mut head = 0usize;
    let push = |buf: &mut [f64], head: &mut usize, v: f64| -> f64 {
        *head = if *head == 0 { n - 1 } else { *head - 1 };
        let old = buf[*head];
        buf[*head] = v;
        buf[*head + n] = v;
        old
    };
    for _ in 0..n {
        let v = cfg.input_dist.sample(&mut rng, input_sd);
        push(&mut buf, &mut head, v);
    }
    let mut power = dot(&buf[head..head + n], &buf[head..head + n]);

    let records = plan.record_steps();
    let mut out = TrialSeries {
        mse: Vec::with_capacity(records.len()),
        nmsd: Vec::with_capacity(records.len()),
        r: Vec::with_capacity(records.len()),
        q: Vec::with_capacity(records.len()),
        weights: Vec::new(),
    };
    let mut next_record = records.iter().copied().peekable();

    let window = plan.window;
    // Ring buffer of per-step (e², nmsd, r, Q), filled only for steps that
    // fall inside the window of some recorded step.
    let mut recent = vec![[0.0f64; 4]; window];
    let mut w = vec![0.0f64; n];
    let nf = n as f64;

    for step in 0..=plan.steps {
        if step > 0 {
            let v = cfg.input_dist.sample(&mut rng, input_sd);
            let old = push(&mut buf, &mut head, v);
            power += v * v - old * old;
            if step % n == 0 {
                power = dot(&buf[head..head + n], &buf[head..head + n]);
            }
        }
        let u = &buf[head..head + n];
        let x = dot(&gc[..m], &u[..m]);
        let y = dot(&w, u);
        let xi = if noise_sd > 0.0 { cfg.noise_dist.sample(&mut rng, noise_sd) } else { 0.0 };
        let e = nl.apply(x) - y + xi;

        if let Some(&target) = next_record.peek() {
            if target - step < window {
                recent[step % window] =
                    [e * e, squared_distance(gc, &w) / nf, dot(gc, &w) / nf, dot(&w, &w) / nf];
            }
            if target == step {
                next_record.next();
                let seen = (step + 1).min(window);
                let mut total = [0.0f64; 4];
                for k in 0..seen {
                    let row = &recent[(step + window - k) % window];
                    for (t, v) in total.iter_mut().zip(row) {
                        *t += v;
                    }
                }
                let s = seen as f64;
                out.mse.push(total[0] / s);
                out.nmsd.push(total[1] / s);
                out.r.push(total[2] / s);
                out.q.push(total[3] / s);
            }
        }

        if step < plan.steps {
            let gain = match plan.algorithm {
                Algorithm::Lms => cfg.mu,
                Algorithm::Nlms { mu_tilde } if power > 0.0 => mu_tilde / power,
                Algorithm::Nlms { .. } => 0.0,
            };
            axpy(&mut w, gain * e, u);
        }
    }
    out.weights = w;
    out
}

/// Run all trials on the global rayon pool.
pub fn run_ensemble(plan: &SimPlan, g: &ImpulseResponse) -> Result<EnsembleResult, SimError> {
    check_inputs(plan, g)?;
    let series: Vec<TrialSeries> =
        (0..plan.trials as u64).into_par_iter().map(|i| trial(plan, g, i)).collect();
    Ok(reduce(plan, &series))
}

/// Run all trials on a dedicated pool of `threads` workers (`0` means the
/// rayon default). The result is identical for every thread count.
pub fn run_ensemble_with_threads(
    plan: &SimPlan,
    g: &ImpulseResponse,
    threads: usize,
) -> Result<EnsembleResult, SimError> {
    check_inputs(plan, g)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::ThreadPool(e.to_string()))?;
    pool.install(|| run_ensemble(plan, g))
}

fn reduce(plan: &SimPlan, series: &[TrialSeries]) -> EnsembleResult {
    let steps = plan.record_steps();
    let pick = |f: fn(&TrialSeries) -> &Vec<f64>| stats(plan.stat, series, f, steps.len());
    EnsembleResult {
        plan: *plan,
        times: plan.record_times(),
        mse: pick(|s| &s.mse),
        nmsd: pick(|s| &s.nmsd),
        r: pick(|s| &s.r),
        q: pick(|s| &s.q),
        steps,
    }
}

fn stats(
    stat: EnsembleStat,
    series: &[TrialSeries],
    field: fn(&TrialSeries) -> &Vec<f64>,
    len: usize,
) -> ColumnStats {
    let count = series.len() as f64;
    let mut out = ColumnStats::default();
    let mut column = Vec::with_capacity(series.len());
    for i in 0..len {
        // Welford, in trial order.
        let (mut mean, mut m2) = (0.0f64, 0.0f64);
        column.clear();
        for (k, s) in series.iter().enumerate() {
            let v = field(s)[i];
            let delta = v - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (v - mean);
            column.push(v);
        }
        let sd = if series.len() > 1 { (m2 / (count - 1.0)).sqrt() } else { 0.0 };
        let (center, se) = match stat {
            EnsembleStat::Mean => (mean, sd / count.sqrt()),
            EnsembleStat::Median => (median(&mut column), MEDIAN_SE_FACTOR * sd / count.sqrt()),
        };
        out.center.push(center);
        out.std_dev.push(sd);
        out.std_err.push(se);
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Nonlinearity, SignalDistribution};

    fn small(nl: Nonlinearity) -> (SimPlan, ImpulseResponse) {
        let config = ExperimentConfig { taps: 32, nonlinearity: nl, mu: 0.5, ..ExperimentConfig::default() };
        let g = ImpulseResponse::random(7, 32, 32, 1.0).unwrap();
        let mut plan = SimPlan::new(config, 8, 320, 11);
        plan.record_every = 32;
        (plan, g)
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64 * 0.3).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-13);
    }

    #[test]
    fn record_steps_include_endpoints() {
        let (mut plan, _) = small(Nonlinearity::identity());
        plan.steps = 100;
        plan.record_every = 32;
        assert_eq!(plan.record_steps(), vec![0, 32, 64, 96, 100]);
        assert_eq!(plan.record_times()[1], 1.0);
    }

    #[test]
    fn trials_are_reproducible_and_distinct() {
        let (plan, g) = small(Nonlinearity::saturation(0.5));
        let a = run_trial(&plan, &g, 3).unwrap();
        let b = run_trial(&plan, &g, 3).unwrap();
        let c = run_trial(&plan, &g, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.mse, c.mse);
    }

    #[test]
    fn first_record_is_the_initial_state() {
        let (plan, g) = small(Nonlinearity::dead_zone(0.3));
        let s = run_trial(&plan, &g, 0).unwrap();
        assert_eq!(s.r[0], 0.0);
        assert_eq!(s.q[0], 0.0);
        assert!((s.nmsd[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recorded_overlaps_match_final_weights() {
        let (plan, g) = small(Nonlinearity::saturation(1.0));
        let s = run_trial(&plan, &g, 1).unwrap();
        let m = measure_macro(g.coeffs(), &s.weights).unwrap();
        assert_eq!(*s.r.last().unwrap(), m.r);
        assert_eq!(*s.q.last().unwrap(), m.q);
        let nmsd = *s.nmsd.last().unwrap();
        assert!((nmsd - m.nmsd(1.0)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_linear_lms_converges_to_the_system() {
        let (mut plan, g) = small(Nonlinearity::identity());
        plan.steps = 32 * 60;
        let s = run_trial(&plan, &g, 0).unwrap();
        assert!(*s.nmsd.last().unwrap() < 1e-10);
    }

    #[test]
    fn nlms_also_converges() {
        let (mut plan, g) = small(Nonlinearity::identity());
        plan.steps = 32 * 60;
        plan.algorithm = Algorithm::Nlms { mu_tilde: 0.5 };
        plan.config.input_dist = SignalDistribution::Uniform;
        let s = run_trial(&plan, &g, 0).unwrap();
        assert!(*s.nmsd.last().unwrap() < 1e-8);
    }

    #[test]
    fn ensemble_independent_of_thread_count() {
        let (plan, g) = small(Nonlinearity::saturation(0.4));
        let one = run_ensemble_with_threads(&plan, &g, 1).unwrap();
        let three = run_ensemble_with_threads(&plan, &g, 3).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn ensemble_mean_matches_manual_average() {
        let (plan, g) = small(Nonlinearity::dead_zone(0.2));
        let res = run_ensemble(&plan, &g).unwrap();
        let trials: Vec<_> = (0..plan.trials as u64).map(|i| run_trial(&plan, &g, i).unwrap()).collect();
        let k = res.times.len() - 1;
        let avg = trials.iter().map(|t| t.mse[k]).sum::<f64>() / trials.len() as f64;
        assert!((res.mse.center[k] - avg).abs() < 1e-12 * avg.max(1.0));
    }

    #[test]
    fn single_trial_ensemble_has_zero_spread() {
        let (mut plan, g) = small(Nonlinearity::dead_zone(0.2));
        plan.trials = 1;
        let res = run_ensemble(&plan, &g).unwrap();
        let s = run_trial(&plan, &g, 0).unwrap();
        assert_eq!(res.mse.center, s.mse);
        assert!(res.rows().iter().all(|row| row.mse_spread == 0.0 && row.nmsd_spread == 0.0));
    }

    #[test]
    fn median_statistic() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        let (mut plan, g) = small(Nonlinearity::saturation(0.4));
        plan.stat = EnsembleStat::Median;
        plan.window = 32;
        let res = run_ensemble(&plan, &g).unwrap();
        assert!(res.mse.std_err.iter().zip(&res.mse.std_dev).all(|(se, sd)| se <= sd));
    }

    #[test]
    fn window_averages_recent_values() {
        let (mut plan, g) = small(Nonlinearity::saturation(0.4));
        let single = run_trial(&plan, &g, 2).unwrap();
        plan.record_every = 1;
        let every = run_trial(&plan, &g, 2).unwrap();
        plan.window = 4;
        plan.record_every = 32;
        let windowed = run_trial(&plan, &g, 2).unwrap();
        for (a, b) in [(&windowed.mse, &every.mse), (&windowed.nmsd, &every.nmsd), (&windowed.r, &every.r), (&windowed.q, &every.q)] {
            let expect = b[61..=64].iter().sum::<f64>() / 4.0;
            assert!((a[2] - expect).abs() < 1e-15);
        }
        assert_eq!(single.mse[2], every.mse[64]);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let (plan, _) = small(Nonlinearity::identity());
        let short = ImpulseResponse::random(1, 8, 16, 1.0).unwrap();
        assert!(matches!(run_ensemble(&plan, &short), Err(SimError::LengthMismatch { .. })));
        let loud = ImpulseResponse::random(1, 8, 32, 2.0).unwrap();
        assert!(matches!(run_ensemble(&plan, &loud), Err(SimError::SigmaMismatch { .. })));
        assert!(measure_macro(&[1.0], &[1.0, 2.0]).is_err());
        let mut bad = plan;
        bad.trials = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: Vec<u64> = (0..100).map(|i| derive_seed(42, i)).collect();
        let mut uniq = seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), seeds.len());
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}

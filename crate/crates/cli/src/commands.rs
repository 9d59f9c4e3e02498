//! The six subcommands. Each reads the config, computes, writes one CSV and
//! returns an [`Outcome`] carrying a human-readable report and any verdicts.

use std::path::{Path, PathBuf};

use satlms_core::sim::{derive_seed, run_ensemble_with_threads};
use satlms_core::theory::{self, solve_max_threshold, AnalyticSolution};
use satlms_core::{
    closed_form_moments, oracle_moments, EnsembleResult, EnsembleStat, ExperimentConfig,
    ImpulseResponse, MacroState, Nonlinearity, NonlinearityKind, SimPlan,
};

use crate::config::{self, RunConfig};
use crate::csv::{format_f64, CsvTable};
use crate::error::CliError;
use crate::impulse;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerance, in standard errors, of every simulation-versus-theory verdict.
pub const SE_BAND: f64 = 3.0;
/// Largest closed-form versus quadrature discrepancy accepted by `moments`.
pub const MOMENTS_TOLERANCE: f64 = 1e-7;
/// Largest residual of the maximization condition accepted by `maximize`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Theory,
    Simulate,
    Compare,
    SteadySweep,
    Maximize,
    Moments,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Theory => "theory",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::SteadySweep => "steady-sweep",
            Command::Maximize => "maximize",
            Command::Moments => "moments",
        }
    }
}

/// Everything one invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: Command,
    pub config_path: PathBuf,
    pub output_path: PathBuf,
    pub overrides: Vec<(String, String)>,
    pub with_sim: bool,
    pub seed: Option<u64>,
    /// Worker threads for ensembles; `None` or `Some(0)` means the rayon default.
    pub threads: Option<usize>,
    /// Trailing moving average over this many recorded points, applied to the
    /// simulated MSE column of `simulate` only.
    pub smooth: Option<usize>,
}

impl RunManifest {
    pub fn new(command: Command, config_path: impl Into<PathBuf>, output_path: impl Into<PathBuf>) -> Self {
        Self {
            command,
            config_path: config_path.into(),
            output_path: output_path.into(),
            overrides: Vec::new(),
            with_sim: false,
            seed: None,
            threads: None,
            smooth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcome {
    pub report: Vec<String>,
    pub verdicts: Vec<Verdict>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    fn verdict(&mut self, name: &str, passed: bool) {
        self.report.push(format!("verdict {name}: {}", if passed { "PASS" } else { "FAIL" }));
        self.verdicts.push(Verdict { name: name.to_owned(), passed });
    }
}

pub fn run(manifest: &RunManifest) -> Result<Outcome, CliError> {
    match manifest.command {
        Command::Theory => cmd_theory(manifest),
        Command::Simulate => cmd_simulate(manifest),
        Command::Compare => cmd_compare(manifest),
        Command::SteadySweep => cmd_steady_sweep(manifest),
        Command::Maximize => cmd_maximize(manifest),
        Command::Moments => cmd_moments(manifest),
    }
}

struct Context {
    cfg: RunConfig,
    base: PathBuf,
    outcome: Outcome,
}

fn prepare(manifest: &RunManifest) -> Result<Context, CliError> {
    let mut cfg = config::load(&manifest.config_path, &manifest.overrides)?;
    if let Some(seed) = manifest.seed {
        cfg.seed = seed;
    }
    let base = config::base_dir(&manifest.config_path);
    // Echo file paths absolutely so the echoed config works from anywhere.
    if let Some(spec) = &cfg.impulse_response {
        if !spec.starts_with("random:") {
            if let Ok(abs) = base.join(spec).canonicalize() {
                cfg.impulse_response = Some(abs.display().to_string());
            }
        }
    }
    // The sweep, maximization and moment grids choose their own thresholds.
    let mut experiment = cfg.experiment();
    if matches!(manifest.command, Command::SteadySweep | Command::Maximize | Command::Moments) {
        experiment.nonlinearity.threshold = 0.0;
    }
    let validation = experiment.validate()?;
    let mut outcome = Outcome::default();
    outcome.report.extend(validation.warnings().into_iter().map(|w| format!("warning: {w}")));
    Ok(Context { cfg, base, outcome })
}

fn header(ctx: &Context, command: Command) -> Vec<String> {
    vec![
        format!("satlms {VERSION}"),
        format!("command {}", command.name()),
        format!("config {}", ctx.cfg.to_json()),
    ]
}

fn write_table(path: &Path, table: &CsvTable) -> Result<(), CliError> {
    std::fs::write(path, table.render()).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn load_impulse(ctx: &Context) -> Result<ImpulseResponse, CliError> {
    let spec = ctx.cfg.impulse_response.as_deref().ok_or_else(|| {
        CliError::ConfigInvalid("impulse_response is required for simulation (a file path or random:<seed>:<M>)".into())
    })?;
    impulse::load(spec, &ctx.base, ctx.cfg.taps, ctx.cfg.sigma_g2)
}

fn ensemble(plan: &SimPlan, g: &ImpulseResponse, threads: Option<usize>) -> Result<EnsembleResult, CliError> {
    Ok(run_ensemble_with_threads(plan, g, threads.unwrap_or(0))?)
}

pub fn cmd_theory(manifest: &RunManifest) -> Result<Outcome, CliError> {
    let mut ctx = prepare(manifest)?;
    let sol = AnalyticSolution::new(&ctx.cfg.experiment())?;
    let times = ctx.cfg.time_grid().map_err(CliError::ConfigInvalid)?;
    let mut table = CsvTable::new(header(&ctx, Command::Theory), &["t", "r", "q", "mse", "nmsd"]);
    for t in times {
        let p = sol.point_at(t);
        table.push_numbers(&[p.t, p.state.r, p.state.q, p.mse, p.nmsd]);
    }
    write_table(&manifest.output_path, &table)?;
    match sol.mse_inf() {
        Some(m) => ctx.outcome.report.push(format!("steady-state mse {}", format_f64(m))),
        None => ctx.outcome.report.push("converges=false: no steady state".into()),
    }
    Ok(ctx.outcome)
}

/// Trailing moving average over `width` points.
pub fn smooth(values: &[f64], width: usize) -> Vec<f64> {
    let width = width.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= width {
            sum -= values[i - width];
        }
        out.push(sum / (i + 1).min(width) as f64);
    }
    out
}

pub fn cmd_simulate(manifest: &RunManifest) -> Result<Outcome, CliError> {
    let ctx = prepare(manifest)?;
    let g = load_impulse(&ctx)?;
    let plan = ctx.cfg.sim_plan();
    let res = ensemble(&plan, &g, manifest.threads)?;
    let mse = match manifest.smooth {
        Some(k) if k > 1 => smooth(&res.mse.center, k),
        _ => res.mse.center.clone(),
    };
    let mut comments = header(&ctx, Command::Simulate);
    if let Some(k) = manifest.smooth.filter(|k| *k > 1) {
        comments.push(format!("mse_center smoothed over {k} recorded points"));
    }
    let mut table = CsvTable::new(
        comments,
        &["t", "mse_center", "mse_spread", "nmsd_center", "nmsd_spread", "r_center", "q_center"],
    );
    for (i, row) in res.rows().into_iter().enumerate() {
        table.push_numbers(&[row.t, mse[i], row.mse_spread, row.nmsd_center, row.nmsd_spread, row.r_center, row.q_center]);
    }
    write_table(&manifest.output_path, &table)?;
    let mut outcome = ctx.outcome;
    outcome.report.push(format!("{} trials, {} recorded points", plan.trials, res.len()));
    Ok(outcome)
}

/// Simulation and theory on the simulation's time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub ensemble: EnsembleResult,
    pub theory: Vec<satlms_core::TrajectoryPoint>,
    pub converges: bool,
    pub mse_inf: Option<f64>,
}

impl Comparison {
    pub fn compute(cfg: &RunConfig, g: &ImpulseResponse, threads: Option<usize>) -> Result<Self, CliError> {
        let sol = AnalyticSolution::new(&cfg.experiment())?;
        let ensemble = ensemble(&cfg.sim_plan(), g, threads)?;
        let theory = ensemble.times.iter().map(|&t| sol.point_at(t)).collect();
        Ok(Self { ensemble, theory, converges: sol.converges(), mse_inf: sol.mse_inf() })
    }

    /// Index and size of the largest |mse_sim − mse_theory|.
    pub fn max_mse_deviation(&self) -> (usize, f64) {
        self.theory
            .iter()
            .zip(&self.ensemble.mse.center)
            .map(|(p, s)| (s - p.mse).abs())
            .enumerate()
            .fold((0, 0.0), |best, (i, d)| if d > best.1 || d.is_nan() { (i, d) } else { best })
    }

    /// Whether every recorded MSE lies within `SE_BAND` standard errors of theory.
    pub fn within_band(&self) -> bool {
        let m = &self.ensemble.mse;
        self.theory.iter().enumerate().all(|(i, p)| within(m.center[i], p.mse, m.std_err[i]))
    }

    /// Whether the last recorded MSE lies within `SE_BAND` standard errors of
    /// the steady-state MSE. `None` when there is no steady state.
    pub fn steady_state_ok(&self) -> Option<bool> {
        let inf = self.mse_inf?;
        let m = &self.ensemble.mse;
        let last = m.center.len() - 1;
        Some(within(m.center[last], inf, m.std_err[last]))
    }
}

/// Deviation in standard errors, after discounting a tiny rounding floor so
/// that zero-variance points compare exactly.
pub fn z_score(sim: f64, theory: f64, se: f64) -> f64 {
    let excess = ((sim - theory).abs() - 1e-12 * theory.abs().max(1.0)).max(0.0);
    if excess == 0.0 {
        0.0
    } else if se > 0.0 {
        excess / se
    } else {
        f64::INFINITY
    }
}

/// `|sim − theory| ≤ 3·se` up to the rounding floor of [`z_score`].
pub fn within(sim: f64, theory: f64, se: f64) -> bool {
    z_score(sim, theory, se) <= SE_BAND
}

pub fn cmd_compare(manifest: &RunManifest) -> Result<Outcome, CliError> {
    let ctx = prepare(manifest)?;
    let g = load_impulse(&ctx)?;
    let cmp = Comparison::compute(&ctx.cfg, &g, manifest.threads)?;
    let mut outcome = ctx.outcome.clone();
    let mut table = CsvTable::new(
        header(&ctx, Command::Compare),
        &[
            "t", "mse_theory", "mse_sim", "mse_sim_se", "nmsd_theory", "nmsd_sim", "nmsd_sim_se", "r_theory",
            "r_sim", "q_theory", "q_sim",
        ],
    );
    let e = &cmp.ensemble;
    for (i, p) in cmp.theory.iter().enumerate() {
        table.push_numbers(&[
            p.t,
            p.mse,
            e.mse.center[i],
            e.mse.std_err[i],
            p.nmsd,
            e.nmsd.center[i],
            e.nmsd.std_err[i],
            p.state.r,
            e.r.center[i],
            p.state.q,
            e.q.center[i],
        ]);
    }
    let (at, dev) = cmp.max_mse_deviation();
    outcome.report.push(format!("converges={}", cmp.converges));
    outcome.report.push(format!("max |mse_sim - mse_theory| = {} at t = {}", format_f64(dev), format_f64(e.times[at])));
    if cmp.converges {
        outcome.verdict("mse_within_3se", cmp.within_band());
        if let Some(ok) = cmp.steady_state_ok() {
            outcome.verdict("steady_state_within_3se", ok);
        }
    } else {
        outcome.report.push("verdicts skipped: configuration diverges".into());
    }
    table.trailer = outcome.report.clone();
    write_table(&manifest.output_path, &table)?;
    Ok(outcome)
}

/// One point of a steady-state sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    /// threshold/(ρσ_g)
    pub u: f64,
    pub mse_theory: f64,
    pub nmsd_theory: f64,
    pub sim: Option<SweepSim>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSim {
    pub mse_median: f64,
    pub mse_std: f64,
    pub mse_se: f64,
    pub nmsd_median: f64,
    pub nmsd_std: f64,
    pub nmsd_se: f64,
}

/// Steady-state theory on the sweep grid, plus (when `g` is given) the
/// median over `sweep_trials` trials of values time-averaged over the
/// `sweep_window` steps ending at `t = sweep_t`. Each grid point draws from
/// its own seed.
pub fn steady_sweep(cfg: &RunConfig, g: Option<&ImpulseResponse>, threads: Option<usize>) -> Result<Vec<SweepRow>, CliError> {
    let grid = cfg.sweep_grid().map_err(CliError::ConfigInvalid)?;
    let base = cfg.experiment();
    let scale = (base.rho2 * base.sigma_g2).sqrt();
    let steps = (cfg.sweep_t * cfg.taps as f64).round() as usize;
    let mut rows = Vec::with_capacity(grid.len());
    for (k, &u) in grid.iter().enumerate() {
        let nl = Nonlinearity { kind: base.nonlinearity.kind, threshold: u * scale };
        let config = base.with_nonlinearity(nl);
        let sol = theory::solve(&config)?;
        let mse_theory = sol.mse_inf().ok_or(theory::TheoryError::Diverges { mu_rho2: config.mu_rho2() })?;
        let nmsd_theory = sol.steady_state_nmsd()?;
        let sim = match g {
            None => None,
            Some(g) => {
                let plan = SimPlan {
                    config,
                    trials: cfg.sweep_trials,
                    steps,
                    record_every: steps.max(1),
                    seed: derive_seed(cfg.seed, k as u64),
                    stat: EnsembleStat::Median,
                    window: cfg.sweep_window.unwrap_or(10 * cfg.taps).clamp(1, steps.max(1)),
                    ..cfg.sim_plan()
                };
                let res = ensemble(&plan, g, threads)?;
                let last = res.len() - 1;
                Some(SweepSim {
                    mse_median: res.mse.center[last],
                    mse_std: res.mse.std_dev[last],
                    mse_se: res.mse.std_err[last],
                    nmsd_median: res.nmsd.center[last],
                    nmsd_std: res.nmsd.std_dev[last],
                    nmsd_se: res.nmsd.std_err[last],
                })
            }
        };
        rows.push(SweepRow { u, mse_theory, nmsd_theory, sim });
    }
    Ok(rows)
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    values.enumerate().fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b }).0
}

pub fn cmd_steady_sweep(manifest: &RunManifest) -> Result<Outcome, CliError> {
    let mut ctx = prepare(manifest)?;
    let g = if manifest.with_sim { Some(load_impulse(&ctx)?) } else { None };
    let rows = steady_sweep(&ctx.cfg, g.as_ref(), manifest.threads)?;
    let mut columns = vec!["threshold_over_rho_sigma_g", "mse_theory", "nmsd_theory"];
    if manifest.with_sim {
        columns.extend(["mse_sim_median", "mse_sim_std", "nmsd_sim_median", "nmsd_sim_std"]);
    }
    let mut table = CsvTable::new(header(&ctx, Command::SteadySweep), &columns);
    for r in &rows {
        let mut nums = vec![r.u, r.mse_theory, r.nmsd_theory];
        if let Some(s) = r.sim {
            nums.extend([s.mse_median, s.mse_std, s.nmsd_median, s.nmsd_std]);
        }
        table.push_numbers(&nums);
    }
    let peak = rows[argmax(rows.iter().map(|r| r.mse_theory))].u;
    ctx.outcome.report.push(format!("theory mse peak at threshold/(rho sigma_g) = {}", format_f64(peak)));
    if manifest.with_sim {
        let sims: Vec<SweepSim> = rows.iter().filter_map(|r| r.sim).collect();
        let sim_peak = rows[argmax(sims.iter().map(|s| s.mse_median))].u;
        ctx.outcome.report.push(format!("simulated mse peak at threshold/(rho sigma_g) = {}", format_f64(sim_peak)));
        let mse_ok = rows.iter().zip(&sims).all(|(r, s)| within(s.mse_median, r.mse_theory, s.mse_se));
        let nmsd_ok = rows.iter().zip(&sims).all(|(r, s)| within(s.nmsd_median, r.nmsd_theory, s.nmsd_se));
        ctx.outcome.verdict("mse_within_3se", mse_ok);
        ctx.outcome.verdict("nmsd_within_3se", nmsd_ok);
    }
    write_table(&manifest.output_path, &table)?;
    Ok(ctx.outcome)
}

pub fn cmd_maximize(manifest: &RunManifest) -> Result<Outcome, CliError> {
    let mut ctx = prepare(manifest)?;
    let cfg = ctx.cfg.experiment();
    let m = solve_max_threshold(cfg.rho2, cfg.sigma_g2)?;
    let nl = Nonlinearity { kind: cfg.nonlinearity.kind, threshold: m.threshold };
    let mse = theory::steady_state_mse(&nl, cfg.rho2, cfg.sigma_g2, cfg.sigma_xi2, cfg.mu).unwrap_or(f64::NAN);
    let mut table = CsvTable::new(
        header(&ctx, Command::Maximize),
        &["threshold", "threshold_over_rho_sigma_g", "residual", "steady_state_mse"],
    );
    table.push_numbers(&[m.threshold, m.normalized, m.residual, mse]);
    write_table(&manifest.output_path, &table)?;
    let report = &mut ctx.outcome.report;
    report.push(format!("threshold = {}", format_f64(m.threshold)));
    report.push(format!("threshold/(rho sigma_g) = {}", format_f64(m.normalized)));
    report.push(format!("residual = {}", format_f64(m.residual)));
    if mse.is_nan() {
        report.push("steady-state mse undefined: configuration diverges".into());
    } else {
        report.push(format!("steady-state mse at threshold = {}", format_f64(mse)));
    }
    ctx.outcome.verdict("residual", m.residual.abs() <= RESIDUAL_TOLERANCE);
    Ok(ctx.outcome)
}

/// `(r, Q)` sample states in units of σ_g², all with `r² ≤ Q`.
const MOMENT_STATES: [(f64, f64); 5] = [(0.0, 0.0), (0.3, 0.5), (-0.4, 0.6), (0.5, 1.0), (1.0, 1.0)];
const MOMENT_THRESHOLDS: usize = 13;
const MOMENT_THRESHOLD_MAX: f64 = 3.0;

pub fn cmd_moments(manifest: &RunManifest) -> Result<Outcome, CliError> {
    let mut ctx = prepare(manifest)?;
    let ExperimentConfig { rho2, sigma_g2, .. } = ctx.cfg.experiment();
    let names = ["fx2", "y2", "fxy", "xy", "fxx"];
    let mut columns = vec!["kind", "threshold", "r", "q"];
    let triples: Vec<[String; 3]> = names.iter().map(|n| [n.to_string(), format!("{n}_oracle"), format!("{n}_delta")]).collect();
    for t in &triples {
        columns.extend(t.iter().map(String::as_str));
    }
    let mut table = CsvTable::new(header(&ctx, Command::Moments), &columns);
    let mut max_delta = 0.0f64;
    for kind in [NonlinearityKind::Saturation, NonlinearityKind::DeadZone] {
        for k in 0..MOMENT_THRESHOLDS {
            let threshold = MOMENT_THRESHOLD_MAX * k as f64 / (MOMENT_THRESHOLDS - 1) as f64;
            let nl = Nonlinearity { kind, threshold };
            for (r, q) in MOMENT_STATES {
                let state = MacroState::new(r * sigma_g2, q * sigma_g2);
                let exact = closed_form_moments(&nl, rho2, sigma_g2, state)?;
                let numeric = oracle_moments(&nl, rho2, sigma_g2, state, ctx.cfg.moments_nodes)?;
                let mut row = vec![kind.to_string(), format_f64(threshold), format_f64(state.r), format_f64(state.q)];
                for (a, b) in exact.as_array().into_iter().zip(numeric.as_array()) {
                    let d = (a - b).abs();
                    max_delta = max_delta.max(d);
                    row.extend([format_f64(a), format_f64(b), format_f64(d)]);
                }
                table.rows.push(row);
            }
        }
    }
    write_table(&manifest.output_path, &table)?;
    ctx.outcome.report.push(format!("max |closed form - quadrature| = {}", format_f64(max_delta)));
    ctx.outcome.verdict("moments_agree", max_delta <= MOMENTS_TOLERANCE);
    Ok(ctx.outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_is_a_trailing_mean() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert_eq!(smooth(&[1.0, 2.0], 1), vec![1.0, 2.0]);
    }

    #[test]
    fn band_check_has_an_absolute_floor() {
        assert!(within(0.0, 0.0, 0.0));
        assert!(within(1.0, 1.2, 0.1));
        assert!(!within(1.0, 1.4, 0.1));
    }

    #[test]
    fn argmax_picks_the_first_maximum() {
        assert_eq!(argmax([0.1, 0.5, 0.5, 0.2].into_iter()), 1);
    }
}

//! JSON run configuration, `--set` overrides and conversion to core types.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use satlms_core::{
    Algorithm, EnsembleStat, ExperimentConfig, Nonlinearity, NonlinearityKind, SignalDistribution,
    SimPlan,
};

use crate::error::CliError;

/// Largest number of recorded points per trial when `record_every` is not given.
pub const MAX_DEFAULT_RECORDS: usize = 10_000;

/// A nonnegative threshold that may also be written as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold(pub f64);

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ThresholdVisitor;

        impl Visitor<'_> for ThresholdVisitor {
            type Value = Threshold;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonnegative number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Threshold, E> {
                Ok(Threshold(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Threshold, E> {
                Ok(Threshold(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Threshold, E> {
                Ok(Threshold(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Threshold, E> {
                match v {
                    "inf" | "infinity" => Ok(Threshold(f64::INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }

        d.deserialize_any(ThresholdVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    Saturation,
    DeadZone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistName {
    Gaussian,
    Uniform,
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    Lms,
    Nlms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatName {
    Mean,
    Median,
}

/// Flat run configuration. Every field has a default; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub rho2: f64,
    pub sigma_g2: f64,
    pub sigma_xi2: f64,
    pub mu: f64,
    pub taps: usize,
    pub nonlinearity: KindName,
    pub threshold: Threshold,
    pub input_dist: DistName,
    pub noise_dist: DistName,

    pub trials: usize,
    /// Number of updates; defaults to `t_end · taps`.
    pub steps: Option<usize>,
    pub seed: u64,
    pub algorithm: AlgorithmName,
    pub nlms_mu_tilde: f64,
    /// Defaults to 1, or to the smallest stride keeping at most 10⁴ records.
    pub record_every: Option<usize>,
    pub stat: StatName,
    /// Recorded values are trailing means over this many steps.
    pub window: usize,
    /// File with one coefficient per line (relative to the config file), or
    /// `random:<seed>:<M>`.
    pub impulse_response: Option<String>,

    pub t_end: f64,
    pub t_step: f64,

    pub sweep_min: f64,
    pub sweep_max: f64,
    pub sweep_points: usize,
    pub sweep_trials: usize,
    pub sweep_t: f64,
    /// Averaging window of the steady-state values; defaults to `10 · taps`.
    pub sweep_window: Option<usize>,

    pub moments_nodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rho2: 1.0,
            sigma_g2: 1.0,
            sigma_xi2: 0.0,
            mu: 1.0,
            taps: 400,
            nonlinearity: KindName::Saturation,
            threshold: Threshold(f64::INFINITY),
            input_dist: DistName::Gaussian,
            noise_dist: DistName::Gaussian,
            trials: 100,
            steps: None,
            seed: 0,
            algorithm: AlgorithmName::Lms,
            nlms_mu_tilde: 0.5,
            record_every: None,
            stat: StatName::Mean,
            window: 1,
            impulse_response: None,
            t_end: 20.0,
            t_step: 0.1,
            sweep_min: 0.0,
            sweep_max: 3.0,
            sweep_points: 15,
            sweep_trials: 100,
            sweep_t: 200.0,
            sweep_window: None,
            moments_nodes: 64,
        }
    }
}

fn dist(d: DistName) -> SignalDistribution {
    match d {
        DistName::Gaussian => SignalDistribution::Gaussian,
        DistName::Uniform => SignalDistribution::Uniform,
        DistName::Rademacher => SignalDistribution::Rademacher,
    }
}

impl RunConfig {
    /// Parse `text`, then apply `key=value` overrides. Override values are
    /// read as JSON when possible and as bare strings otherwise.
    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self, String> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let obj: &mut Map<String, Value> =
            value.as_object_mut().ok_or_else(|| "config must be a JSON object".to_owned())?;
        for (key, raw) in overrides {
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            obj.insert(key.clone(), parsed);
        }
        serde_json::from_value(value).map_err(|e| e.to_string())
    }

    /// Compact JSON of the fully resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        let kind = match self.nonlinearity {
            KindName::Saturation => NonlinearityKind::Saturation,
            KindName::DeadZone => NonlinearityKind::DeadZone,
        };
        Nonlinearity { kind, threshold: self.threshold.0 }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            rho2: self.rho2,
            sigma_g2: self.sigma_g2,
            sigma_xi2: self.sigma_xi2,
            mu: self.mu,
            taps: self.taps,
            nonlinearity: self.nonlinearity(),
            input_dist: dist(self.input_dist),
            noise_dist: dist(self.noise_dist),
        }
    }

    pub fn resolved_steps(&self) -> usize {
        self.steps.unwrap_or_else(|| (self.t_end * self.taps as f64).round() as usize)
    }

    pub fn sim_plan(&self) -> SimPlan {
        let steps = self.resolved_steps();
        let record_every = self.record_every.unwrap_or_else(|| steps.div_ceil(MAX_DEFAULT_RECORDS).max(1));
        SimPlan {
            config: self.experiment(),
            trials: self.trials,
            steps,
            record_every,
            seed: self.seed,
            algorithm: match self.algorithm {
                AlgorithmName::Lms => Algorithm::Lms,
                AlgorithmName::Nlms => Algorithm::Nlms { mu_tilde: self.nlms_mu_tilde },
            },
            stat: match self.stat {
                StatName::Mean => EnsembleStat::Mean,
                StatName::Median => EnsembleStat::Median,
            },
            window: self.window,
        }
    }

    /// Time grid `0, t_step, …` up to and including `t_end`.
    pub fn time_grid(&self) -> Result<Vec<f64>, String> {
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err("t_end must be nonnegative and finite".into());
        }
        if self.t_end == 0.0 {
            return Ok(vec![0.0]);
        }
        if !(self.t_step.is_finite() && self.t_step > 0.0) {
            return Err("t_step must be positive and finite".into());
        }
        let n = (self.t_end / self.t_step + 1e-9).floor() as usize;
        let mut out: Vec<f64> = (0..=n).map(|k| k as f64 * self.t_step).collect();
        let last = *out.last().expect("nonempty grid");
        if self.t_end - last > 1e-9 * self.t_end {
            out.push(self.t_end);
        } else {
            *out.last_mut().expect("nonempty grid") = if n == 0 { 0.0 } else { self.t_end };
        }
        Ok(out)
    }

    /// `linspace(sweep_min, sweep_max, sweep_points)`.
    pub fn sweep_grid(&self) -> Result<Vec<f64>, String> {
        if self.sweep_points == 0 {
            return Err("sweep_points must be at least 1".into());
        }
        if !(self.sweep_min.is_finite() && self.sweep_max.is_finite())
            || self.sweep_min < 0.0
            || self.sweep_max < self.sweep_min
        {
            return Err("sweep range must satisfy 0 <= sweep_min <= sweep_max".into());
        }
        if self.sweep_points == 1 {
            return Ok(vec![self.sweep_min]);
        }
        let span = self.sweep_max - self.sweep_min;
        let last = (self.sweep_points - 1) as f64;
        Ok((0..self.sweep_points)
            .map(|k| {
                if k + 1 == self.sweep_points {
                    self.sweep_max
                } else {
                    self.sweep_min + span * k as f64 / last
                }
            })
            .collect())
    }
}

/// Read and parse a config file.
pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { path: path.to_owned(), source })?;
    RunConfig::parse_with_overrides(&text, overrides)
        .map_err(|message| CliError::ConfigParse { path: path.to_owned(), message })
}

/// Directory against which relative impulse-response paths are resolved.
pub fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

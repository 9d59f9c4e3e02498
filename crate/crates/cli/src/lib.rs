//! Command-line front end: JSON configs in, `#`-commented CSV out.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;
pub mod impulse;

use std::path::PathBuf;

use clap::Parser;

pub use commands::{run, Command, Outcome, RunManifest, Verdict};
pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "satlms", version, about = "LMS identification of systems with saturation or dead-zone outputs")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
    /// Override a config field, e.g. `--set mu=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    pub overrides: Vec<(String, String)>,
    /// Add simulated medians to `steady-sweep`.
    #[arg(long)]
    pub with_sim: bool,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for ensembles (0 = all cores).
    #[arg(long, env = "SATLMS_THREADS")]
    pub threads: Option<usize>,
    /// Trailing moving average of the simulated MSE over this many recorded points.
    #[arg(long)]
    pub smooth: Option<usize>,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err("empty override key".into());
    }
    Ok((k.to_owned(), v.trim().to_owned()))
}

impl Cli {
    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            command: self.command,
            config_path: self.config.clone(),
            output_path: self.out.clone(),
            overrides: self.overrides.clone(),
            with_sim: self.with_sim,
            seed: self.seed,
            threads: self.threads,
            smooth: self.smooth,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_command_line() {
        let cli = Cli::try_parse_from([
            "satlms", "steady-sweep", "--config", "c.json", "--out", "o.csv", "--set", "mu=0.5", "--set",
            "nonlinearity=dead_zone", "--with-sim", "--seed", "9", "--threads", "2",
        ])
        .unwrap();
        let m = cli.manifest();
        assert_eq!(m.command, Command::SteadySweep);
        assert_eq!(m.overrides, vec![("mu".into(), "0.5".into()), ("nonlinearity".into(), "dead_zone".into())]);
        assert!(m.with_sim);
        assert_eq!((m.seed, m.threads), (Some(9), Some(2)));
    }

    #[test]
    fn rejects_malformed_overrides() {
        assert!(Cli::try_parse_from(["satlms", "theory", "--config", "c", "--out", "o", "--set", "mu"]).is_err());
    }
}

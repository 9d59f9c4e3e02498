use std::process::ExitCode;

use clap::Parser;

use satlms::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match satlms::run(&cli.manifest()) {
        Ok(outcome) => {
            for line in &outcome.report {
                println!("{line}");
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

use satlms_core::{ConfigError, ImpulseError, MomentsError, OdeError, SimError, TheoryError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse config {}: {message}", path.display())]
    ConfigParse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("cannot load impulse response {source_name}: {message}")]
    ImpulseResponseLoad { source_name: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Impulse(#[from] ImpulseError),
    #[error(transparent)]
    Moments(#[from] MomentsError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

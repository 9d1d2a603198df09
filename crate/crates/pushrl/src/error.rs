use std::path::{Path, PathBuf};

use pushrl_core::env::EnvError;
use pushrl_core::nn::NnError;
use pushrl_core::physics::PhysicsError;
use pushrl_core::planner::PlannerError;
use pushrl_core::sac::SacError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown {kind} `{name}` (known: {known})")]
    Unknown { kind: &'static str, name: String, known: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Sac(#[from] SacError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(what: &'static str, reason: impl ToString) -> Self {
        Error::Format { what, reason: reason.to_string() }
    }

    pub fn unknown<'a>(kind: &'static str, name: &str, known: impl IntoIterator<Item = &'a str>) -> Self {
        Error::Unknown { kind, name: name.to_string(), known: known.into_iter().collect::<Vec<_>>().join(", ") }
    }

    /// Process exit code: 2 for configuration problems, 3 for files, 1 for
    /// failures inside a run.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Unknown { .. } => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            _ => 1,
        }
    }
}

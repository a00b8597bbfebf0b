use std::path::Path;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(1),
            CliError::NotConverged(_) => ExitCode::from(2),
            CliError::Infeasible(_) => ExitCode::from(3),
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

/// Library errors reaching the CLI unhandled are input problems; the commands
/// map convergence failures themselves so they can still write their reports.
impl From<beamforge::Error> for CliError {
    fn from(e: beamforge::Error) -> Self {
        match e {
            beamforge::Error::RemezNotConverged { .. }
            | beamforge::Error::PsdFitNotConverged { .. }
            | beamforge::Error::NonConvergence { .. } => CliError::NotConverged(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

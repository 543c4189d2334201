//! Exit-code classification: 2 for anything wrong with inputs or
//! configuration, 1 for runtime failures (I/O, numeric aborts).

use litr_core::{DataError, EvalError, SimError, TrainError};
use std::fmt;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation(message.into())
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::Runtime(message.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Io { .. }
            | TrainError::NonFiniteGradient { .. }
            | TrainError::NonFiniteObjective { .. } => CliError::Runtime(e.to_string()),
            TrainError::Data(inner) => CliError::from(inner),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io { .. } => CliError::Runtime(e.to_string()),
            SimError::Data(inner) => CliError::from(inner),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } => CliError::Runtime(e.to_string()),
            EvalError::Train(inner) => CliError::from(inner),
            EvalError::Data(inner) => CliError::from(inner),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<litr_core::MeasurementError> for CliError {
    fn from(e: litr_core::MeasurementError) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

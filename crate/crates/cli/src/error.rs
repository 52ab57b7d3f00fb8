use std::fmt;

use egopose_core::Error as CoreError;
use egopose_train::TrainError;

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidArgument(_) | CoreError::UnknownCategory(_) => CliError::Usage(e.to_string()),
            CoreError::Io { .. } | CoreError::Json { .. } | CoreError::Image { .. } | CoreError::Container(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::Model(egopose_model::ModelError::Config(_)) => {
                CliError::Usage(e.to_string())
            }
            TrainError::Core(c) => c.into(),
            e if e.is_data_error() => CliError::Data(e.to_string()),
            e => CliError::Internal(e.to_string()),
        }
    }
}

impl From<egopose_model::ModelError> for CliError {
    fn from(e: egopose_model::ModelError) -> Self {
        TrainError::from(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;

//! Error categories mapped onto process exit codes.

use thiserror::Error;

/// Exit codes: 0 success, 2 config error, 3 data error, 4 runtime error.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<auscult::model::ModelError> for CliError {
    fn from(e: auscult::model::ModelError) -> Self {
        use auscult::model::ModelError;
        match e {
            ModelError::Config(_)
            | ModelError::Version { .. }
            | ModelError::ParamShape { .. }
            | ModelError::ParamMismatch(_)
            | ModelError::BadMagic => CliError::Config(e.to_string()),
            ModelError::Truncated(_) => CliError::Data(e.to_string()),
            ModelError::Io(io) => CliError::Runtime(io.to_string()),
            ModelError::Autodiff(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<auscult::data::DataError> for CliError {
    fn from(e: auscult::data::DataError) -> Self {
        use auscult::data::DataError;
        match e {
            // a class missing from the training split makes the weighted
            // sampler unconfigurable
            DataError::MissingClass { .. } => CliError::Config(e.to_string()),
            DataError::Io(io) => CliError::Runtime(io.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<auscult::dsp::DspError> for CliError {
    fn from(e: auscult::dsp::DspError) -> Self {
        use auscult::dsp::DspError;
        match e {
            DspError::Config(_) => CliError::Config(e.to_string()),
            DspError::Io(io) => CliError::Runtime(io.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<auscult::optim::OptimError> for CliError {
    fn from(e: auscult::optim::OptimError) -> Self {
        use auscult::optim::OptimError;
        match e {
            OptimError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<auscult::embed::TsneError> for CliError {
    fn from(e: auscult::embed::TsneError) -> Self {
        use auscult::embed::TsneError;
        match e {
            TsneError::Config(_) | TsneError::TooFewPoints(_) => CliError::Config(e.to_string()),
            TsneError::Calibration { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<auscult::eval::EvalError> for CliError {
    fn from(e: auscult::eval::EvalError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

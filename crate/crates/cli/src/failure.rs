use pronlearn::Error;

pub const USAGE: u8 = 2;
pub const IO: u8 = 3;
pub const NUMERIC: u8 = 4;
pub const INFEASIBLE: u8 = 5;

/// A failed command: process exit code plus message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, Failure>;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: IO,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Json(_) | Error::Format(_) | Error::Parse(_) => IO,
            Error::NonFinite(_) | Error::NotPositiveDefinite | Error::BacktrackExhausted { .. } => NUMERIC,
            Error::CalibrationInfeasible { .. } => INFEASIBLE,
            _ => USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::io(e.to_string())
    }
}

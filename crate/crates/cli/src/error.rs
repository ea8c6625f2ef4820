use std::fmt;
use std::path::Path;

/// Machine-greppable error class, printed as `error[E_...]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    Usage,
    Io,
    Parse,
    Invalid,
    UnknownScenario,
    Baseline,
    Simulation,
    Budget,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Usage => "E_USAGE",
            Self::Io => "E_IO",
            Self::Parse => "E_PARSE",
            Self::Invalid => "E_INVALID",
            Self::UnknownScenario => "E_UNKNOWN_SCENARIO",
            Self::Baseline => "E_BASELINE",
            Self::Simulation => "E_SIM",
            Self::Budget => "E_BUDGET",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Self::Usage => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct CliError {
    pub code: ErrorCode,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Always a single line.
        let message = self.message.replace('\n', " ");
        write!(f, "error[{}]: {}", self.code.as_str(), message.trim_end())
    }
}

impl CliError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Usage, message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        let what = match err.kind() {
            std::io::ErrorKind::NotFound => "file not found".to_owned(),
            _ => err.to_string(),
        };
        Self::new(ErrorCode::Io, format!("{}: {what}", path.display()))
    }
}

impl From<adaptbf_core::SimError> for CliError {
    fn from(err: adaptbf_core::SimError) -> Self {
        match err {
            adaptbf_core::SimError::Scenario(e) => Self::new(ErrorCode::Invalid, e.to_string()),
            adaptbf_core::SimError::Mismatch(m) => Self::new(ErrorCode::Baseline, m),
            other => Self::new(ErrorCode::Simulation, other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

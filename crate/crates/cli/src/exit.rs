//! Exit codes: 0 success, 1 failed verification or check, 2 invalid input,
//! 3 resource cap, 4 undecided under --strict.

use std::fmt;

use ssm_core::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Code {
    Failed = 1,
    Usage = 2,
    Resource = 3,
    Undecided = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: Code,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn new(code: Code, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Code::Usage, message)
    }

    pub fn failed(message: impl Into<String>) -> Self {
        Self::new(Code::Failed, message)
    }

    pub fn internal(e: impl fmt::Display) -> Self {
        Self::new(Code::Failed, e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::ResourceLimit { .. } => Code::Resource,
            Error::Solver(_) => Code::Failed,
            _ => Code::Usage,
        };
        CliError::new(code, e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

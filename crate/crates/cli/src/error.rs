//! Two-way error split matching the exit-code contract: usage/configuration
//! problems exit 2, data/estimation problems exit 3. Every error prints as
//! a single line on standard error.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Data(m) => ("data", m),
        };
        // single line, machine-parseable as `error[kind]: message`
        write!(f, "error[{kind}]: {}", msg.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

impl From<stagdid_core::Error> for CliError {
    fn from(e: stagdid_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

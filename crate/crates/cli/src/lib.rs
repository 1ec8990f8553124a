//! Command-line driver: data generation, discovery, simulation and comparison.

pub mod compare;
pub mod config;
pub mod presets;
pub mod run;

pub use config::{Method, RawConfig, RunConfig};

use std::fmt;

/// Failure class, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Integration,
    Training,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Integration => 3,
            ErrorKind::Training => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Config, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }
}

impl From<irksindy::Error> for CliError {
    fn from(e: irksindy::Error) -> Self {
        use irksindy::Error as E;
        let kind = match &e {
            E::IntegrationFailure { .. } => ErrorKind::Integration,
            E::NonConvergence { .. } | E::SingularJacobian | E::AtInterval { .. } | E::NonFiniteValue => ErrorKind::Training,
            _ => ErrorKind::Config,
        };
        Self { kind, message: e.to_string() }
    }
}

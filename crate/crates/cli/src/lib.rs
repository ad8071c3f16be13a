//! Configuration, dispatch and persistence for the `blockrip` command.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{execute, run};
pub use config::{validate, Command, ExperimentConfig, Overrides};
pub use output::{config_hash, verify_output, write_result, ExperimentResult};

/// Failure classes, each with a fixed exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("validation: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("convergence: {0}")]
    Convergence(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Capacity(_) => 3,
            CliError::Convergence(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    /// The reason on a single line.
    pub fn line(&self) -> String {
        self.to_string().replace(['\n', '\r'], " ")
    }
}

impl From<blockrip_core::Error> for CliError {
    fn from(e: blockrip_core::Error) -> Self {
        use blockrip_core::Error as E;
        match e {
            E::Capacity(s) => CliError::Capacity(s),
            e @ (E::Convergence { .. } | E::Divergence { .. } | E::FitDomain(_)) => {
                CliError::Convergence(e.to_string())
            }
            E::Argument(s) | E::ParameterDomain(s) => CliError::Validation(vec![s]),
            e => CliError::Validation(vec![e.to_string()]),
        }
    }
}

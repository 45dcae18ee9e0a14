//! Experiment runner: power and uncertainty sweeps, DC convergence traces,
//! and the validation suite, all written as one fixed-header CSV.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{Args, ExperimentKind, ExperimentSpec};
pub use experiments::{run, run_convergence, run_epsilon_sweep, run_power_sweep, run_validate, RunOutcome};
pub use output::{gnuplot_script, write_csv, ResultRow, CSV_HEADER};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONTRACT_FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read config {path}: {source}")]
    ConfigRead { path: String, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    ConfigParse { path: String, source: serde_json::Error },
    #[error(transparent)]
    Core(#[from] secrecy_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::ConfigRead { .. } | CliError::ConfigParse { .. } | CliError::Core(_) => {
                exit::USAGE
            }
            CliError::Io(_) | CliError::Csv(_) => exit::CONTRACT_FAILURE,
        }
    }
}

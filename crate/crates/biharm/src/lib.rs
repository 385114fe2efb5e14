//! Experiment runner for the biharmonic neural solvers.
//!
//! Configuration files, problem files, run artifacts and the acceptance
//! checks live here; the numerics are in `biharm-core`.

pub mod config;
pub mod experiment;
pub mod formats;
pub mod problem_file;
pub mod suite;

pub use config::RunConfig;
pub use experiment::{compare, run_experiment, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("bad file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] biharm_core::Error),
}

impl RunnerError {
    /// Process exit code: 2 for anything the user can fix in the input.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) | RunnerError::Format(_) => 2,
            _ => 1,
        }
    }
}

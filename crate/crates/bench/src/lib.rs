//! Instance generation, training, evaluation and aggregation for the
//! re-splitting trajectory optimizer.

pub mod config;
pub mod eval;
pub mod pool;
pub mod summary;
pub mod train;
pub mod trial;

use resplit_core::admm::SolverError;
use resplit_core::problem::ProblemError;
use resplit_policy::PolicyError;
use thiserror::Error;

pub use config::{Density, RunConfig};
pub use trial::{run_trial, Method, TrialMetrics};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible instance pool: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// Process exit code: 2 for configuration problems, 3 for an unusable
    /// instance pool, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Policy(PolicyError::Config(_)) => 2,
            BenchError::Infeasible(_) | BenchError::Problem(ProblemError::Infeasible(_)) => 3,
            _ => 1,
        }
    }
}

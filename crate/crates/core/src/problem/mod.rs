//! Benchmark instance generation: noise occupancy grids, grid search front-end,
//! corridor boxes, time allocation and the instance file format.

pub mod corridor;
pub mod grid;
pub mod instance;
pub mod noise;
pub mod path;

use thiserror::Error;

use crate::admm::SolverError;
use crate::trajectory::TrajectoryError;

pub use corridor::{build_corridor, corridor_is_safe};
pub use grid::{generate_grid, Cell, OccupancyGrid};
pub use instance::{make_instance, GeneratorConfig, ProblemInstance, ScaleClass};
pub use path::plan_path;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("density {0} outside [0, 0.6]")]
    Density(f64),
    #[error("invalid generator setting: {0}")]
    Config(String),
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("instance format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

pub type Result<T> = std::result::Result<T, ProblemError>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid plant: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    /// The cost budget cannot be met; `floor` is the smallest budget any policy reaches.
    #[error("infeasible budget: D = {budget} does not exceed the cost floor {floor} ({what})")]
    Infeasible {
        budget: f64,
        floor: f64,
        what: &'static str,
    },

    #[error("max-det problem infeasible (minimized infeasibility {0:.3e})")]
    ProblemInfeasible(f64),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("trajectory diverged in trial {trial} at stage {stage}")]
    Diverged { trial: usize, stage: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

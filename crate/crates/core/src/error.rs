use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("density ratio must be positive, found {value} at node {node}")]
    NonPositiveDensity { node: usize, value: f64 },

    #[error("degenerate frame at node {node}: Gram determinant {gram_det:e}")]
    DegenerateFrame { node: usize, gram_det: f64 },

    #[error("solvability violated: {0}")]
    Solvability(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("positivity lost at t = {t}: minimum ratio {min:e}")]
    PositivityLoss { t: f64, min: f64 },

    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

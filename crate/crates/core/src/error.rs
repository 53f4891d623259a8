use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis index: order {order} exceeds degree {degree}")]
    InvalidIndex { degree: usize, order: i64 },

    #[error("degree {degree} exceeds the configured cap {cap}")]
    DegreeCap { degree: usize, cap: usize },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigen-solver did not converge: {0}")]
    EigenSolver(String),

    #[error("quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("enumeration budget exceeded: {needed} > {budget}")]
    Budget { needed: u128, budget: u128 },

    #[error("measurements are not in the range of the sensing matrix (relative residual {0:.3e})")]
    Infeasible(f64),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

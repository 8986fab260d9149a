use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),
    #[error("feature of size {size} fine cells does not fit in a coarse cell of {cell} fine cells")]
    FeatureTooLarge { size: usize, cell: usize },
    #[error("csv row {row}: {msg}")]
    Csv { row: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("singular Neumann problem: right-hand side is not orthogonal to constants (relative sum {0:e})")]
    IncompatibleRhs(f64),
    #[error("mass matrix is numerically singular: {0}")]
    SingularMass(String),
    #[error("{operator} is not positive definite (curvature {value:e} at iteration {iteration})")]
    Indefinite {
        operator: &'static str,
        iteration: usize,
        value: f64,
    },
    #[error("eigensolver did not converge: {0}")]
    EigenNotConverged(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

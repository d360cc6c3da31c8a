use thiserror::Error;

/// Crate-wide error type. Variants mirror the failure modes of the numeric
/// layers (data validation, linear algebra, optimization) and the I/O layers
/// (CSV, JSON, config files).
#[derive(Error, Debug)]
pub enum Error {
    #[error("component (variable {var}, task {task}) is constant after detrending")]
    ConstantComponent { var: usize, task: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid B-spline basis: {0}")]
    InvalidBasis(String),

    #[error("argument outside domain: {0}")]
    OutOfDomain(String),

    #[error("covariance is numerically singular: {0}")]
    SingularCovariance(String),

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("optimizer diverged: {0}")]
    OptimizerDivergence(String),

    #[error("objective became non-finite")]
    NonFiniteObjective,

    #[error("empty candidate grid")]
    EmptyGrid,

    #[error("empty draw archive")]
    EmptyArchive,

    #[error("stick-breaking truncation too small: {0}")]
    EmptyTruncation(String),

    #[error("sampler failed at iteration {iteration}: {source}")]
    ChainFailure {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

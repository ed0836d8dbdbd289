use thiserror::Error;

/// Errors surfaced while loading data, configuring the estimator, or
/// evaluating the fitted surfaces.
#[derive(Debug, Error)]
pub enum MrlError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("no records")]
    NoRecords,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient sample: n = {n}, need at least {min}")]
    InsufficientSample { n: usize, min: usize },
    #[error("beyond follow-up: t = {t} >= tau = {tau}")]
    BeyondFollowUp { t: f64, tau: f64 },
    #[error("no lower covariates: p = d = {d}")]
    NoLowerCovariates { d: usize },
    #[error("nonpositive mean residual life encountered at t = {0}")]
    NonPositiveMrl(f64),
    #[error("score information matrix is numerically singular (condition number {cond:.3e})")]
    SingularInformation {
        cond: f64,
        /// The offending Gram matrix, flattened row-major, for diagnostics.
        matrix: Vec<f64>,
        dim: usize,
    },
    #[error("solver precondition failed: {0}")]
    SolverPrecondition(String),
    #[error("censoring calibration failed to bracket target rate {0}")]
    CalibrationBracket(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MrlError>;

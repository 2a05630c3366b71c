use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HdnormError {
    #[error("data matrix is empty ({rows} rows, {cols} columns)")]
    EmptyData { rows: usize, cols: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("ragged input: row {row} has {found} columns, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("too few samples: need at least {required}, got {got}")]
    TooFewSamples { required: usize, got: usize },

    #[error("oracle size exceeded: n = {n} is above the cap of {cap}")]
    OracleSizeExceeded { n: usize, cap: usize },

    #[error("non-positive dispersion: tr(Sigma^2) estimate = {tr_sigma_sq_hat}, tr(Sigma_D) = {tr_sigma_d}")]
    NonPositiveDispersion {
        tr_sigma_sq_hat: f64,
        tr_sigma_d: f64,
    },

    #[error("invalid radii: {0}")]
    InvalidRadii(String),

    #[error("invalid quantile order: {0}")]
    InvalidQuantileOrder(String),

    #[error("statistic kind {kind} cannot be used with the {rule} rejection rule")]
    IncompatibleStatistic { kind: String, rule: &'static str },

    #[error("invalid Monte-Carlo settings: {0}")]
    InvalidSettings(String),

    #[error("invalid scenario parameters: {0}")]
    InvalidScenarioParams(String),

    #[error("covariance matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix has zero operator norm")]
    ZeroMatrix,

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for HdnormError {
    fn from(e: std::io::Error) -> Self {
        HdnormError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HdnormError>;

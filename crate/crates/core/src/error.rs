use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SpecFunError {
    #[error("{func}: argument {arg} outside the domain")]
    Domain { func: &'static str, arg: f64 },
    #[error("{func}: argument {arg} overflows f64")]
    Overflow { func: &'static str, arg: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("basis index {index} outside [{lo}, {hi}]")]
    BasisIndex { index: i64, lo: i64, hi: i64 },

    #[error("no coherence coefficients for pair ({0}, {1})")]
    MissingPair(usize, usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("coherence coefficients violate the validity conditions: {0}")]
    Validity(String),

    #[error("covariance matrix of size {size} exceeds the configured cap {cap}")]
    Capacity { size: usize, cap: usize },

    #[error("Cholesky factorization failed after jitter escalation up to {max_jitter:e}")]
    Factorization { max_jitter: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("locations do not form a complete regular grid: {0}")]
    NotAGrid(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("data format: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

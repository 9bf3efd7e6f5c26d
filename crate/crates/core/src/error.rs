use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not causal: AR polynomial has a root with modulus <= 1 (largest inverse-root modulus {max_inverse_root:.6})")]
    NotCausal { max_inverse_root: f64 },

    #[error("degenerate coefficients: every coefficient is zero")]
    DegenerateCoefficients,

    #[error("moment does not exist: {0}")]
    MomentDoesNotExist(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("k too large: need k + 1 <= n, got k = {k}, n = {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("r must be negative, got r = {0}")]
    RMustBeNegative(f64),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("no LME solution found: {0}")]
    NoLmeSolution(String),

    #[error("non-negative coefficients required for the Pareto expansion, found c[{index}] = {value}")]
    NegativeCoefficient { index: usize, value: f64 },

    #[error("the Pareto expansion requires alpha > 2, got alpha = {0}")]
    AlphaTooSmall(f64),

    #[error("t too small for expansion: tail expansion is {value} at t = {t}")]
    TTooSmall { t: f64, value: f64 },

    #[error("sigma(n/k) unavailable; supply quantile expansion ({0})")]
    SigmaUnavailable(String),

    #[error("insufficient records: need at least {needed}, got {got}")]
    InsufficientRecords { needed: usize, got: usize },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

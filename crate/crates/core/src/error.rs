use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameters lie outside the hyperdiamond by {excess:.6e}")]
    HyperdiamondViolation { excess: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation requires memory depth 1, got {m}")]
    UnsupportedDepth { m: usize },

    #[error("horizon {n} exceeds the enumeration limit {max}")]
    HorizonTooLarge { n: usize, max: usize },

    #[error("invalid outcome {0}: expected -1 or +1")]
    InvalidOutcome(i64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no usable price moves")]
    EmptyResult,

    #[error("insufficient data: {rows} regression rows, need at least {needed}")]
    InsufficientData { rows: usize, needed: usize },

    #[error("design matrix is numerically singular")]
    SingularDesign,

    #[error("constrained fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize, last: Vec<f64> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::SingularDesign | Error::NonConvergence { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("inconsistent angle list: {0}")]
    InconsistentAngles(String),

    #[error("root scan did not converge on [{lo}, {hi}]: {reason}")]
    NoConvergence { lo: f64, hi: f64, reason: String },

    #[error("basis truncation too small: need q_max >= {q_max} and k_max >= {k_max}")]
    Truncation { q_max: usize, k_max: usize },

    #[error("incompatible bases: {0}")]
    BasisMismatch(String),

    #[error("parity violation: {0}")]
    Parity(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("point ({0}, {1}) lies outside the billiard")]
    OutsideDomain(f64, f64),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

use nalgebra::DVector;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration rejected before anything ran.
    #[error("config error: {0}")]
    Config(String),

    #[error("point lies outside the domain C: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A sampled check of commutativity, nonexpansiveness or a contraction
    /// constant failed.
    #[error("certification failed: {reason}")]
    Certification { reason: String, witness: Option<DVector<f64>> },

    /// Picard iteration hit its budget; `best` is the last iterate.
    #[error("inner solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    InnerNotConverged { best: DVector<f64>, iterations: usize, residual: f64 },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit status used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Certification { .. } => 3,
            Error::InnerNotConverged { .. } => 4,
            _ => 2,
        }
    }

    pub(crate) fn dims(expected: usize, found: usize) -> Self {
        Error::DimensionMismatch { expected, found }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

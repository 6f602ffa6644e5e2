use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter vector violates the domain predicate of its family.
    #[error("domain violation in {family}: {predicate}")]
    Domain { family: String, predicate: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("operation not supported for {0}")]
    Unsupported(String),

    #[error("component {component} has total responsibility below 1e-12")]
    ZeroWeightComponent { component: usize },

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("inner solver did not reach the additive tolerance {epsilon:e} within {iterations} iterations (gap {gap:e})")]
    Certificate {
        epsilon: f64,
        gap: f64,
        iterations: usize,
    },

    #[error("improper prior: {0}")]
    ImproperPrior(String),

    #[error("need at least {required} tail iterations, got {got}")]
    InsufficientTail { required: usize, got: usize },

    #[error("every step size in the grid diverged")]
    AllDiverged,

    #[error("enumeration over {terms} latent assignments exceeds the cap")]
    TooLarge { terms: u128 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(family: impl Into<String>, predicate: impl Into<String>) -> Self {
        Error::Domain {
            family: family.into(),
            predicate: predicate.into(),
        }
    }

    /// True for errors raised by a parameter leaving its domain.
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain { .. })
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

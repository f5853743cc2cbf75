use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Exhaustive search would exceed the configured evaluation budget.
    #[error("brute force needs C({m},{k}) = {subsets} subset evaluations, budget is {budget}")]
    Capacity {
        m: usize,
        k: usize,
        subsets: u128,
        budget: u128,
    },

    /// The instance makes a derived quantity undefined.
    #[error("degenerate instance: {0}")]
    Degenerate(String),

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A file did not match its schema.
    #[error("{source_name}: {location}: {message}")]
    Parse {
        source_name: String,
        location: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(
        source_name: impl Into<String>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by invalid user input rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Precondition(_) | Error::Config(_) | Error::Parse { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

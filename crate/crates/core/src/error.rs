use thiserror::Error;

/// Errors raised by the reduction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("reference matrix not positive definite")]
    NotPositiveDefinite,

    #[error("reference matrix is ill-conditioned (condition number {condition:.3e} exceeds 1e12)")]
    IllConditioned { condition: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("rank {rank} out of range for dimension {dim}")]
    RankOutOfRange { rank: usize, dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("forward model returned non-finite value")]
    NonFiniteForward,

    #[error("non-finite {what} at sample {index}")]
    NonFiniteSample { what: &'static str, index: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("weights must be nonnegative with a positive sum")]
    ZeroWeights,

    #[error("degenerate ridge density at sample {0}")]
    DegenerateRidge(usize),

    #[error("degenerate normalizer: every log-likelihood evaluation is -inf")]
    DegenerateNormalizer,

    #[error("mixture precision ordering violated: component {0} precision does not dominate the first component's")]
    MixtureOrdering(usize),

    #[error("method {method} requires {capability}")]
    MissingCapability { method: String, capability: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures caused by non-finite arithmetic rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteForward
                | Error::NonFiniteSample { .. }
                | Error::NonFinite(_)
                | Error::DegenerateRidge(_)
                | Error::DegenerateNormalizer
        )
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

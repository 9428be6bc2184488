use thiserror::Error;

pub type Result<T, E = VgcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VgcError {
    #[error("domain error in {function}: {detail}")]
    Domain {
        function: &'static str,
        detail: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("coordinate {coordinate} value {value} lies outside the model support")]
    Support { coordinate: usize, value: f64 },

    #[error("value {value} lies outside the range of the transform")]
    Range { value: f64 },

    #[error("derivative overflow at latent coordinate {z}")]
    DerivativeOverflow { z: f64 },

    #[error("operation `{0}` requires a Bernstein-polynomial transform")]
    Variant(&'static str),

    #[error("Cholesky diagonal entry {index} = {value} is below the floor {floor}")]
    SingularFactor { index: usize, value: f64, floor: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("line search failed at iteration {iteration}")]
    LineSearch { iteration: usize },

    #[error("quadrature did not reach tolerance {tolerance:e} (error estimate {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64 },

    #[error("{consecutive} consecutive Monte Carlo samples were rejected")]
    TooManyRejections { consecutive: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl VgcError {
    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        VgcError::Domain {
            function,
            detail: detail.into(),
        }
    }

    /// Errors that invalidate a single Monte Carlo draw but not the run.
    pub fn is_sample_rejection(&self) -> bool {
        matches!(
            self,
            VgcError::Support { .. } | VgcError::DerivativeOverflow { .. } | VgcError::Range { .. }
        )
    }
}

use thiserror::Error;

/// Crate-wide error type.
///
/// The variants partition the failure modes the CLI maps onto distinct exit
/// codes: invalid input, numerical non-convergence, a singular system, an
/// unstable parameterization, and a diverging simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or configuration (dimension mismatch, out-of-range
    /// parameter, malformed config document).
    #[error("validation error: {0}")]
    Validation(String),

    /// An iterative routine exhausted its budget without meeting its
    /// convergence test.
    #[error("{routine} did not converge within {budget} iterations")]
    Convergence { routine: &'static str, budget: usize },

    /// Singular or numerically singular linear system.
    #[error("singular linear system: {0}")]
    Singular(String),

    /// Covariance factorization failed (matrix not positive definite).
    #[error("factorization error: {0}")]
    Factorization(String),

    /// A simulation replica produced a non-finite or runaway estimate.
    #[error("divergence at iteration {iteration}{}", replica.map(|r| format!(" (replica {r})")).unwrap_or_default())]
    Divergence {
        replica: Option<usize>,
        iteration: usize,
    },

    /// The per-sweep transition matrix has spectral radius >= 1, so the
    /// transient recursion and the steady-state solve are undefined.
    #[error("unstable parameterization: spectral radius {spectral_radius} >= 1")]
    Instability { spectral_radius: f64 },

    /// An error raised while running a labeled experiment.
    #[error("experiment '{label}': {source}")]
    Labeled {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the experiment label it occurred under.
    pub fn labeled(label: impl Into<String>, source: Error) -> Self {
        Error::Labeled {
            label: label.into(),
            source: Box::new(source),
        }
    }

    /// The underlying error, unwrapping any experiment label.
    pub fn root(&self) -> &Error {
        match self {
            Error::Labeled { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model parameter failed validation. `path` names the offending field.
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },

    #[error("chain has no unique stationary distribution: {0}")]
    NoUniqueStationary(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("adaptive quadrature failed: estimated error {error:e} above tolerance {tolerance:e}")]
    QuadratureFailure { error: f64, tolerance: f64 },

    #[error("Monte Carlo estimate degenerated: {0}")]
    DegenerateEstimate(String),

    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("could not bracket a root: {0}")]
    BracketFailure(String),

    #[error("numerical derivative ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("queue unstable: mean arrivals {arrival_rate} exceed mean service {service_rate} bits/block")]
    UnstableQueue { arrival_rate: f64, service_rate: f64 },

    #[error("not enough tail points for a fit: {usable} usable, need 4")]
    InsufficientTail { usable: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A failure at one point of a sweep.
    #[error("at {point}: {source}")]
    AtPoint { point: String, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Validation failures, as opposed to runtime/numerical failures.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::AtPoint { source, .. } => source.is_validation(),
            other => matches!(other, Error::Invalid { .. } | Error::NoUniqueStationary(_)),
        }
    }

    pub(crate) fn at(self, point: impl Into<String>) -> Self {
        Error::AtPoint {
            point: point.into(),
            source: Box::new(self),
        }
    }
}

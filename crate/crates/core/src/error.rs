use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input.
    #[error("invalid input: {0}")]
    Input(String),

    /// An eigenvalue formula was requested at a point where the eigenvalue is not simple.
    #[error("degenerate eigenvalue {index}: gap {gap:.3e} below threshold {threshold:.3e}")]
    Degenerate {
        index: usize,
        gap: f64,
        threshold: f64,
    },

    /// The state lies outside the operator or field validity region.
    #[error("outside validity region: {0}")]
    Domain(String),

    /// A hypothesis of an audit does not hold for the supplied data.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Convexity scan found a Hessian eigenvalue below the zero threshold.
    #[error("field is not convex: min eigenvalue {min_eigenvalue:.6e} at {point:?}")]
    NotConvex { min_eigenvalue: f64, point: Vec<f64> },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("newton iteration failed: {0}")]
    Divergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

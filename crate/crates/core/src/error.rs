use thiserror::Error;

/// Which standing hypothesis on (A, Q) a parameter choice violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// `Tr(A^{-alpha}) < inf`.
    Trace,
    /// `A^beta Q` bounded, with `min(alpha - 1, 0) <= beta <= alpha`.
    Covariance,
    /// `1 - alpha + beta > 0`.
    Order,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Hypothesis::Trace => "trace condition Tr(A^-alpha) < inf",
            Hypothesis::Covariance => "covariance condition A^beta Q in L(H)",
            Hypothesis::Order => "order condition 1 - alpha + beta > 0",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not positive semidefinite: eigenvalue #{index} = {value:e} (largest {largest:e})")]
    NotPositiveSemidefinite {
        index: usize,
        value: f64,
        largest: f64,
    },

    #[error("inadmissible regularity indices: {hypothesis} fails ({detail})")]
    Inadmissible {
        hypothesis: Hypothesis,
        detail: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

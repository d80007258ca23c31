use thiserror::Error;

/// Errors raised by the simulator and its optimizers.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing or violates a constraint. `key` is the
    /// dotted config path the problem is attached to.
    #[error("invalid configuration at `{key}`: {message}")]
    InvalidKey { key: String, message: String },

    /// Inputs do not fit together (dimension mismatch, empty tables, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An input violated an operation's precondition (e.g. a non-PSD covariance).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A factorization failed or produced unusable output.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A sub-optimizer failed inside the alternating loop.
    #[error("outer iteration {iteration}, {stage} stage: {source}")]
    Stage {
        iteration: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// A Monte-Carlo run failed.
    #[error("run with seed {seed} failed: {source}")]
    Run {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn key(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidKey {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

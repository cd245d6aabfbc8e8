use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or input failed its precondition.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// A scale parameter was zero, negative or NaN where a positive value is required.
    #[error("non-positive scale {value} at agent {agent}, step {step}")]
    NonPositiveScale {
        agent: usize,
        step: usize,
        value: f64,
    },

    #[error("non-finite gradient in epoch {epoch}, batch {batch}")]
    NonFiniteGradient { epoch: usize, batch: usize },

    /// Wraps a failure that happened while training one client in one round.
    #[error("round {round}, client {client}: {source}")]
    Client {
        round: usize,
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("unsupported {format} version {found} (expected {expected})")]
    Version {
        format: &'static str,
        found: u16,
        expected: u16,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFiniteGradient { .. } | Error::NonPositiveScale { .. } => true,
            Error::Client { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

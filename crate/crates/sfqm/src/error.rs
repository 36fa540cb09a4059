use thiserror::Error;

/// Error type shared across the engine. The discriminants map onto the CLI
/// exit codes: invalid input -> 1, invariant violation -> 2, resource -> 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
}

impl Error {
    /// CLI exit code associated with this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 1,
            Error::Invariant(_) => 2,
            Error::ResourceLimit(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

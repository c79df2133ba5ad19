use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("need at least 2 replicates to estimate the error variance, got {0}")]
    InsufficientReplicates(usize),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("non-positive residual variance {value} in node-wise regression for column {index}")]
    DegenerateResidual { index: usize, value: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },

    #[error("scenario unstable: {failed} of {total} replicates failed")]
    ScenarioUnstable { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn singular(msg: impl Into<String>) -> Self {
        Error::SingularSystem(msg.into())
    }
}

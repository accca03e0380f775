use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("not stochastic: {0}")]
    NotStochastic(String),
    #[error("invalid covariance: {0}")]
    NotPsd(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("unsupported observation: {0}")]
    Unsupported(String),
    #[error("instance mismatch: {0}")]
    Instance(String),
    #[error("non-simple lens: {0}")]
    NotSimple(String),
    #[error("composition error: {0}")]
    Composition(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("diverged: {0}")]
    Diverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

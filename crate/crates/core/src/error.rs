use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("encode error: {0}")]
    Encode(String),

    #[error("decode requested before the completion rule was met")]
    NotReady,

    #[error("decode error: {0}")]
    Decode(String),

    #[error("code construction failed after {attempts} attempts: {reason}")]
    Construction { attempts: usize, reason: String },

    #[error("infeasible request: need {required} partial gradients but workers hold {capacity}")]
    Infeasible { required: usize, capacity: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

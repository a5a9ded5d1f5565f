use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("training failed at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },
    #[error("refused: {0}")]
    Refused(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! arg_err {
    ($($t:tt)*) => { $crate::error::Error::Argument(alloc::format!($($t)*)) };
}
pub(crate) use arg_err;

use thiserror::Error;

/// Errors raised by the codec, recovery kernels and simulation harness.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum HsvcError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("decode failure: {0}")]
    DecodeFailure(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, HsvcError>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::HsvcError::$kind(format!($($arg)*)))
    };
}
pub(crate) use bail;

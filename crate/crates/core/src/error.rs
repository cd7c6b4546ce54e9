use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or extents do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A NaN or infinity was produced.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A caller violated an operation's precondition.
    #[error("contract error: {0}")]
    Contract(String),
    /// An invalid model or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A malformed or inconsistent file.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(format!($($arg)*)))
    };
}
pub(crate) use bail;

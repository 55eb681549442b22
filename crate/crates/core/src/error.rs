use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the documented domain of an operation.
    Precondition(String),
    /// A configuration value is inconsistent or unusable.
    Config(String),
    /// Shapes or counts of inputs do not line up.
    Shape(String),
    /// A field does not fit the token layout.
    Overflow { column: String, tokens: usize, width: usize },
    /// A categorical value is not in the schema vocabulary.
    UnknownCategory { column: String, value: String },
    /// Text contains a character the vocabulary cannot represent.
    Untokenizable(char),
    /// Data cannot support the requested computation.
    Data(String),
    /// Training produced a NaN or infinite loss.
    NonFinite(String),
    /// Codec pretraining ended above the round-trip tolerance.
    NotConverged { mean_error: f64, max_error: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::Overflow { column, tokens, width } => write!(
                f,
                "column `{column}` needs {tokens} tokens but its span holds {width}"
            ),
            Error::UnknownCategory { column, value } => {
                write!(f, "unknown category `{value}` in column `{column}`")
            }
            Error::Untokenizable(c) => write!(f, "character {c:?} is not in the vocabulary"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::NotConverged { mean_error, max_error } => write!(
                f,
                "codec did not converge: mean round-trip error {mean_error:.3e}, max {max_error:.3e}"
            ),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(alloc::format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;

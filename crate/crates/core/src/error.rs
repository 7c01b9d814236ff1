use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated an operation's precondition (shapes, counts, NaN input).
    Contract(String),
    /// A requested frame range falls outside the available frames.
    Range { start: usize, len: usize, available: usize },
    /// The data carries no variance, so no principal direction exists.
    DegenerateVariance,
    /// A user-facing specification failed validation.
    Validation(String),
    /// Training produced a non-finite loss.
    Training {
        message: String,
        stage: usize,
        step: usize,
        last_finite_loss: Option<f64>,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Range { start, len, available } => write!(f, "range {start}..{} exceeds {available} available frames", start + len),
            Error::DegenerateVariance => write!(f, "frames have zero variance"),
            Error::Validation(msg) => write!(f, "invalid specification: {msg}"),
            Error::Training {
                message,
                stage,
                step,
                last_finite_loss,
            } => {
                write!(f, "training failed at stage {stage}, step {step}: {message}")?;
                if let Some(loss) = last_finite_loss {
                    write!(f, " (last finite loss {loss:.6e})")?;
                }
                Ok(())
            }
        }
    }
}

impl core::error::Error for Error {}

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] chad_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("export failed: {0}")]
    Export(String),
    #[error("unavailable: {0}")]
    Unavailable(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }

    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(chad_core::Error::Contract(_)) => "contract",
            Error::Core(chad_core::Error::Range { .. }) => "range",
            Error::Core(chad_core::Error::DegenerateVariance) => "degenerate-variance",
            Error::Core(chad_core::Error::Validation(_)) => "validation",
            Error::Core(chad_core::Error::Training { .. }) => "training",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
            Error::Format { .. } => "format",
            Error::NotFound(_) => "not-found",
            Error::Export(_) => "export",
            Error::Unavailable(_) => "unavailable",
        }
    }

    /// One-line JSON rendering: `{"error":kind,"message":text}`.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

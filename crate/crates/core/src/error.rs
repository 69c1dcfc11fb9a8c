use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::ShapeReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("activation shapes do not match the network config: {0}")]
    Shape(ShapeReport),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}format error at {source}", path_prefix(.path))]
    Format {
        path: Option<PathBuf>,
        #[source]
        source: FormatError,
    },

    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown image id {0:?}")]
    UnknownId(String),

    #[error("activation provider failed: {0}")]
    Provider(String),
}

fn path_prefix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a file path to a format error raised while decoding bytes.
    pub(crate) fn at_path(self, p: impl Into<PathBuf>) -> Self {
        match self {
            Error::Format { path: None, source } => Error::Format {
                path: Some(p.into()),
                source,
            },
            other => other,
        }
    }

    /// Byte offset of a format error, if this is one.
    pub fn format_offset(&self) -> Option<u64> {
        match self {
            Error::Format { source, .. } => Some(source.offset),
            _ => None,
        }
    }
}

/// A malformed binary file, positioned at the byte where decoding stopped.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("byte {offset}: {kind}")]
pub struct FormatError {
    pub offset: u64,
    pub kind: FormatErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatErrorKind {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("trailing data: expected {expected} bytes, found {actual}")]
    TrailingBytes { expected: u64, actual: u64 },
    #[error("{0}")]
    Invalid(String),
}

impl From<FormatError> for Error {
    fn from(source: FormatError) -> Self {
        Error::Format { path: None, source }
    }
}

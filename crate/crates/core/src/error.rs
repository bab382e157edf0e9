use std::path::PathBuf;

use crate::image::Shape;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: Shape, right: Shape },

    #[error("invalid image dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image {shape} is smaller than the {window}x{window} window")]
    ImageTooSmall { shape: Shape, window: usize },

    #[error("unsupported image format{}: {reason}", path_suffix(.path))]
    UnsupportedFormat { path: Option<PathBuf>, reason: String },

    #[error("malformed image header: {0}")]
    MalformedHeader(String),

    #[error("truncated image payload: expected {expected} samples, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("cannot parse filter config `{input}`: {reason}")]
    ConfigParse { input: String, reason: String },

    #[error("filter {config} failed: {source}")]
    Filter {
        config: String,
        #[source]
        source: Box<Error>,
    },

    #[error("basis magnitude {found} does not match model magnitude {expected}")]
    MagnitudeMismatch { expected: usize, found: usize },

    #[error("model format version mismatch: file has {found}, expected {expected}")]
    ModelVersion { expected: u32, found: u32 },

    #[error("malformed model document: {0}")]
    MalformedModel(String),

    #[error("model lists {configs} filter configs but {weights} {branch} weights")]
    ConfigCount {
        configs: usize,
        weights: usize,
        branch: &'static str,
    },

    #[error("malformed manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("sample {id}: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn path_suffix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" in {}", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

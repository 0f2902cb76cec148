use std::fmt;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("geometry error in {op}: {detail}")]
    Geometry { op: &'static str, detail: String },

    #[error("size error: shape {0:?} overflows addressable memory")]
    Size([usize; 4]),

    #[error("config error at `{key}`: {constraint}")]
    Config { key: String, constraint: String },

    #[error("config syntax error: {0}")]
    Syntax(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("numeric error in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },

    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error("empty search space: {0}")]
    EmptySpace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl fmt::Display) -> Self {
        Error::Shape {
            op,
            detail: detail.to_string(),
        }
    }

    pub(crate) fn geometry(op: &'static str, detail: impl fmt::Display) -> Self {
        Error::Geometry {
            op,
            detail: detail.to_string(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            constraint: constraint.into(),
        }
    }

    pub(crate) fn format(offset: u64, detail: impl fmt::Display) -> Self {
        Error::Format {
            offset,
            detail: detail.to_string(),
        }
    }
}

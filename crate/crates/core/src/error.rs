use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("PLF syntax error at byte {pos}: {msg}")]
    PlfSyntax { pos: usize, msg: String },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("cycle detected through edge {from} -> {to}")]
    Cycle { from: usize, to: usize },

    #[error("path enumeration exceeded the limit of {limit} paths")]
    PathExplosion { limit: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidLattice(msg.into())
    }
}

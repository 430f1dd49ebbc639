//! Error type shared by every module in the crate.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Contract violation: two quaternion blocks (or flat buffers) that must
    /// have equal length do not.
    #[error("length mismatch: {left} vs {right} ({context})")]
    LengthMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{kind} id {id} out of range (< {bound} required)")]
    IdOutOfRange {
        kind: &'static str,
        id: u32,
        bound: usize,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("checkpoint version mismatch: found {found}, supported {supported}")]
    CheckpointVersion { found: u32, supported: u32 },

    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),

    #[error("vocab size mismatch: checkpoint has {ckpt_entities} entities / {ckpt_relations} relations, dataset has {data_entities} / {data_relations}")]
    VocabMismatch {
        ckpt_entities: usize,
        ckpt_relations: usize,
        data_entities: usize,
        data_relations: usize,
    },

    #[error("non-finite {what} encountered: {detail}")]
    NonFinite { what: &'static str, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

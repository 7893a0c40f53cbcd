use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseLineError {
    #[error("line payload must be 128 hex characters, got {0}")]
    Length(usize),
    #[error("invalid hex digit {0:?}")]
    Digit(char),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: cycle {cycle} is earlier than previous cycle {prev}")]
    Ordering { line: usize, cycle: u64, prev: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FvError {
    #[error("frequent-value table holds at most {max} entries, got {got}")]
    TooManyEntries { max: usize, got: usize },
    #[error("frequent-value table entry {index} duplicates entry {first}")]
    Duplicate { index: usize, first: usize },
    #[error("invalid codeword {0:#010x}")]
    InvalidCodeword(u32),
    #[error("table line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: ParseLineError,
    },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot parse configuration: {0}")]
    Toml(#[from] toml::de::Error),
}

impl ConfigError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ConfigError::Invalid(msg.into())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Trace {
        path: PathBuf,
        #[source]
        source: TraceError,
    },
    #[error(transparent)]
    TraceData(#[from] TraceError),
    #[error("{path}: {source}")]
    FvTable {
        path: PathBuf,
        #[source]
        source: FvError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

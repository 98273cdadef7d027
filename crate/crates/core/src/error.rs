use std::path::PathBuf;

use crate::fairness::Metric;
use crate::protocol::{ClassLabel, GroupLabel};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: malformed row ({reason})")]
    MalformedRow { line: usize, reason: String },

    #[error("duplicate utterance id {0:?}")]
    DuplicateUtt(String),

    #[error("input contains no records")]
    EmptyFile,

    #[error("non-finite score for utterance {0:?}")]
    NonFiniteScore(String),

    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),

    #[error("{} trial(s) have no score, first: {}", .0.len(), first_id(.0))]
    MissingScore(Vec<String>),

    #[error("{} score(s) have no trial, first: {}", .0.len(), first_id(.0))]
    OrphanScore(Vec<String>),

    #[error("degenerate set: no {0} trials")]
    DegenerateSet(ClassLabel),

    #[error("operating point polarity does not match the evaluation set")]
    PolarityMismatch,

    #[error("length mismatch: {left} trials vs {right} decisions")]
    LengthMismatch { left: usize, right: usize },

    #[error("group {0} is not present in the evaluation set")]
    MissingGroup(GroupLabel),

    #[error("dual-path cross-check disagrees on {metric} for group {group}")]
    CrossCheckMismatch { metric: Metric, group: GroupLabel },

    #[error("invalid p-value {0}")]
    InvalidP(f64),

    #[error("invalid proportion sample {successes}/{trials}")]
    InvalidSample { successes: u64, trials: u64 },

    #[error("cell count {count} exceeds the cap of {cap}")]
    CapExceeded { count: u64, cap: u64 },

    #[error("{n} trials exceed the brute-force limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("system {system:?}: {source}")]
    System {
        system: String,
        #[source]
        source: Box<Error>,
    },
}

fn first_id(ids: &[String]) -> &str {
    ids.first().map(String::as_str).unwrap_or("-")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }

    pub fn in_system(self, system: &str) -> Self {
        Error::System {
            system: system.to_string(),
            source: Box::new(self),
        }
    }

    /// True when the error indicates a bug in this crate rather than bad input.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::CrossCheckMismatch { .. } => true,
            Error::System { source, .. } | Error::InFile { source, .. } => source.is_internal(),
            _ => false,
        }
    }
}

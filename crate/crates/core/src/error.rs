//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("occupancy {value} outside the single-site alphabet {alphabet}")]
    OutOfAlphabet { value: i64, alphabet: String },

    #[error("invalid model parameter: {0}")]
    Parameter(String),

    #[error("invalid model structure: {0}")]
    Structure(String),

    #[error("theta = {theta} outside the open interval ({lo}, {hi})")]
    ThetaOutOfBounds { theta: f64, lo: String, hi: String },

    #[error("model/volume incompatibility: {0}")]
    Incompatible(String),

    #[error("move ({i}, {j}) violates occupancy bounds")]
    IllegalMove { i: i64, j: i64 },

    #[error("operation requires {0}")]
    VolumeMismatch(String),

    #[error("requested tail bound {requested} unachievable: {reason}")]
    TailUnachievable { requested: f64, reason: String },

    #[error("rejection sampler exhausted {tries} tries (observed acceptance rate {acceptance_rate})")]
    MaxTriesExhausted { tries: u64, acceptance_rate: f64 },

    #[error("state count {count} exceeds the enumeration limit {limit}")]
    TooManyStates { count: u64, limit: u64 },

    #[error("deviation window grew past the hard cap of {cap} sites")]
    WindowCapExceeded { cap: usize },

    #[error("unknown builtin model {0:?}")]
    UnknownModel(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

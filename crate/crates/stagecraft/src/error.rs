//! Crate-wide error type.
//!
//! Structural misuse of the numeric core (shape mismatches, out-of-range
//! indices) panics with a descriptive message — those are programming errors.
//! Everything that can go wrong at runtime with a well-formed program flows
//! through [`Error`]: bad configurations, I/O, malformed files, protocol
//! violations between distributed peers, and numerical blow-ups.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All recoverable failures produced by the framework.
#[derive(Debug, Error)]
pub enum Error {
    /// A task was driven incorrectly, e.g. stepped after the episode ended.
    #[error("task error: {0}")]
    Task(String),

    /// An experiment configuration is internally inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An experiment name was not found in the registry. Carries
    /// closest-match suggestions for the error message.
    #[error("unknown experiment '{name}'{}", suggestion_suffix(.suggestions))]
    UnknownExperiment {
        name: String,
        suggestions: Vec<String>,
    },

    /// A `--set key=value` override named an unknown key or held a value
    /// that does not parse.
    #[error("invalid override: {0}")]
    Override(String),

    /// A checkpoint or parameter file could not be used.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A demonstration dataset file is malformed or inconsistent.
    #[error("demo dataset error: {0}")]
    Demos(String),

    /// A distributed peer misbehaved or disappeared.
    #[error("distributed training error: {0}")]
    Dist(String),

    /// Training produced a non-finite quantity where a finite one is
    /// required (e.g. NaN policy logits).
    #[error("numerical error: {0}")]
    Numeric(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn suggestion_suffix(suggestions: &[String]) -> String {
    if suggestions.is_empty() {
        String::new()
    } else {
        format!(" (did you mean: {}?)", suggestions.join(", "))
    }
}

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by failure class so callers (notably the CLI) can map
/// them onto exit codes without string matching.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input line in a data file (triples, corpus, word vectors, config).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A name was looked up against a closed vocabulary and was not found.
    #[error("vocabulary error: {0}")]
    Vocab(String),

    /// A file is structurally not what it claims to be (bad magic, truncation).
    #[error("format error: {0}")]
    Format(String),

    /// A function was called with arguments violating its preconditions.
    #[error("argument error: {0}")]
    Argument(String),

    /// Inconsistent or out-of-range configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// Incompatible options or shapes detected when wiring components together.
    #[error("usage error: {0}")]
    Usage(String),

    /// A computation produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Negative sampling could not find a valid corruption.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// A synthetic dataset specification cannot be satisfied.
    #[error("infeasible dataset spec: {0}")]
    Infeasible(String),

    /// A checkpoint field failed validation on load.
    #[error("checkpoint error in {field}: {msg}")]
    Checkpoint { field: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

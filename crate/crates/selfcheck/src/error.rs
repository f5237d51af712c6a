//! Crate-wide error type.

use std::time::Duration;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation received empty input where content is required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A caller violated an operation precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A domain-type invariant does not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// A dataset record failed to load; `line` is 1-based.
    #[error("{path}:{line}: {kind}")]
    Dataset {
        path: String,
        line: usize,
        kind: DatasetErrorKind,
    },

    #[error(transparent)]
    Backend(#[from] BackendError),

    /// Every question for a sentence failed generation, so the QA score
    /// cannot be computed for it.
    #[error("no usable questions for sentence {sentence_index}")]
    NoQuestions { sentence_index: usize },

    /// Statistic undefined on the given input (single class, zero
    /// variance, chance agreement of 1, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A scoring method was requested without the backend capability it
    /// needs being configured.
    #[error("method `{method}` requires a {capability} backend, which is not configured")]
    MethodBackend {
        method: String,
        capability: &'static str,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetErrorKind {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),

    #[error("missing field `{0}`")]
    MissingField(&'static str),

    #[error("label/sentence length mismatch: {labels} labels for {sentences} sentences")]
    LabelLengthMismatch { labels: usize, sentences: usize },

    #[error("invalid record: {0}")]
    Invalid(String),
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    /// Transport-level failure that survived the retry policy.
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },

    /// The server asked us to slow down and retries ran out.
    #[error("rate limited after {attempts} attempt(s){}", retry_after_suffix(.retry_after))]
    RateLimited {
        attempts: u32,
        retry_after: Option<Duration>,
    },

    #[error("backend unavailable: {0}")]
    Unavailable(String),

    #[error("text too long: {len} characters exceeds the backend limit of {limit}")]
    TextTooLong { len: usize, limit: usize },

    /// The response arrived but did not match the wire contract.
    #[error("protocol error: {0}")]
    Protocol(String),
}

fn retry_after_suffix(retry_after: &Option<Duration>) -> String {
    match retry_after {
        Some(d) => format!(" (retry after {:.1}s)", d.as_secs_f64()),
        None => String::new(),
    }
}

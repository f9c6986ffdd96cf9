//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record in an input file failed to parse. `index` is the zero-based
    /// position of the offending record.
    #[error("parse error in {path} at record {index}: {message}")]
    Parse {
        path: String,
        index: usize,
        message: String,
    },

    #[error("duplicate identifier: {0}")]
    Duplicate(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("unknown tool id: {0}")]
    UnknownToolId(String),

    /// The operation requires a score-producing (retriever) selector.
    #[error("unsupported selector: {0}")]
    UnsupportedSelector(String),

    /// Ranked-mode output passed where a chosen set was required, or vice versa.
    #[error("selection mode mismatch: {0}")]
    Mode(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Remote provider failure. `retryable` distinguishes transient transport
    /// conditions (timeouts, 5xx, connection resets) from permanent ones.
    #[error("provider error (retryable: {retryable}): {message}")]
    Provider { retryable: bool, message: String },

    /// The provider answered but violated its contract (e.g. embedding
    /// dimension changed between calls).
    #[error("provider contract violation: {0}")]
    ProviderContract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The evaluation-budget ledger reached zero. Carries no state; the attack
    /// driver returns its best-so-far result alongside this signal.
    #[error("evaluation budget exhausted")]
    BudgetExhausted,

    #[error("edit limit exceeded: {0} edits already applied")]
    EditLimit(usize),

    #[error("locus out of bounds: {0}")]
    OutOfBounds(String),

    #[error("field may not be perturbed: {0}")]
    FieldMask(String),

    #[error("integrity violation: {0}")]
    Integrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

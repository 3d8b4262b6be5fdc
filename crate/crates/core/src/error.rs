use thiserror::Error;

/// Crate-wide error type. Variants are structured so callers (notably the CLI)
/// can map them onto exit codes without string matching.
#[derive(Debug, Error)]
pub enum Error {
    /// Two operands with incompatible shapes reached a graph operation.
    #[error("{op}: shape mismatch, lhs {lhs:?} vs rhs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An operation was invoked with arguments that are well-shaped but
    /// semantically invalid (bad axis, empty cut point list, non-scalar loss).
    #[error("{op}: {message}")]
    InvalidOperation { op: &'static str, message: String },

    /// Configuration rejected before any work started.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A class label outside the declared range.
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    /// Input data is structurally unusable (wrong column count, unparseable
    /// numeric field, missing header).
    #[error("data error: {0}")]
    Data(String),

    /// The input parsed but contained no usable rows.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Classification needs at least two classes.
    #[error("single-class dataset: {0}")]
    SingleClass(String),

    /// A full tree over the requested binning would be too large to hold in
    /// memory; the caller should switch to the random-subspace forest.
    #[error(
        "tree would have {leaves} leaves (limit {limit}); reduce cut points \
         or train a random-subspace forest over feature subsets"
    )]
    TooManyLeaves { leaves: u128, limit: usize },

    /// Training produced a non-finite loss and cannot continue.
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    /// A serialized model file that does not match the expected format.
    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

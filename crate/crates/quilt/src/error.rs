//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by tensor kernels, data handling, training and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A kernel was called with operands whose shapes do not conform.
    #[error("{kernel}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        kernel: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A binary file did not match the expected on-disk format.
    #[error("format error in {path}: expected magic {expected:#010x}, found {actual:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        actual: u32,
    },

    /// Paired files disagree about how many records they hold.
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    /// The training loss stopped being a finite number.
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} \
         (bce={l_bce}, pseudo={l_pseudo}, consist={l_consist})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        l_bce: f64,
        l_pseudo: f64,
        l_consist: f64,
    },

    /// A metric could not be computed on the given inputs.
    #[error("not evaluable: {0}")]
    NotEvaluable(String),

    /// The finite-difference oracle hit a non-finite function value.
    #[error("gradient-check oracle failure: {0}")]
    OracleFailure(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

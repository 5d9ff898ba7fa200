//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in the pipeline.
///
/// The variants are grouped so a front end can map them onto coarse exit
/// codes: configuration, data/format, and empty selection/partition.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two operands have incompatible dimensions.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid model input (token ids, sequence length, mismatched stores).
    #[error("input error: {0}")]
    Input(String),

    /// A neuron address that does not exist in the model.
    #[error("address error: {0}")]
    Address(String),

    /// Invalid configuration value (grid, k, tau, set sizes, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed model file. `offset` is the byte offset into `tensors.bin`
    /// (or into the manifest) where the problem was detected.
    #[error("format error at byte {offset} of {}: {message}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// Malformed JSON / JSONL document or a value that fails validation.
    #[error("data error: {0}")]
    Data(String),

    /// Edit plan violates its invariants.
    #[error("plan error: {0}")]
    Plan(String),

    /// A layer-input cache used with a store or scenario it was not built from.
    #[error("stale cache: {0}")]
    Stale(String),

    /// X- or X+ ended up empty.
    #[error("partition error: {0}")]
    Partition(String),

    /// A selector excluded every neuron.
    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("i/o error on {}: {source}", path.display())]
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

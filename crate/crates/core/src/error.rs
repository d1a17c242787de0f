use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("corpus contains no samples")]
    EmptyCorpus,

    #[error("corpus has a single label `{0}`; at least two are required")]
    SingleClass(String),

    #[error("not enough examples for `{label}`: {count} (need at least {required})")]
    InsufficientExamples {
        label: String,
        count: usize,
        required: usize,
    },

    #[error("markup error at character {position}: {message}")]
    Markup { position: usize, message: String },

    #[error("entity spans overlap: ({a_start},{a_end}) and ({b_start},{b_end})")]
    Overlap {
        a_start: usize,
        a_end: usize,
        b_start: usize,
        b_end: usize,
    },

    #[error("invalid span ({start},{end}) for text of length {len}")]
    InvalidSpan { start: usize, end: usize, len: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged: loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("no anchor description for label `{0}`")]
    MissingAnchor(String),

    #[error("labels `{0}` and `{1}` share the same anchor description")]
    AnchorCollision(String, String),

    #[error("covariance matrix is singular even after shrinkage {shrinkage}")]
    SingularCovariance { shrinkage: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("all calibration scores are identical ({0})")]
    DegenerateScores(f64),

    #[error("length mismatch: {gold} gold vs {pred} predicted")]
    LengthMismatch { gold: usize, pred: usize },

    #[error("evaluator `{name}` is not available for {task} corpora")]
    IncompatibleEvaluator { task: String, name: String },

    #[error("not enough classes: {available} available, {required} required")]
    NotEnoughClasses { available: usize, required: usize },

    #[error("no far-OOD pairing configured for dataset `{0}`")]
    UnknownDataset(String),

    #[error("bundle integrity check failed: {0}")]
    Integrity(String),

    #[error("bundle format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("inference failed: {0}")]
    Inference(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn insufficient(label: impl Into<String>, count: usize, required: usize) -> Self {
        Error::InsufficientExamples {
            label: label.into(),
            count,
            required,
        }
    }
}

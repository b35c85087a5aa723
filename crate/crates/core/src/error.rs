use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("case parse error at line {line}: {message}")]
    CaseParse { line: usize, message: String },

    #[error("case validation error: {0}")]
    CaseValidation(String),

    #[error("power flow did not converge after {iterations} iterations (max mismatch {max_mismatch:.3e} p.u.)")]
    PowerFlowDiverged {
        iterations: usize,
        max_mismatch: f64,
    },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("dataset error at row {row}: {message}")]
    DatasetRow { row: usize, message: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("too many failed scenarios: {failed} of {total}")]
    GenerationFailed { failed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite feature value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },

    #[error("feature length mismatch: expected {expected}, got {actual}")]
    FeatureLength { expected: usize, actual: usize },

    #[error("unsupported model format version {found} (supported: {supported})")]
    ModelVersion { found: i64, supported: i64 },

    #[error("model file is truncated")]
    ModelTruncated,

    #[error("model checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ModelChecksum { stored: u32, computed: u32 },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("unknown bus {0}")]
    UnknownBus(u32),

    #[error("{path}: {source}")]
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

use thiserror::Error;

use crate::metadata_kernel::AnnotationSource;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("exam {exam_id}: {kind:?} value {value} is outside its legal range")]
    AnnotationOutOfRange {
        exam_id: String,
        kind: AnnotationSource,
        value: i64,
    },

    #[error("{kind:?} value {value} is outside its legal range")]
    ValueOutOfRange { kind: AnnotationSource, value: i64 },

    #[error("confidence is undefined for an empty vote vector")]
    EmptyVotes,

    #[error("epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),

    #[error("exam {0} has no metadata but was paired with another exam in the kernel")]
    UnlabeledPair(String),

    #[error("degenerate uniformity: every pair carries full kernel weight")]
    DegenerateUniformity,

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("AUC undefined: {positives} positive and {negatives} negative labels")]
    AucUndefined { positives: usize, negatives: usize },

    #[error("average precision undefined: no reference lesions")]
    NoReferenceLesions,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<u64>, message: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line());
        Error::Parse {
            line,
            message: err.to_string(),
        }
    }
}

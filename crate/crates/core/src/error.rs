use thiserror::Error;

/// Errors raised across the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid unfolding mode {0}, expected 1, 2 or 3")]
    InvalidMode(usize),

    #[error("{op}: shape mismatch (expected {expected}, found {found})")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("{0}: input matrix is all zero")]
    ZeroMatrix(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("coding design constraint violated: {0}")]
    DesignConstraint(String),

    #[error("unsupported constellation order {0} (expected a square QAM order)")]
    UnsupportedConstellation(usize),

    #[error("{receiver} not identifiable: needs K >= {required}, have K = {available}")]
    NotIdentifiable {
        receiver: String,
        required: usize,
        available: usize,
    },

    #[error("{what} is rank deficient (rank {rank}, needs {needed})")]
    RankDeficient {
        what: &'static str,
        rank: usize,
        needed: usize,
    },

    #[error("ambiguity anchor is zero, cannot normalize the estimate")]
    ZeroAnchor,

    #[error("singular value decomposition failed in {0}")]
    NoConvergence(&'static str),

    #[error("unknown receiver combination: {0}")]
    UnknownCombination(String),

    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_mismatch(
    op: &'static str,
    expected: impl Into<String>,
    found: impl Into<String>,
) -> Error {
    Error::ShapeMismatch {
        op,
        expected: expected.into(),
        found: found.into(),
    }
}

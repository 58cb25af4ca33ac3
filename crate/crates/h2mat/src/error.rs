use thiserror::Error;

/// Errors shared across the crate.
///
/// Factorization breakdowns carry enough position information to locate the
/// offending pivot or leaf block; structural errors describe which
/// precondition on trees or shapes was violated.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("LR factorization broke down: zero pivot at index {index}")]
    LrBreakdown { index: usize },

    #[error("Cholesky factorization broke down: non-positive pivot {value:.3e} at index {index}{context}")]
    CholeskyBreakdown {
        index: usize,
        value: f64,
        /// Optional cluster path, filled in by the structured factorization.
        context: String,
    },

    #[error("triangular solve hit a zero diagonal entry at index {index}")]
    SingularTriangle { index: usize },

    #[error("SVD failed to converge on a {rows}x{cols} matrix")]
    SvdFailed { rows: usize, cols: usize },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("size guard: refusing to materialize {rows}x{cols} (limit {limit} entries)")]
    SizeGuard {
        rows: usize,
        cols: usize,
        limit: usize,
    },

    #[error("sparse entry ({row}, {col}) falls into an admissible block; refine the block tree or use a dense initializer")]
    EntryInAdmissibleBlock { row: usize, col: usize },

    #[error("empty cluster: {0}")]
    EmptyCluster(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported format version {found}, expected {expected}")]
    FormatVersion { found: u32, expected: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }
}

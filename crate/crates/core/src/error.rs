use thiserror::Error;

pub type Result<T> = std::result::Result<T, GaspError>;

/// Errors raised by the emulator. Variants are grouped into a data/contract
/// class and a numerical class; see [`GaspError::exit_code`].
#[derive(Debug, Error)]
pub enum GaspError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("the model uses an explicit trend matrix; a testing trend matrix must be supplied for prediction")]
    MissingTrend,

    #[error("not enough degrees of freedom: n = {n} observations but q = {q} trend columns (need n > q)")]
    DegreesOfFreedom { n: usize, q: usize },

    #[error("input dimension {dim} has all coordinates equal; its scale constant is zero")]
    ZeroScale { dim: usize },

    #[error("trend matrix is rank deficient; the generalized least squares system is singular")]
    RankDeficientTrend,

    #[error(
        "correlation matrix is numerically singular at beta = {beta:?}, eta = {eta:e}; \
         consider estimating a nugget (--nugget-est) or fixing a small one"
    )]
    NearSingular { beta: Vec<f64>, eta: f64 },

    #[error("response{} has zero residual variance after removing the trend", column_suffix(*column))]
    DegenerateResponse { column: Option<usize> },

    #[error("all optimizer starts failed:\n{0}")]
    FitFailure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn column_suffix(column: Option<usize>) -> String {
    match column {
        Some(c) => format!(" column {}", c + 1),
        None => String::new(),
    }
}

impl GaspError {
    /// Process exit code class: 3 for data/contract errors, 4 for numerical
    /// failures. (2 is reserved for usage errors reported by the argument parser.)
    pub fn exit_code(&self) -> i32 {
        match self {
            GaspError::NearSingular { .. }
            | GaspError::FitFailure(_)
            | GaspError::Numerical(_)
            | GaspError::RankDeficientTrend => 4,
            _ => 3,
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("singular nuisance block `{block}` in Schur reduction")]
    SingularNuisance { block: String },

    #[error("unknown parameter block `{0}`")]
    UnknownBlock(String),

    #[error("channel decomposition failed: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    DecompositionFailed { residual: f64, tol: f64 },

    #[error("degenerate adjustment: {0}")]
    DegenerateAdjustment(String),

    #[error("verdict mismatch: {0}")]
    VerdictMismatch(String),

    #[error("channel parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

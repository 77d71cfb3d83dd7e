use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate prior region: no admissible draw after {0} attempts")]
    DegeneratePrior(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degenerate NL posterior: acceptance rate {0:.4} after adaptation")]
    DegenerateNlPosterior(f64),

    #[error("particle degeneracy: effective sample size {ess:.1} below {min:.1}")]
    ParticleDegeneracy { ess: f64, min: f64 },

    #[error("invalid gk parameter region: quantile derivative {0} at z = {1}")]
    InvalidGkRegion(f64, f64),

    #[error("tempering ladder exceeded {0} stages")]
    TemperingStalled(usize),

    #[error("prior truncation exhausted: {accepted} of {wanted} draws inside support after {attempts} attempts")]
    TruncationExhausted {
        accepted: usize,
        wanted: usize,
        attempts: usize,
    },

    #[error("unknown identifier {kind}: {value}")]
    UnknownId { kind: &'static str, value: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainingDiverged { epoch: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    #[error("unsupported dimension {0} (expected 1 or 2)")]
    Dimension(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("model is not Tonelli: {0}")]
    NotTonelli(String),

    #[error("Legendre transform: Newton did not converge after {iterations} iterations (|grad - p| = {residual:e})")]
    NewtonNonConvergence { iterations: usize, residual: f64 },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("non-finite value at node {node} during {stage}")]
    NonFinite { node: usize, stage: &'static str },

    #[error("{stage} did not converge within {iterations} iterations (last increment {increment:e})")]
    NotConverged {
        stage: &'static str,
        iterations: usize,
        increment: f64,
    },

    #[error("ground state envelope exceeded a-priori bound {bound} (max {value}); reduce dt")]
    EnvelopeBlowUp { bound: f64, value: f64 },

    #[error("grid or discount mismatch between fields: {0}")]
    FieldMismatch(String),

    #[error("invalid horizon: {0}")]
    Horizon(String),

    #[error("missing barrier table for node {0}")]
    MissingBarrier(usize),

    #[error("linear program size guard exceeded: {0}")]
    LpTooLarge(String),

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("simplex did not terminate within {0} pivots")]
    LpIterationLimit(usize),

    #[error("bad field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite angle: alpha={alpha}, beta={beta}")]
    NonFiniteAngle { alpha: f64, beta: f64 },

    #[error("visibility must lie in [0, 1], got {0}")]
    InvalidVisibility(f64),

    #[error("entanglement angle theta must lie in (0, pi/2), got {0}")]
    InvalidTheta(f64),

    #[error("invalid probability quad: {0}")]
    InvalidQuad(String),

    #[error("invalid coefficient vector: {0}")]
    InvalidCoefficients(String),

    #[error("the hidden-variable model has no quantum state; use lhv_correlation or lhv_probabilities")]
    LhvNotSupported,

    #[error("invalid covariance matrix: {0}")]
    InvalidCovariance(String),

    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),

    #[error("record has zero total counts")]
    ZeroTotal,

    #[error("impossible outcome {outcome} observed {count} times at alpha={alpha_deg} deg, beta={beta_deg} deg (model probability 0)")]
    ImpossibleOutcome {
        outcome: &'static str,
        count: u64,
        alpha_deg: f64,
        beta_deg: f64,
    },

    #[error("invalid fit family: {0}")]
    InvalidFitFamily(String),

    #[error("not enough degrees of freedom: {pairs} setting pairs, {free} free parameters")]
    NoDegreesOfFreedom { pairs: usize, free: usize },

    #[error("invalid optimizer input: {0}")]
    InvalidOptimizerInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("duplicate setting pair ({alpha_deg} deg, {beta_deg} deg) at line {line}")]
    DuplicateSetting {
        line: usize,
        alpha_deg: f64,
        beta_deg: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

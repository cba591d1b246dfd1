use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid offspring law: {0}")]
    InvalidLaw(String),

    #[error("invalid environment model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("environment too short: need {needed} generations, have {have}")]
    EnvTooShort { needed: usize, have: usize },

    #[error("shift offset {offset} out of range for sequence of length {len}")]
    ShiftOutOfRange { offset: usize, len: usize },

    #[error(
        "population cap exceeded at generation {generation}: total {attempted} > cap {cap}"
    )]
    PopulationCap {
        generation: usize,
        attempted: u128,
        cap: u64,
    },

    #[error("trajectory is capped; cannot continue it")]
    CappedTrajectory,

    #[error("probability generating function diverges at argument {arg}")]
    PgfDiverges { arg: f64 },

    #[error("quenched MGF diverges at t = {t} (argument left the convergence radius)")]
    MgfDiverges { t: f64 },

    #[error("variance series suspected divergent after {terms} terms")]
    SeriesDivergence { terms: usize },

    #[error(
        "degenerate fluctuation scale: delta_inf(T^n xi) = 0; \
         theorem hypothesis violated: requires p_i(xi_0) < 1 a.s. for all i"
    )]
    DegenerateDelta,

    #[error("theorem hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error(
        "estimator noise invalidates campaign: residual variance bound {bound:e} \
         exceeds 1% of smallest measured fluctuation scale {scale:e}"
    )]
    EstimatorNoise { bound: f64, scale: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate coordinate point: {0}")]
    DegeneratePoint(String),

    #[error("no sign change of the trapped-set polynomial on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("quadrature tolerance not met after {panels} panels (estimate {estimate:e}, error {error:e})")]
    ToleranceNotMet { panels: usize, estimate: f64, error: f64 },

    #[error("CFL violation: {0}")]
    Cfl(String),

    #[error("evolution unstable at t = {t}: max |psi| = {max_abs:e}")]
    Instability { t: f64, max_abs: f64 },

    #[error("perturbation window violates support constraint: {0}")]
    WindowSupport(String),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("series changes sign inside the fit window near t = {0}")]
    SignChange(f64),

    #[error("insufficient samples: need {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("invalid setup: {0}")]
    InvalidSetup(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },
}

impl Error {
    /// Process exit code used by the runner binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidSetup(_) | Error::Json(_) | Error::Io(_) => 2,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    /// Attribute the error to a pipeline stage.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector field {mode} does not vanish at the origin (|F(0)| = {norm:e})")]
    OriginNotEquilibrium { mode: usize, norm: f64 },

    #[error("matrices are not block lower triangular (upper-right residual {residual:e})")]
    NotTriangular { residual: f64 },

    #[error("system declares no invariant face split")]
    MissingSplit,

    #[error("initial state is not on the invariant face")]
    NotOnFace,

    #[error("adaptive step underflow at t = {t} (h = {step:e})")]
    StepUnderflow { t: f64, step: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("rate matrix is reducible")]
    Reducible,

    #[error("invalid rate matrix: {0}")]
    InvalidRateMatrix(String),

    #[error("total switching rate {total} exceeds declared bound {bound} at t = {t}")]
    RateBoundViolated { total: f64, bound: f64, t: f64 },

    #[error("matrix for mode {mode} is not Metzler (negative off-diagonal entry)")]
    NotMetzler { mode: usize },

    #[error("no samples in the analysis window")]
    EmptyWindow,

    #[error("bracket rank {rank} still below full rank after depth {depth}")]
    DepthExceeded { rank: usize, depth: usize },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Failures of the numerics themselves, as opposed to bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::StepUnderflow { .. } | Error::NonFiniteState { .. } | Error::RateBoundViolated { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

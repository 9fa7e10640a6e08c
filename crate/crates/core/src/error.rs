use thiserror::Error;

use crate::noise::NoiseMoments;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("noise moments not realizable as a classical Gaussian at cell {index}: {moments:?}")]
    NonRealizableNoise { index: usize, moments: NoiseMoments },

    #[error("non-finite field value at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("negative population {value:e} at cell {index} (scale {scale:e})")]
    NegativePopulation { index: usize, value: f64, scale: f64 },

    #[error("step size collapsed below {dt:e} at t = {time}")]
    StepRejected { dt: f64, time: f64 },

    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("profile flattened into a homogeneous state (peak/background = {ratio})")]
    EscapedToHomogeneous { ratio: f64 },

    #[error("eigensolver stagnated (residual {residual:e})")]
    EigenStagnation { residual: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for configuration problems, 3 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::InvalidParams(_)
            | Error::Format(_)
            | Error::Config(_)
            | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

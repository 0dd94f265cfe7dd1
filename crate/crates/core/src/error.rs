use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(ValidationReport),

    #[error("episode did not reach the terminal state within {max_steps} steps")]
    EpisodeOverflow { max_steps: usize },

    #[error("invalid state {state}: {reason}")]
    InvalidState { state: usize, reason: &'static str },

    #[error("invalid action {action} at state {state}")]
    InvalidAction { state: usize, action: usize },

    #[error("invalid policy parameters: {0}")]
    InvalidPolicy(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid step-size schedule: {0}")]
    InvalidSchedule(String),

    #[error("empty sample batch")]
    EmptyBatch,

    #[error("non-finite value in {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: u64 },

    #[error("residual probability mass {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualMassTooLarge { residual: f64, tolerance: f64 },

    #[error("residual probability mass {residual:e} too large for tail level alpha = {alpha}")]
    TailGuard { residual: f64, alpha: f64 },

    #[error("density vanishes at {point:?}; importance weights are undefined")]
    DensityVanishes { point: Vec<f64> },

    #[error("unknown {kind} `{name}`; valid names: {valid}")]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "invalid_model",
            Error::EpisodeOverflow { .. } => "episode_overflow",
            Error::InvalidState { .. } => "invalid_state",
            Error::InvalidAction { .. } => "invalid_action",
            Error::InvalidPolicy(_) => "invalid_policy",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidSchedule(_) => "invalid_schedule",
            Error::EmptyBatch => "empty_batch",
            Error::NonFinite { .. } => "non_finite",
            Error::ResidualMassTooLarge { .. } => "residual_mass_too_large",
            Error::TailGuard { .. } => "tail_guard",
            Error::DensityVanishes { .. } => "density_vanishes",
            Error::UnknownName { .. } => "unknown_name",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}

//! CVaR-constrained policy-gradient optimization for tabular stochastic
//! shortest path (SSP) problems.
//!
//! The crate is organized around the pieces of a risk-constrained
//! policy-gradient loop:
//!
//! - [`model`]: tabular SSP models, validation, and episode simulation.
//! - [`envs`]: built-in environments, looked up by name.
//! - [`policy`]: softmax policies and their score functions.
//! - [`risk`]: Rockafellar–Uryasev VaR/CVaR machinery, online and mini-batch.
//! - [`schedule`]: step-size schedules and mini-batch plans.
//! - [`optimizer`]: gradient estimators, Lagrangian updates, and the two
//!   top-level algorithms, registered by name in an [`AlgorithmRegistry`].
//! - [`importance_sampling`]: translation-based variance reduction for the
//!   VaR/CVaR recursions.
//! - [`oracle`]: brute-force ground truth on enumeration-scale models.

pub mod envs;
pub mod error;
pub mod importance_sampling;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod policy;
pub mod risk;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
pub use model::{simulate_episode, validate_model, EpisodeTrace, SspModel, ValidationReport};
pub use optimizer::{Algorithm, AlgorithmRegistry, RunResult, RunSettings};
pub use policy::PolicyParams;
pub use risk::{ru_value, RiskConfig, RiskEstimatorState};
pub use schedule::{MiniBatchPlan, StepSizeSchedule};

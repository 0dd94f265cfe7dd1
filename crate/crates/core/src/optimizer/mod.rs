//! Lagrangian policy-gradient optimization under a CVaR constraint.
//!
//! Both algorithms minimize `G^θ + λ (CVaR_α(C^θ) − K_α)` by descent in `θ`
//! and projected ascent in `λ ∈ [0, λ_max]`. They differ in how VaR, CVaR,
//! and the gradients are estimated:
//!
//! - [`PgCvarSa`] (`"sa"`): one episode per iteration, VaR/CVaR tracked by
//!   Robbins–Monro recursions on faster timescales than `θ` and `λ`;
//! - [`PgCvarMb`] (`"mb"`): a growing mini-batch per iteration, VaR/CVaR and
//!   gradients from batch statistics.
//!
//! Algorithms implement [`Algorithm`] and are looked up by name in an
//! [`AlgorithmRegistry`].

mod mb;
mod sa;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance_sampling::SspIsSettings;
use crate::model::{EpisodeTrace, SspModel, DEFAULT_MAX_STEPS};
use crate::policy::PolicyParams;
use crate::risk::{BatchVarMode, RiskConfig, RiskEstimatorState};
use crate::schedule::{MiniBatchPlan, StepSizeSchedule};

pub use mb::{run_pg_cvar_mb, PgCvarMb};
pub use sa::{run_pg_cvar_sa, PgCvarSa};

pub const DEFAULT_LAMBDA_MAX: f64 = 1000.0;

/// Which cost level multiplies the score in the gradient estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Exponentially smoothed totals `Ḡ_n`, `C̃_n`.
    PaperSmoothed,
    /// The episode's own totals: the unbiased likelihood-ratio estimators.
    #[default]
    PerEpisode,
}

impl GradientMode {
    pub const NAMES: [&'static str; 2] = ["paper-smoothed", "per-episode"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "paper-smoothed" => Ok(Self::PaperSmoothed),
            "per-episode" => Ok(Self::PerEpisode),
            _ => Err(unknown("gradient mode", name, &Self::NAMES)),
        }
    }
}

/// Scaling of the CVaR gradient estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvarScaling {
    /// `(C − ξ) z 1{C ≥ ξ}` as printed in the online algorithm.
    Conditional,
    /// Multiplied by `(1 − α)⁻¹`, an unbiased estimate of `∇_θ CVaR`.
    #[default]
    Unconditional,
}

impl CvarScaling {
    pub const NAMES: [&'static str; 2] = ["conditional", "unconditional"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "conditional" => Ok(Self::Conditional),
            "unconditional" => Ok(Self::Unconditional),
            _ => Err(unknown("gradient scaling", name, &Self::NAMES)),
        }
    }

    fn factor(self, alpha: f64) -> f64 {
        match self {
            CvarScaling::Conditional => 1.0,
            CvarScaling::Unconditional => 1.0 / (1.0 - alpha),
        }
    }
}

/// How the mini-batch algorithm combines per-episode scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchAggregation {
    /// Batch mean of per-episode estimates, e.g. `(1/m) Σ_j G_j z_j`.
    #[default]
    PerEpisodeMean,
    /// Product of batch means, e.g. `Ḡ z̄`.
    BatchMeanScore,
}

impl BatchAggregation {
    pub const NAMES: [&'static str; 2] = ["per-episode-mean", "batch-mean-score"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "per-episode-mean" => Ok(Self::PerEpisodeMean),
            "batch-mean-score" => Ok(Self::BatchMeanScore),
            _ => Err(unknown("batch aggregation", name, &Self::NAMES)),
        }
    }
}

fn unknown(kind: &'static str, name: &str, valid: &[&str]) -> Error {
    Error::UnknownName { kind, name: name.into(), valid: valid.join(", ") }
}

/// Iterates shared by both algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub theta: PolicyParams,
    pub lambda: f64,
    pub lambda_max: f64,
    pub risk: RiskEstimatorState,
    /// Smoothed objective total `Ḡ_n`.
    pub g_bar: f64,
    /// Smoothed constraint total `C̃_n`.
    pub c_tilde: f64,
    pub n: u64,
}

impl OptimizerState {
    pub fn new(theta: PolicyParams, lambda0: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_max >= 0.0 && lambda_max.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda_max must be non-negative, got {lambda_max}")));
        }
        if !(0.0..=lambda_max).contains(&lambda0) {
            return Err(Error::InvalidConfig(format!("lambda0 must lie in [0, {lambda_max}], got {lambda0}")));
        }
        Ok(Self {
            theta,
            lambda: lambda0,
            lambda_max,
            risk: RiskEstimatorState::default(),
            g_bar: 0.0,
            c_tilde: 0.0,
            n: 0,
        })
    }
}

fn scaled(z: &[f64], factor: f64) -> Vec<f64> {
    z.iter().map(|v| factor * v).collect()
}

/// Estimate of `∇_θ G^θ(s⁰)` from one episode.
///
/// Always advances `Ḡ_n = Ḡ_{n−1} + γ (G_n − Ḡ_{n−1})`; in
/// [`GradientMode::PaperSmoothed`] the estimate is `Ḡ_n z_n`, otherwise
/// `G_n z_n`.
pub fn objective_gradient_estimate(
    trace: &EpisodeTrace,
    state: &mut OptimizerState,
    mode: GradientMode,
    gamma: f64,
) -> Vec<f64> {
    state.g_bar += gamma * (trace.total_g - state.g_bar);
    let level = match mode {
        GradientMode::PaperSmoothed => state.g_bar,
        GradientMode::PerEpisode => trace.total_g,
    };
    scaled(&trace.score_sum, level)
}

/// Estimate of `∇_θ CVaR_α(C^θ(s⁰))` from one episode, using the current VaR
/// iterate `ξ_n = state.risk.xi`.
///
/// Always advances `C̃_n`. The estimate is `(level − ξ_n) z_n 1{C_n ≥ ξ_n}`
/// times the scaling factor, where `level` is `C̃_n` or `C_n` by mode.
pub fn cvar_gradient_estimate(
    trace: &EpisodeTrace,
    state: &mut OptimizerState,
    mode: GradientMode,
    scaling: CvarScaling,
    gamma: f64,
    alpha: f64,
) -> Vec<f64> {
    state.c_tilde += gamma * (trace.total_c - state.c_tilde);
    let xi = state.risk.xi;
    if trace.total_c < xi {
        return vec![0.0; trace.score_sum.len()];
    }
    let level = match mode {
        GradientMode::PaperSmoothed => state.c_tilde,
        GradientMode::PerEpisode => trace.total_c,
    };
    scaled(&trace.score_sum, (level - xi) * scaling.factor(alpha))
}

/// `θ_n = θ_{n−1} − γ (∂G + λ_{n−1} ∂C)`.
pub fn policy_update(state: &mut OptimizerState, d_g: &[f64], d_c: &[f64], gamma: f64) -> Result<()> {
    let lambda = state.lambda;
    let next: Vec<f64> = state
        .theta
        .theta()
        .iter()
        .zip(d_g.iter().zip(d_c))
        .map(|(t, (g, c))| t - gamma * (g + lambda * c))
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "policy parameters", iteration: state.n });
    }
    state.theta.theta_mut().copy_from_slice(&next);
    Ok(())
}

/// `λ_n = Γ_λ(λ_{n−1} + β (ψ − K_α))`, projected onto `[0, λ_max]`.
pub fn lambda_update(state: &mut OptimizerState, psi: f64, beta: f64, cfg: &RiskConfig) -> f64 {
    state.lambda = (state.lambda + beta * (psi - cfg.k_alpha)).clamp(0.0, state.lambda_max);
    state.lambda
}

/// Everything a run needs besides the model and the initial policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub risk: RiskConfig,
    pub schedule: StepSizeSchedule,
    pub batch: MiniBatchPlan,
    pub iterations: u64,
    pub seed: u64,
    pub grad_mode: GradientMode,
    pub grad_scaling: CvarScaling,
    pub batch_var_mode: BatchVarMode,
    pub batch_aggregation: BatchAggregation,
    pub lambda0: f64,
    pub lambda_max: f64,
    pub max_steps: usize,
    /// Worker threads for mini-batch simulation; results do not depend on it.
    pub workers: usize,
    /// Importance-sampled VaR/CVaR tracking (online algorithm only).
    pub importance: Option<SspIsSettings>,
    /// Keep the per-iteration trace in the result.
    pub record_trace: bool,
}

impl RunSettings {
    pub fn new(risk: RiskConfig, iterations: u64, seed: u64) -> Self {
        Self {
            risk,
            schedule: StepSizeSchedule::default(),
            batch: MiniBatchPlan::default(),
            iterations,
            seed,
            grad_mode: GradientMode::default(),
            grad_scaling: CvarScaling::default(),
            batch_var_mode: BatchVarMode::default(),
            batch_aggregation: BatchAggregation::default(),
            lambda0: 0.0,
            lambda_max: DEFAULT_LAMBDA_MAX,
            max_steps: DEFAULT_MAX_STEPS,
            workers: 1,
            importance: None,
            record_trace: true,
        }
    }
}

/// One row of the run trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub n: u64,
    pub xi: f64,
    pub psi: f64,
    pub lambda: f64,
    /// `Ḡ_n` (online) or the batch mean of `G` (mini-batch).
    pub g_bar: f64,
    /// `C̃_n` (online) or the batch mean of `C` (mini-batch).
    pub c_mean: f64,
    pub theta_norm: f64,
    pub tau_mean: f64,
    /// Importance-sampling diagnostics, when enabled.
    pub is: Option<IsRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsRecord {
    pub eta_norm: f64,
    pub mu_norm: f64,
    pub weight_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Final iterate `θ_M`.
    pub theta: Vec<f64>,
    /// Reported policy: `θ_M` online, the weighted average `θ̄_M` mini-batch.
    pub theta_output: Vec<f64>,
    pub lambda: f64,
    pub xi: f64,
    pub psi: f64,
    pub episodes: u64,
    pub trace: Vec<IterationRecord>,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn check_finite(values: &[(&'static str, f64)], iteration: u64) -> Result<()> {
    for &(what, v) in values {
        if !v.is_finite() {
            return Err(Error::NonFinite { what, iteration });
        }
    }
    Ok(())
}

/// A policy-optimization algorithm selectable by name.
pub trait Algorithm: Send + Sync {
    /// Registry key, e.g. `"sa"`.
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    fn run(&self, model: &SspModel, policy0: &PolicyParams, settings: &RunSettings) -> Result<RunResult>;
}

/// Name-keyed collection of algorithms, in registration order.
pub struct AlgorithmRegistry {
    algorithms: Vec<Box<dyn Algorithm>>,
}

impl AlgorithmRegistry {
    pub fn empty() -> Self {
        Self { algorithms: Vec::new() }
    }

    /// Registry holding `"sa"` and `"mb"`.
    pub fn with_builtins() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(PgCvarSa));
        registry.register(Box::new(PgCvarMb));
        registry
    }

    /// Add an algorithm, replacing any previous one with the same name.
    pub fn register(&mut self, algorithm: Box<dyn Algorithm>) {
        self.algorithms.retain(|a| a.name() != algorithm.name());
        self.algorithms.push(algorithm);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Algorithm> {
        self.algorithms
            .iter()
            .find(|a| a.name() == name)
            .map(|a| a.as_ref())
            .ok_or_else(|| Error::UnknownName {
                kind: "algorithm",
                name: name.into(),
                valid: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.algorithms.iter().map(|a| a.name()).collect()
    }
}

impl Default for AlgorithmRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

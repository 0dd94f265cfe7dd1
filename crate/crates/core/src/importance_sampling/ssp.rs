//! Importance-sampled VaR/CVaR tracking for SSP episodes.
//!
//! The trajectory density is replaced by the policy likelihood
//! `p̃(D) = Π_m π_θ(a_m|s_m)`. A translation `t` means sampling under
//! `π_{θ+t}` and weighting by `p̃_θ(D) / p̃_{θ+t}(D)`. Translations are adapted
//! by descending the estimator second moments with score-function gradients.

use super::{IsConfig, IsMode, IsState, SspIsSettings};
use crate::error::{Error, Result};
use crate::model::{simulate_episode, EpisodeTrace, SspModel};
use crate::policy::PolicyParams;
use crate::risk::RiskConfig;
use crate::rng::episode_stream;
use crate::schedule::PowerStep;

/// `Π_m π_θ(a_m|s_m) / π_{θ+t}(a_m|s_m)` for an episode drawn under `π_{θ+t}`.
pub fn ssp_is_weight(episode: &EpisodeTrace, theta: &PolicyParams, translation: &[f64]) -> Result<f64> {
    if translation.len() != theta.dim() {
        return Err(Error::InvalidConfig(format!(
            "translation has length {}, expected {}",
            translation.len(),
            theta.dim()
        )));
    }
    if translation.iter().all(|&t| t == 0.0) {
        return Ok(1.0);
    }
    let shifted = theta.translated(translation)?;
    let log_w = theta.log_likelihood(&episode.states, &episode.actions)
        - shifted.log_likelihood(&episode.states, &episode.actions);
    Ok(log_w.exp())
}

/// Diagnostics of one SSP step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SspStepInfo {
    pub xi_increment: f64,
    pub weight_eta: f64,
    pub weight_mu: f64,
    /// Episodes simulated beyond the base episode.
    pub extra_episodes: u32,
}

/// Stateful estimator for a sequence of (possibly changing) policies.
#[derive(Debug, Clone, PartialEq)]
pub struct SspIsEstimator {
    pub state: IsState,
    pub config: IsConfig,
    pub mode: IsMode,
}

impl SspIsEstimator {
    pub fn new(settings: &SspIsSettings, dim: usize) -> Result<Self> {
        settings.config.validate()?;
        let t0 = match (&settings.initial_translation, settings.mode) {
            (_, IsMode::Off) | (None, _) => vec![0.0; dim],
            (Some(t), _) if t.len() == dim => t.clone(),
            (Some(t), _) => {
                return Err(Error::InvalidConfig(format!("translation has length {}, expected {dim}", t.len())));
            }
        };
        Ok(Self { state: IsState::new(t0.clone(), t0), config: settings.config, mode: settings.mode })
    }

    /// One step at policy `theta`.
    ///
    /// `base` is an episode under `π_θ`; it is reused for any zero
    /// translation, and an `η` episode is reused when `μ = η`. Other
    /// episodes come from `draw(policy, slot)` with slots 1, 2, … in order of
    /// need. With both translations zero this is the plain recursion on
    /// `base.total_c`, bit for bit.
    pub fn step(
        &mut self,
        theta: &PolicyParams,
        base: &EpisodeTrace,
        draw: &mut dyn FnMut(&PolicyParams, u64) -> Result<EpisodeTrace>,
        zeta1: f64,
        zeta2: f64,
        alpha: f64,
    ) -> Result<SspStepInfo> {
        let cfg = self.config;
        let initializing = self.state.n == 0;
        let (xi, psi) = if initializing {
            self.state.initialize(base.total_c);
            (base.total_c, base.total_c)
        } else {
            (self.state.xi, self.state.psi)
        };
        let eta = self.state.eta.clone();
        let mu = self.state.mu.clone();

        let mut extra: Vec<EpisodeTrace> = Vec::new();
        let is_zero = |t: &[f64]| t.iter().all(|&v| v == 0.0);
        let eta_ep: Option<usize> = if is_zero(&eta) {
            None
        } else {
            extra.push(draw(&theta.translated(&eta)?, 1)?);
            Some(0)
        };
        let mu_ep: Option<usize> = if is_zero(&mu) {
            None
        } else if mu == eta {
            eta_ep
        } else {
            extra.push(draw(&theta.translated(&mu)?, extra.len() as u64 + 1)?);
            Some(extra.len() - 1)
        };
        let ep_eta = eta_ep.map_or(base, |i| &extra[i]);
        let ep_mu = mu_ep.map_or(base, |i| &extra[i]);
        let w_eta = ssp_is_weight(ep_eta, theta, &eta)?;
        let w_mu = ssp_is_weight(ep_mu, theta, &mu)?;

        let hit = if ep_eta.total_c >= xi { w_eta } else { 0.0 };
        let new_xi = xi - zeta1 * (cfg.damping(&eta, 1.0) * (1.0 - hit / (1.0 - alpha)));
        let v = xi + (ep_mu.total_c - xi).max(0.0) * w_mu / (1.0 - alpha);
        let new_psi = psi - zeta2 * (psi - v);

        if self.mode == IsMode::Adaptive && !initializing {
            if ep_eta.total_c >= xi {
                let step = zeta1 * cfg.damping(&eta, 2.0) * w_eta * w_eta;
                for (e, z) in self.state.eta.iter_mut().zip(&ep_eta.score_sum) {
                    *e += step * z;
                }
            }
            let h = (ep_mu.total_c - xi).max(0.0);
            if h > 0.0 {
                let step = zeta2 * cfg.cvar_normalizer(&mu, xi) * h * h * w_mu * w_mu;
                for (m, z) in self.state.mu.iter_mut().zip(&ep_mu.score_sum) {
                    *m += step * z;
                }
            }
        }

        if (base.total_c - xi).max(0.0) > cfg.growth.eval(base.total_c) {
            self.state.growth_violations += 1;
        }
        self.state.xi = new_xi;
        self.state.psi = new_psi;
        self.state.n += 1;
        for (what, v) in [("VaR iterate", new_xi), ("CVaR iterate", new_psi)] {
            if !v.is_finite() {
                return Err(Error::NonFinite { what, iteration: self.state.n });
            }
        }
        if self.state.eta.iter().chain(&self.state.mu).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "translations", iteration: self.state.n });
        }
        Ok(SspStepInfo {
            xi_increment: new_xi - xi,
            weight_eta: w_eta,
            weight_mu: w_mu,
            extra_episodes: extra.len() as u32,
        })
    }
}

/// Result of [`ssp_is_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SspIsOutcome {
    pub state: IsState,
    /// `ξ_{n+1} − ξ_n` for every step.
    pub xi_increments: Vec<f64>,
    pub episodes: u64,
}

/// Run the recursions at a fixed policy. Iteration `n` draws its base
/// episode from stream `(seed, n, 0)` and runs at the boosted level.
#[allow(clippy::too_many_arguments)]
pub fn ssp_is_estimate(
    model: &SspModel,
    theta: &PolicyParams,
    cfg: &RiskConfig,
    settings: &SspIsSettings,
    steps: (PowerStep, PowerStep),
    iterations: u64,
    seed: u64,
    max_steps: usize,
) -> Result<SspIsOutcome> {
    let mut est = SspIsEstimator::new(settings, theta.dim())?;
    let mut increments = Vec::with_capacity(iterations as usize);
    let mut episodes = 0u64;
    for n in 1..=iterations {
        let base = simulate_episode(model, theta, &mut episode_stream(seed, n, 0), max_steps)?;
        let mut draw = |p: &PolicyParams, slot: u64| simulate_episode(model, p, &mut episode_stream(seed, n, slot), max_steps);
        let level = settings.config.level(cfg.alpha, n);
        let info = est.step(theta, &base, &mut draw, steps.0.at(n), steps.1.at(n), level)?;
        episodes += 1 + u64::from(info.extra_episodes);
        increments.push(info.xi_increment);
    }
    Ok(SspIsOutcome { state: est.state, xi_increments: increments, episodes })
}

//! Translation-based importance sampling for the VaR/CVaR recursions.
//!
//! Samples are drawn from a translated distribution and reweighted by a
//! density ratio so that tail events are hit more often. Two settings are
//! provided:
//!
//! - [`continuous`]: random variables with a known log-concave density,
//!   where translations act on the sample itself and the translation
//!   parameters are adapted with the double-translation gradient;
//! - [`ssp`]: SSP episodes, where the policy likelihood stands in for the
//!   trajectory density and translations act on the policy parameters.

pub mod continuous;
pub mod density;
pub mod ssp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use continuous::{continuous_is_step, double_translation_kernel, estimate_continuous};
pub use density::{Density, DiagonalGaussian};
pub use ssp::{SspStepInfo, ssp_is_estimate, ssp_is_weight, SspIsEstimator, SspIsOutcome};

/// Growth-control function `W` bounding the integrand `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthFunction {
    /// `W(x) = 1 + |x|`.
    #[default]
    OnePlusAbs,
}

impl GrowthFunction {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            GrowthFunction::OnePlusAbs => 1.0 + x.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsConfig {
    /// Damping rate `ρ > 0`.
    pub rho: f64,
    /// Damping exponent `b ∈ [1, 2]`.
    pub b: f64,
    pub growth: GrowthFunction,
    /// Growth exponent `c ≥ 1` in the CVaR-translation normalizer.
    pub growth_exponent: f64,
    /// Level continuation for extreme `α`; `None` runs at `α` throughout.
    #[serde(default)]
    pub boost: Option<AlphaBoost>,
}

/// Warm-up during which the recursions run at a level `α_n` that moves
/// from `start_alpha` to the target `α`, geometrically in `1 − α_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBoost {
    pub start_alpha: f64,
    /// Iterations until `α_n = α`.
    pub warmup: u64,
}

impl AlphaBoost {
    /// `1 − α_n = (1 − α′)^{1 − n/N} (1 − α)^{n/N}` for `n < N`, else `α`.
    pub fn level(&self, alpha: f64, n: u64) -> f64 {
        if n >= self.warmup || self.start_alpha >= alpha {
            return alpha;
        }
        let t = n as f64 / self.warmup as f64;
        1.0 - (1.0 - self.start_alpha).powf(1.0 - t) * (1.0 - alpha).powf(t)
    }
}

impl Default for IsConfig {
    fn default() -> Self {
        Self { rho: 1.0, b: 2.0, growth: GrowthFunction::OnePlusAbs, growth_exponent: 1.0, boost: None }
    }
}

impl IsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig(format!("rho must be positive, got {}", self.rho)));
        }
        if !(1.0..=2.0).contains(&self.b) {
            return Err(Error::InvalidConfig(format!("b must lie in [1, 2], got {}", self.b)));
        }
        if !(self.growth_exponent >= 1.0 && self.growth_exponent.is_finite()) {
            return Err(Error::InvalidConfig(format!("growth exponent must be at least 1, got {}", self.growth_exponent)));
        }
        if let Some(boost) = self.boost {
            if !(boost.start_alpha > 0.0 && boost.start_alpha < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "boost start alpha must lie in (0, 1), got {}",
                    boost.start_alpha
                )));
            }
        }
        Ok(())
    }

    /// Level used at iteration `n` for target `alpha`.
    pub fn level(&self, alpha: f64, n: u64) -> f64 {
        self.boost.map_or(alpha, |b| b.level(alpha, n))
    }

    /// `e^{−k ρ |t|^b}`.
    pub fn damping(&self, translation: &[f64], k: f64) -> f64 {
        (-k * self.rho * norm(translation).powf(self.b)).exp()
    }

    /// `e^{−2ρ|μ|^b} / (1 + W(|μ|)^{2c} + ξ²)`.
    pub fn cvar_normalizer(&self, mu: &[f64], xi: f64) -> f64 {
        let w = self.growth.eval(norm(mu));
        self.damping(mu, 2.0) / (1.0 + w.powf(2.0 * self.growth_exponent) + xi * xi)
    }
}

/// Whether translations are used and adapted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsMode {
    /// Zero translations: the plain recursions.
    #[default]
    Off,
    /// Translations held at their initial values.
    Fixed,
    /// Translations adapted by stochastic gradient on the variance objectives.
    Adaptive,
}

impl IsMode {
    pub const NAMES: [&'static str; 3] = ["off", "fixed", "adaptive"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "off" => Ok(Self::Off),
            "fixed" => Ok(Self::Fixed),
            "adaptive" => Ok(Self::Adaptive),
            _ => Err(Error::UnknownName {
                kind: "importance-sampling mode",
                name: name.into(),
                valid: Self::NAMES.join(", "),
            }),
        }
    }
}

/// Importance-sampling settings for SSP runs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SspIsSettings {
    pub mode: IsMode,
    pub config: IsConfig,
    /// Initial `η₀ = μ₀` in policy-parameter space; zeros when absent.
    #[serde(default)]
    pub initial_translation: Option<Vec<f64>>,
}

/// VaR/CVaR iterates with their translation parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsState {
    pub xi: f64,
    pub psi: f64,
    /// Translation for the VaR recursion.
    pub eta: Vec<f64>,
    /// Translation for the CVaR recursion.
    pub mu: Vec<f64>,
    pub n: u64,
    /// Samples where `|H(x)| ≤ W(x)` failed.
    pub growth_violations: u64,
}

impl IsState {
    pub fn new(eta: Vec<f64>, mu: Vec<f64>) -> Self {
        Self { xi: 0.0, psi: 0.0, eta, mu, n: 0, growth_violations: 0 }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![0.0; dim])
    }

    /// Seed `ξ₀ = ψ₀` from the first sample.
    fn initialize(&mut self, first: f64) {
        if self.n == 0 {
            self.xi = first;
            self.psi = first;
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

//! Rockafellar–Uryasev VaR/CVaR machinery.
//!
//! For a cost `X` and level `α`, `v(ξ, X) = ξ + (X − ξ)₊ / (1 − α)`. The
//! minimizers of `V(ξ) = E[v(ξ, X)]` are the VaR and the minimum value is the
//! CVaR. That minimum is the CVaR used everywhere in this crate, including on
//! atomic distributions where it differs from `E[X | X ≥ VaR]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    /// Confidence level, strictly inside (0, 1).
    pub alpha: f64,
    /// CVaR bound `K_α`.
    pub k_alpha: f64,
}

impl RiskConfig {
    pub fn new(alpha: f64, k_alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !k_alpha.is_finite() {
            return Err(Error::InvalidConfig("k_alpha must be finite".into()));
        }
        Ok(Self { alpha, k_alpha })
    }
}

/// `v(ξ, x) = ξ + (x − ξ)₊ / (1 − α)`.
#[inline]
pub fn ru_value(xi: f64, x: f64, alpha: f64) -> f64 {
    xi + (x - xi).max(0.0) / (1.0 - alpha)
}

/// Subgradient `∂v/∂ξ = 1 − 1{x ≥ ξ} / (1 − α)`. Ties count as exceedances.
#[inline]
pub fn ru_subgradient(xi: f64, x: f64, alpha: f64) -> f64 {
    if x >= xi {
        1.0 - 1.0 / (1.0 - alpha)
    } else {
        1.0
    }
}

/// Online VaR/CVaR iterates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskEstimatorState {
    pub xi: f64,
    pub psi: f64,
    /// Number of samples absorbed so far.
    pub n: u64,
}

/// Robbins–Monro VaR step: `ξ − ζ₁ (1 − 1{c ≥ ξ} / (1 − α))`.
pub fn sa_var_update(state: &RiskEstimatorState, c: f64, zeta1: f64, alpha: f64) -> f64 {
    state.xi - zeta1 * ru_subgradient(state.xi, c, alpha)
}

/// Averaging CVaR step `ψ − ζ₂ (ψ − v(ξ, c))`, using the pre-update `ξ`.
pub fn sa_cvar_update(state: &RiskEstimatorState, c: f64, zeta2: f64, alpha: f64) -> f64 {
    state.psi - zeta2 * (state.psi - ru_value(state.xi, c, alpha))
}

impl RiskEstimatorState {
    /// Absorb one sample. The first sample also initializes `ξ₀ = ψ₀ = c`.
    pub fn observe(&mut self, c: f64, zeta1: f64, zeta2: f64, alpha: f64) {
        if self.n == 0 {
            self.xi = c;
            self.psi = c;
        }
        let xi = sa_var_update(self, c, zeta1, alpha);
        let psi = sa_cvar_update(self, c, zeta2, alpha);
        self.xi = xi;
        self.psi = psi;
        self.n += 1;
    }
}

/// How the mini-batch algorithm turns a batch into a VaR estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchVarMode {
    /// Empirical `⌈αm⌉`-th order statistic.
    #[default]
    Quantile,
    /// Batch mean of the RU subgradient at the previous `ξ`, taken literally.
    PrintedAverage,
    /// `ξ_{n−1}` minus `ζ_{n,1}` times the batch-mean RU subgradient.
    RobbinsMonro,
}

impl BatchVarMode {
    pub const NAMES: [&'static str; 3] = ["quantile", "printed-average", "robbins-monro"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "quantile" => Ok(Self::Quantile),
            "printed-average" => Ok(Self::PrintedAverage),
            "robbins-monro" => Ok(Self::RobbinsMonro),
            _ => Err(Error::UnknownName {
                kind: "batch VaR mode",
                name: name.into(),
                valid: Self::NAMES.join(", "),
            }),
        }
    }
}

/// Empirical VaR: the `⌈αm⌉`-th order statistic (1-based).
pub fn batch_var(samples: &[f64], alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let m = samples.len();
    // Guard against α·m landing a hair above an integer.
    let rank = ((alpha * m as f64) - 1e-9).ceil().clamp(1.0, m as f64) as usize;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank - 1])
}

/// Batch mean of `v(ξ, C_j)`, summed in index order.
pub fn batch_cvar(samples: &[f64], xi: f64, alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let excess: f64 = samples.iter().map(|&c| (c - xi).max(0.0)).sum();
    Ok(xi + excess / (samples.len() as f64 * (1.0 - alpha)))
}

/// Batch mean of the RU subgradient at `xi`.
pub fn batch_subgradient(samples: &[f64], xi: f64, alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let sum: f64 = samples.iter().map(|&c| ru_subgradient(xi, c, alpha)).sum();
    Ok(sum / samples.len() as f64)
}

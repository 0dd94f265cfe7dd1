//! Importance-sampled VaR/CVaR recursions for a random variable `ℓ(X)`,
//! `X ~ p`, with translations applied to the sample.

use rand::RngCore;

use super::density::Density;
use super::{IsConfig, IsMode, IsState};
use crate::error::{Error, Result};
use crate::rng::master_stream;
use crate::schedule::PowerStep;

fn log_pdf_checked(density: &dyn Density, x: &[f64]) -> Result<f64> {
    let v = density.log_pdf(x);
    if v == f64::NEG_INFINITY || v.is_nan() {
        return Err(Error::DensityVanishes { point: x.to_vec() });
    }
    Ok(v)
}

fn shift(x: &[f64], t: &[f64], sign: f64) -> Vec<f64> {
    x.iter().zip(t).map(|(a, b)| a + sign * b).collect()
}

/// `p(x + t) / p(x)`, exactly 1 when `t = 0`.
pub fn translation_weight(density: &dyn Density, x: &[f64], t: &[f64]) -> Result<f64> {
    if t.iter().all(|&v| v == 0.0) {
        return Ok(1.0);
    }
    let moved = shift(x, t, 1.0);
    Ok((log_pdf_checked(density, &moved)? - log_pdf_checked(density, x)?).exp())
}

/// `K(t, x) = p(x − t)² / (p(x) p(x − 2t)) · ∇log p(x − 2t)`, the integrand
/// of the double-translation gradient. For `N(0, 1)`, `K(t, x) = e^{t²}(2t − x)`.
pub fn double_translation_kernel(density: &dyn Density, x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    let x1 = shift(x, t, -1.0);
    let x2 = shift(x, t, -2.0);
    let log_ratio = 2.0 * log_pdf_checked(density, &x1)? - log_pdf_checked(density, x)? - log_pdf_checked(density, &x2)?;
    let r = log_ratio.exp();
    Ok(density.grad_log_pdf(&x2).into_iter().map(|g| r * g).collect())
}

/// Diagnostics of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// `ξ_{n+1} − ξ_n`.
    pub xi_increment: f64,
    pub weight_eta: f64,
    pub weight_mu: f64,
}

/// One step of the translated recursions on the sample `x ~ p`.
///
/// All right-hand sides use the pre-update `(ξ, ψ, η, μ)`. With zero
/// translations the VaR/CVaR updates coincide bit for bit with the plain
/// recursions. Translations move only when `adapt` is set, and never on the
/// sample that initializes `ξ₀ = ψ₀`.
#[allow(clippy::too_many_arguments)]
pub fn continuous_is_step(
    state: &mut IsState,
    x: &[f64],
    density: &dyn Density,
    loss: &dyn Fn(&[f64]) -> f64,
    zeta1: f64,
    zeta2: f64,
    alpha: f64,
    cfg: &IsConfig,
    adapt: bool,
) -> Result<StepInfo> {
    let initializing = state.n == 0;
    let (xi, psi) = if initializing {
        let first = loss(x);
        state.initialize(first);
        (first, first)
    } else {
        (state.xi, state.psi)
    };
    let eta = state.eta.clone();
    let mu = state.mu.clone();

    let l_eta = loss(&shift(x, &eta, 1.0));
    let w_eta = translation_weight(density, x, &eta)?;
    let hit = if l_eta >= xi { w_eta } else { 0.0 };
    let new_xi = xi - zeta1 * (cfg.damping(&eta, 1.0) * (1.0 - hit / (1.0 - alpha)));

    let l_mu = loss(&shift(x, &mu, 1.0));
    let w_mu = translation_weight(density, x, &mu)?;
    let v = xi + (l_mu - xi).max(0.0) * w_mu / (1.0 - alpha);
    let new_psi = psi - zeta2 * (psi - v);

    if adapt && !initializing {
        if loss(&shift(x, &eta, -1.0)) >= xi {
            let k = double_translation_kernel(density, x, &eta)?;
            let step = zeta1 * cfg.damping(&eta, 2.0);
            for (e, kv) in state.eta.iter_mut().zip(&k) {
                *e -= step * kv;
            }
        }
        let l_minus = loss(&shift(x, &mu, -1.0));
        if l_minus >= xi {
            let h = l_minus - xi;
            let k = double_translation_kernel(density, x, &mu)?;
            let step = zeta2 * cfg.cvar_normalizer(&mu, xi) * h * h;
            for (m, kv) in state.mu.iter_mut().zip(&k) {
                *m -= step * kv;
            }
        }
    }

    let l_x = loss(x);
    if (l_x - xi).max(0.0) > cfg.growth.eval(l_x) {
        state.growth_violations += 1;
    }

    state.xi = new_xi;
    state.psi = new_psi;
    state.n += 1;
    Ok(StepInfo { xi_increment: new_xi - xi, weight_eta: w_eta, weight_mu: w_mu })
}

/// Result of [`estimate_continuous`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRun {
    pub state: IsState,
    /// Time average of `ξ_n` over all iterations.
    pub xi_average: f64,
    /// Time average of `ψ_n` over all iterations.
    pub psi_average: f64,
}

/// Run the recursions for `iterations` samples drawn from one seeded stream,
/// at level `cfg.level(alpha, n)` in step `n`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_continuous(
    density: &dyn Density,
    loss: &dyn Fn(&[f64]) -> f64,
    alpha: f64,
    cfg: &IsConfig,
    mode: IsMode,
    initial: Option<&[f64]>,
    steps: (PowerStep, PowerStep),
    iterations: u64,
    seed: u64,
) -> Result<ContinuousRun> {
    cfg.validate()?;
    let d = density.dim();
    let t0 = match (mode, initial) {
        (IsMode::Off, _) | (_, None) => vec![0.0; d],
        (_, Some(t)) if t.len() == d => t.to_vec(),
        (_, Some(t)) => {
            return Err(Error::InvalidConfig(format!("translation has length {}, expected {d}", t.len())));
        }
    };
    let mut state = IsState::new(t0.clone(), t0);
    let mut rng = master_stream(seed);
    let (mut xi_avg, mut psi_avg) = (0.0, 0.0);
    for n in 1..=iterations {
        let x = density.sample(&mut rng as &mut dyn RngCore);
        continuous_is_step(
            &mut state,
            &x,
            density,
            loss,
            steps.0.at(n),
            steps.1.at(n),
            cfg.level(alpha, n),
            cfg,
            mode == IsMode::Adaptive,
        )?;
        if !(state.xi.is_finite() && state.psi.is_finite()) {
            return Err(Error::NonFinite { what: "VaR/CVaR iterates", iteration: n });
        }
        xi_avg += (state.xi - xi_avg) / n as f64;
        psi_avg += (state.psi - psi_avg) / n as f64;
    }
    Ok(ContinuousRun { state, xi_average: xi_avg, psi_average: psi_avg })
}

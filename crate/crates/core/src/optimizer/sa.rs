use super::{
    check_finite, cvar_gradient_estimate, lambda_update, norm, objective_gradient_estimate, policy_update, Algorithm,
    IsRecord, IterationRecord, OptimizerState, RunResult, RunSettings,
};
use crate::error::Result;
use crate::importance_sampling::{IsMode, SspIsEstimator};
use crate::model::{simulate_episode, SspModel};
use crate::policy::PolicyParams;
use crate::rng::episode_stream;

/// Online PG-CVaR: one episode per iteration.
#[derive(Debug, Clone, Copy, Default)]
pub struct PgCvarSa;

impl Algorithm for PgCvarSa {
    fn name(&self) -> &'static str {
        "sa"
    }

    fn description(&self) -> &'static str {
        "online policy gradient with stochastic-approximation VaR/CVaR tracking"
    }

    fn run(&self, model: &SspModel, policy0: &PolicyParams, settings: &RunSettings) -> Result<RunResult> {
        run_pg_cvar_sa(model, policy0, settings)
    }
}

/// Iteration `n` simulates its episode from stream `(seed, n, 0)`; importance
/// sampling draws any translated episodes from slots 1 and 2.
pub fn run_pg_cvar_sa(model: &SspModel, policy0: &PolicyParams, settings: &RunSettings) -> Result<RunResult> {
    let alpha = settings.risk.alpha;
    let sched = settings.schedule;
    let mut state = OptimizerState::new(policy0.clone(), settings.lambda0, settings.lambda_max)?;
    let mut is = match &settings.importance {
        Some(cfg) if cfg.mode != IsMode::Off => Some(SspIsEstimator::new(cfg, policy0.dim())?),
        _ => None,
    };
    let mut trace = Vec::new();
    let mut episodes = 0u64;

    for n in 1..=settings.iterations {
        state.n = n;
        let (z1, z2, gamma, beta) = (sched.zeta1().at(n), sched.zeta2().at(n), sched.gamma().at(n), sched.beta().at(n));
        let ep = simulate_episode(model, &state.theta, &mut episode_stream(settings.seed, n, 0), settings.max_steps)?;
        episodes += 1;

        let mut is_record = None;
        match is.as_mut() {
            Some(est) => {
                let mut draw = |p: &PolicyParams, slot: u64| {
                    simulate_episode(model, p, &mut episode_stream(settings.seed, n, slot), settings.max_steps)
                };
                let level = est.config.level(alpha, n);
                let info = est.step(&state.theta, &ep, &mut draw, z1, z2, level)?;
                episodes += u64::from(info.extra_episodes);
                state.risk.xi = est.state.xi;
                state.risk.psi = est.state.psi;
                state.risk.n = est.state.n;
                is_record = Some(IsRecord {
                    eta_norm: norm(&est.state.eta),
                    mu_norm: norm(&est.state.mu),
                    weight_mean: 0.5 * (info.weight_eta + info.weight_mu),
                });
            }
            None => state.risk.observe(ep.total_c, z1, z2, alpha),
        }

        let d_g = objective_gradient_estimate(&ep, &mut state, settings.grad_mode, gamma);
        let d_c = cvar_gradient_estimate(&ep, &mut state, settings.grad_mode, settings.grad_scaling, gamma, alpha);
        policy_update(&mut state, &d_g, &d_c, gamma)?;
        let psi = state.risk.psi;
        lambda_update(&mut state, psi, beta, &settings.risk);
        check_finite(
            &[("VaR iterate", state.risk.xi), ("CVaR iterate", state.risk.psi), ("Lagrange multiplier", state.lambda)],
            n,
        )?;

        if settings.record_trace {
            trace.push(IterationRecord {
                n,
                xi: state.risk.xi,
                psi: state.risk.psi,
                lambda: state.lambda,
                g_bar: state.g_bar,
                c_mean: state.c_tilde,
                theta_norm: norm(state.theta.theta()),
                tau_mean: ep.tau as f64,
                is: is_record,
            });
        }
    }

    let theta = state.theta.theta().to_vec();
    Ok(RunResult {
        theta_output: theta.clone(),
        theta,
        lambda: state.lambda,
        xi: state.risk.xi,
        psi: state.risk.psi,
        episodes,
        trace,
    })
}

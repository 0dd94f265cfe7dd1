use rayon::prelude::*;

use super::{
    check_finite, lambda_update, norm, Algorithm, BatchAggregation, CvarScaling, IterationRecord, OptimizerState,
    RunResult, RunSettings,
};
use crate::error::{Error, Result};
use crate::model::{simulate_episode, EpisodeTrace, SspModel};
use crate::policy::PolicyParams;
use crate::risk::{batch_cvar, batch_subgradient, batch_var, BatchVarMode};
use crate::rng::episode_stream;

/// Mini-batch PG-CVaR: `m_n` episodes per iteration, reported policy `θ̄_M`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PgCvarMb;

impl Algorithm for PgCvarMb {
    fn name(&self) -> &'static str {
        "mb"
    }

    fn description(&self) -> &'static str {
        "mini-batch policy gradient with batch VaR/CVaR estimates and averaged output"
    }

    fn run(&self, model: &SspModel, policy0: &PolicyParams, settings: &RunSettings) -> Result<RunResult> {
        run_pg_cvar_mb(model, policy0, settings)
    }
}

fn simulate_batch(
    model: &SspModel,
    policy: &PolicyParams,
    settings: &RunSettings,
    n: u64,
    m: usize,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<EpisodeTrace>> {
    let one = |j: usize| simulate_episode(model, policy, &mut episode_stream(settings.seed, n, j as u64), settings.max_steps);
    match pool {
        Some(pool) => pool.install(|| (0..m).into_par_iter().map(one).collect()),
        None => (0..m).map(one).collect(),
    }
}

fn mean_of(values: impl Iterator<Item = f64>, m: usize) -> f64 {
    values.sum::<f64>() / m as f64
}

/// Episode `j` of iteration `n` draws from stream `(seed, n, j)`; batch
/// reductions run in index order, so results do not depend on
/// `settings.workers`. `settings.grad_mode` does not apply here.
pub fn run_pg_cvar_mb(model: &SspModel, policy0: &PolicyParams, settings: &RunSettings) -> Result<RunResult> {
    let alpha = settings.risk.alpha;
    let sched = settings.schedule;
    let plan = &settings.batch;
    let factor = match settings.grad_scaling {
        CvarScaling::Conditional => 1.0,
        CvarScaling::Unconditional => 1.0 / (1.0 - alpha),
    };
    let pool = if settings.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(settings.workers)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?,
        )
    } else {
        None
    };

    let d = policy0.dim();
    let mut state = OptimizerState::new(policy0.clone(), settings.lambda0, settings.lambda_max)?;
    let mut theta_sum = vec![0.0; d];
    let mut weight_sum = 0.0;
    let mut trace = Vec::new();
    let mut episodes = 0u64;

    for n in 1..=settings.iterations {
        state.n = n;
        let (z1, gamma, beta) = (sched.zeta1().at(n), sched.gamma().at(n), sched.beta().at(n));
        let m = plan.batch_size(n);
        let batch = simulate_batch(model, &state.theta, settings, n, m, pool.as_ref())?;
        episodes += m as u64;
        let costs: Vec<f64> = batch.iter().map(|e| e.total_c).collect();
        if n == 1 {
            state.risk.xi = costs[0];
        }
        let xi_prev = state.risk.xi;

        let xi = match settings.batch_var_mode {
            BatchVarMode::Quantile => batch_var(&costs, alpha)?,
            BatchVarMode::PrintedAverage => batch_subgradient(&costs, xi_prev, alpha)?,
            BatchVarMode::RobbinsMonro => xi_prev - z1 * batch_subgradient(&costs, xi_prev, alpha)?,
        };
        let anchor = if settings.batch_var_mode == BatchVarMode::Quantile { xi } else { xi_prev };
        let psi = batch_cvar(&costs, anchor, alpha)?;
        state.risk.xi = xi;
        state.risk.psi = psi;
        state.risk.n += m as u64;

        let g_mean = mean_of(batch.iter().map(|e| e.total_g), m);
        let c_mean = mean_of(costs.iter().copied(), m);
        state.g_bar = g_mean;
        state.c_tilde = c_mean;

        let mut d_g = vec![0.0; d];
        let mut d_c = vec![0.0; d];
        match settings.batch_aggregation {
            BatchAggregation::PerEpisodeMean => {
                for e in &batch {
                    let tail = if e.total_c >= xi { (e.total_c - xi) * factor } else { 0.0 };
                    for k in 0..d {
                        d_g[k] += e.total_g * e.score_sum[k];
                        d_c[k] += tail * e.score_sum[k];
                    }
                }
                for k in 0..d {
                    d_g[k] /= m as f64;
                    d_c[k] /= m as f64;
                }
            }
            BatchAggregation::BatchMeanScore => {
                let tail = if c_mean >= xi { (c_mean - xi) * factor } else { 0.0 };
                for k in 0..d {
                    let z_bar = mean_of(batch.iter().map(|e| e.score_sum[k]), m);
                    d_g[k] = g_mean * z_bar;
                    d_c[k] = tail * z_bar;
                }
            }
        }

        super::policy_update(&mut state, &d_g, &d_c, gamma)?;
        lambda_update(&mut state, psi, beta, &settings.risk);
        check_finite(&[("VaR estimate", xi), ("CVaR estimate", psi), ("Lagrange multiplier", state.lambda)], n)?;

        let a = plan.weights.weight(n, settings.iterations);
        if a > 0.0 {
            for (s, t) in theta_sum.iter_mut().zip(state.theta.theta()) {
                *s += a * t;
            }
            weight_sum += a;
        }

        if settings.record_trace {
            trace.push(IterationRecord {
                n,
                xi,
                psi,
                lambda: state.lambda,
                g_bar: g_mean,
                c_mean,
                theta_norm: norm(state.theta.theta()),
                tau_mean: mean_of(batch.iter().map(|e| e.tau as f64), m),
                is: None,
            });
        }
    }

    let theta = state.theta.theta().to_vec();
    let theta_output = if weight_sum > 0.0 { theta_sum.iter().map(|s| s / weight_sum).collect() } else { theta.clone() };
    Ok(RunResult { theta, theta_output, lambda: state.lambda, xi: state.risk.xi, psi: state.risk.psi, episodes, trace })
}

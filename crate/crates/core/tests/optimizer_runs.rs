use cvar_ssp::envs;
use cvar_ssp::importance_sampling::{IsMode, SspIsSettings};
use cvar_ssp::optimizer::{
    run_pg_cvar_mb, run_pg_cvar_sa, Algorithm, AlgorithmRegistry, BatchAggregation, GradientMode, RunResult,
};
use cvar_ssp::risk::BatchVarMode;
use cvar_ssp::schedule::{MiniBatchPlan, OutputWeights};
use cvar_ssp::{Error, PolicyParams, Result, RiskConfig, RunSettings, SspModel};

fn zero_cost_model() -> SspModel {
    SspModel {
        num_states: 3,
        actions: vec![1, 2, 2],
        transition: vec![
            vec![vec![1.0, 0.0, 0.0]],
            vec![vec![0.5, 0.0, 0.5], vec![0.0, 0.0, 1.0]],
            vec![vec![1.0, 0.0, 0.0], vec![0.3, 0.7, 0.0]],
        ],
        cost_g: vec![vec![0.0], vec![0.0, 0.0], vec![0.0, 0.0]],
        cost_c: vec![vec![0.0], vec![0.0, 0.0], vec![0.0, 0.0]],
        start_state: 1,
        features: None,
    }
    .validated()
    .unwrap()
}

fn settings(alpha: f64, k: f64, iterations: u64, seed: u64) -> RunSettings {
    RunSettings::new(RiskConfig::new(alpha, k).unwrap(), iterations, seed)
}

#[test]
fn zero_costs_leave_theta_unchanged_and_lambda_ascends() {
    let model = zero_cost_model();
    let theta0 = vec![0.3, -0.7, 1.1, 0.2];
    let policy = PolicyParams::tabular(&model, theta0.clone()).unwrap();
    let r = run_pg_cvar_sa(&model, &policy, &settings(0.9, 1e6, 1000, 4)).unwrap();
    assert_eq!(r.theta, theta0);
    assert!(r.trace.iter().all(|t| t.lambda == 0.0));

    let s = settings(0.9, -1.0, 1000, 4);
    let r = run_pg_cvar_sa(&model, &policy, &s).unwrap();
    let mut lambda = 0.0f64;
    for t in &r.trace {
        lambda = (lambda + s.schedule.beta().at(t.n) * (t.psi - -1.0)).clamp(0.0, s.lambda_max);
        assert_eq!(t.lambda, lambda);
    }
    assert!(lambda > 5.0);

    let mut mb = settings(0.9, 1.0, 20, 4);
    mb.batch = MiniBatchPlan::new(500.0, 0.01, OutputWeights::Uniform).unwrap();
    let r = run_pg_cvar_mb(&model, &policy, &mb).unwrap();
    assert_eq!(r.theta, theta0);
    assert!(r.theta_output.iter().zip(&theta0).all(|(a, b)| (a - b).abs() < 1e-12));
    assert_eq!(r.lambda, 0.0);
}

fn lambda_in_bounds(r: &RunResult, lambda_max: f64) {
    assert!(r.trace.iter().all(|t| (0.0..=lambda_max).contains(&t.lambda)));
}

#[test]
fn lambda_stays_projected() {
    let model = envs::bandit_ssp();
    let policy = PolicyParams::uniform(&model);
    let mut s = settings(0.95, 2.0, 5000, 1);
    s.lambda_max = 2.0;
    let r = run_pg_cvar_sa(&model, &policy, &s).unwrap();
    lambda_in_bounds(&r, 2.0);
    assert!(r.trace.iter().any(|t| t.lambda == 2.0));
    s.iterations = 100;
    let r = run_pg_cvar_mb(&model, &policy, &s).unwrap();
    lambda_in_bounds(&r, 2.0);
}

#[test]
fn runs_are_deterministic() {
    let model = envs::gridworld_trap();
    let policy = PolicyParams::uniform(&model);
    let s = settings(0.9, 20.0, 2000, 42);
    assert_eq!(run_pg_cvar_sa(&model, &policy, &s).unwrap(), run_pg_cvar_sa(&model, &policy, &s).unwrap());
    let mut mb = s.clone();
    mb.iterations = 40;
    assert_eq!(run_pg_cvar_mb(&model, &policy, &mb).unwrap(), run_pg_cvar_mb(&model, &policy, &mb).unwrap());
}

#[test]
fn mini_batch_output_does_not_depend_on_workers() {
    let model = envs::chain();
    let policy = PolicyParams::uniform(&model);
    let mut s = settings(0.9, 15.0, 60, 8);
    let one = run_pg_cvar_mb(&model, &policy, &s).unwrap();
    s.workers = 4;
    let four = run_pg_cvar_mb(&model, &policy, &s).unwrap();
    assert_eq!(one, four);
}

#[test]
fn final_iterate_weights_report_the_last_iterate() {
    let model = envs::bandit_ssp();
    let policy = PolicyParams::uniform(&model);
    let mut s = settings(0.95, 5.0, 50, 3);
    s.batch = MiniBatchPlan::new(5.0, 0.6, OutputWeights::Final).unwrap();
    let r = run_pg_cvar_mb(&model, &policy, &s).unwrap();
    assert_eq!(r.theta_output, r.theta);
    s.batch = MiniBatchPlan::default();
    let r = run_pg_cvar_mb(&model, &policy, &s).unwrap();
    assert_ne!(r.theta_output, r.theta);
}

#[test]
fn importance_sampling_off_matches_plain_run() {
    let model = envs::bandit_ssp();
    let policy = PolicyParams::uniform(&model);
    let plain = settings(0.95, 5.0, 3000, 5);
    let mut off = plain.clone();
    off.importance = Some(SspIsSettings::default());
    let mut fixed_zero = plain.clone();
    fixed_zero.importance = Some(SspIsSettings { mode: IsMode::Fixed, ..Default::default() });
    let a = run_pg_cvar_sa(&model, &policy, &plain).unwrap();
    let mut b = run_pg_cvar_sa(&model, &policy, &off).unwrap();
    assert_eq!(a, b);
    b = run_pg_cvar_sa(&model, &policy, &fixed_zero).unwrap();
    assert_eq!((a.theta, a.xi, a.psi, a.lambda), (b.theta, b.xi, b.psi, b.lambda));
}

#[test]
fn adaptive_importance_sampling_records_diagnostics() {
    let model = envs::bandit_ssp();
    let policy = PolicyParams::uniform(&model);
    let mut s = settings(0.95, 5.0, 2000, 6);
    s.importance = Some(SspIsSettings { mode: IsMode::Adaptive, ..Default::default() });
    let r = run_pg_cvar_sa(&model, &policy, &s).unwrap();
    assert!(r.trace.iter().all(|t| t.is.is_some()));
    assert!(r.trace.last().unwrap().is.unwrap().eta_norm > 0.0);
    assert!(r.episodes > 2000);
}

#[test]
fn alternative_modes_run() {
    let model = envs::bandit_ssp();
    let policy = PolicyParams::uniform(&model);
    let mut s = settings(0.95, 5.0, 400, 2);
    s.grad_mode = GradientMode::PaperSmoothed;
    run_pg_cvar_sa(&model, &policy, &s).unwrap();
    s.iterations = 40;
    for mode in [BatchVarMode::Quantile, BatchVarMode::PrintedAverage, BatchVarMode::RobbinsMonro] {
        for agg in [BatchAggregation::PerEpisodeMean, BatchAggregation::BatchMeanScore] {
            s.batch_var_mode = mode;
            s.batch_aggregation = agg;
            let r = run_pg_cvar_mb(&model, &policy, &s).unwrap();
            lambda_in_bounds(&r, s.lambda_max);
        }
    }
}

#[test]
fn episode_overflow_propagates() {
    let model = envs::chain();
    let policy = PolicyParams::uniform(&model);
    let mut s = settings(0.9, 5.0, 10, 0);
    s.max_steps = 1;
    assert!(matches!(run_pg_cvar_sa(&model, &policy, &s), Err(Error::EpisodeOverflow { max_steps: 1 })));
    assert!(matches!(run_pg_cvar_mb(&model, &policy, &s), Err(Error::EpisodeOverflow { .. })));
}

struct Frozen;

impl Algorithm for Frozen {
    fn name(&self) -> &'static str {
        "frozen"
    }
    fn description(&self) -> &'static str {
        "returns the initial policy"
    }
    fn run(&self, _model: &SspModel, policy0: &PolicyParams, settings: &RunSettings) -> Result<RunResult> {
        Ok(RunResult {
            theta: policy0.theta().to_vec(),
            theta_output: policy0.theta().to_vec(),
            lambda: settings.lambda0,
            xi: 0.0,
            psi: 0.0,
            episodes: 0,
            trace: Vec::new(),
        })
    }
}

#[test]
fn registry_selects_by_name() {
    let mut registry = AlgorithmRegistry::with_builtins();
    assert_eq!(registry.names(), vec!["sa", "mb"]);
    let err = registry.get("frozen").err().unwrap().to_string();
    assert!(err.contains("sa, mb"), "{err}");
    registry.register(Box::new(Frozen));
    let model = envs::bandit_ssp();
    let policy = PolicyParams::uniform(&model);
    let r = registry.get("frozen").unwrap().run(&model, &policy, &settings(0.9, 1.0, 1, 0)).unwrap();
    assert_eq!(r.theta, vec![0.0; 3]);
    let sa = registry.get("sa").unwrap().run(&model, &policy, &settings(0.9, 1.0, 100, 0)).unwrap();
    assert_eq!(sa, run_pg_cvar_sa(&model, &policy, &settings(0.9, 1.0, 100, 0)).unwrap());
}

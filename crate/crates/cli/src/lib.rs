//! Experiment runner: builds a run from flags or a saved config, executes
//! it, and writes `trace.csv` plus `summary.json` to the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

use cvar_ssp::envs::builtin_environment;
use cvar_ssp::importance_sampling::{AlphaBoost, IsConfig, IsMode, SspIsSettings};
use cvar_ssp::optimizer::{
    AlgorithmRegistry, BatchAggregation, CvarScaling, GradientMode, IterationRecord, RunResult, RunSettings,
    DEFAULT_LAMBDA_MAX,
};
use cvar_ssp::oracle::{summarize, OracleSettings, OracleSummary};
use cvar_ssp::risk::BatchVarMode;
use cvar_ssp::schedule::{MiniBatchPlan, OutputWeights, PowerStep};
use cvar_ssp::{Error, PolicyParams, Result, RiskConfig, SspModel, StepSizeSchedule};

/// Environment variable that, when set, replaces `--out`.
pub const OUT_ENV: &str = "CVAR_SSP_OUT";

/// Everything that determines a run. Echoed into `summary.json`; feeding the
/// echo back through `--config` reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub algo: String,
    pub alpha: f64,
    pub k_alpha: f64,
    pub iterations: u64,
    pub seed: u64,
    pub schedule: StepSizeSchedule,
    pub batch: MiniBatchPlan,
    pub grad_mode: GradientMode,
    pub grad_scaling: CvarScaling,
    pub batch_var_mode: BatchVarMode,
    pub batch_aggregation: BatchAggregation,
    pub lambda0: f64,
    pub lambda_max: f64,
    pub max_steps: usize,
    pub workers: usize,
    pub importance: SspIsSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Parser)]
#[command(name = "cvar-ssp", version, about = "CVaR-constrained policy gradient on stochastic shortest path models")]
pub struct Args {
    /// Built-in environment: bandit-ssp, chain, gridworld-trap.
    #[arg(long, conflicts_with = "model")]
    pub env: Option<String>,
    /// JSON model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Rerun a config echoed in an earlier summary.json; other run flags are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "sa")]
    pub algo: String,
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5.0)]
    pub k_alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    pub iters: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; the CVAR_SSP_OUT variable takes precedence.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Importance sampling for the online VaR/CVaR recursions: off, fixed, adaptive.
    #[arg(long, default_value = "off")]
    pub is: String,
    /// Start level of the importance-sampling warm-up, e.g. 0.95.
    #[arg(long)]
    pub is_alpha_boost: Option<f64>,
    /// Warm-up length; defaults to a tenth of the iterations.
    #[arg(long)]
    pub is_boost_warmup: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub is_rho: f64,
    #[arg(long, default_value_t = 2.0)]
    pub is_b: f64,
    /// Initial translation, comma separated; zeros by default.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub is_translation: Option<Vec<f64>>,
    /// per-episode or paper-smoothed.
    #[arg(long, default_value = "per-episode")]
    pub grad_mode: String,
    /// unconditional or conditional.
    #[arg(long, default_value = "unconditional")]
    pub grad_scaling: String,
    #[arg(long, default_value_t = 5.0)]
    pub batch_coeff: f64,
    #[arg(long, default_value_t = 0.6)]
    pub batch_exp: f64,
    /// quantile, robbins-monro or printed-average.
    #[arg(long, default_value = "quantile")]
    pub batch_var_mode: String,
    /// per-episode-mean or batch-mean-score.
    #[arg(long, default_value = "per-episode-mean")]
    pub batch_aggregation: String,
    /// Report the final mini-batch iterate instead of the uniform average.
    #[arg(long)]
    pub final_iterate: bool,
    /// Step exponents for zeta1, zeta2, gamma, beta.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [0.55, 0.7, 0.85, 1.0])]
    pub step_exponents: Vec<f64>,
    /// Step coefficients for zeta1, zeta2, gamma, beta.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [1.0, 1.0, 1.0, 1.0])]
    pub step_coeffs: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub lambda0: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA_MAX)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = cvar_ssp::model::DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    /// Initial policy parameters, comma separated; zeros by default.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
}

impl Args {
    /// Output directory after applying the environment override.
    pub fn out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.out.clone(),
        }
    }

    pub fn to_config(&self) -> Result<ExperimentConfig> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            // Accept either a bare config or a whole summary document.
            let cfg = value.get("config").cloned().unwrap_or(value);
            return Ok(serde_json::from_value(cfg)?);
        }
        if self.env.is_none() && self.model.is_none() {
            return Err(Error::InvalidConfig("one of --env or --model is required".into()));
        }
        let steps: Vec<PowerStep> =
            self.step_coeffs.iter().zip(&self.step_exponents).map(|(&c, &e)| PowerStep::new(c, e)).collect();
        let schedule = StepSizeSchedule::new(steps[0], steps[1], steps[2], steps[3])?;
        let weights = if self.final_iterate { OutputWeights::Final } else { OutputWeights::Uniform };
        let mode = IsMode::parse(&self.is)?;
        let boost = self.is_alpha_boost.map(|start_alpha| AlphaBoost {
            start_alpha,
            warmup: self.is_boost_warmup.unwrap_or(self.iters / 10),
        });
        Ok(ExperimentConfig {
            env: self.env.clone(),
            model: self.model.clone(),
            algo: self.algo.clone(),
            alpha: self.alpha,
            k_alpha: self.k_alpha,
            iterations: self.iters,
            seed: self.seed,
            schedule,
            batch: MiniBatchPlan::new(self.batch_coeff, self.batch_exp, weights)?,
            grad_mode: GradientMode::parse(&self.grad_mode)?,
            grad_scaling: CvarScaling::parse(&self.grad_scaling)?,
            batch_var_mode: BatchVarMode::parse(&self.batch_var_mode)?,
            batch_aggregation: BatchAggregation::parse(&self.batch_aggregation)?,
            lambda0: self.lambda0,
            lambda_max: self.lambda_max,
            max_steps: self.max_steps,
            workers: self.workers,
            importance: SspIsSettings {
                mode,
                config: IsConfig { rho: self.is_rho, b: self.is_b, boost, ..IsConfig::default() },
                initial_translation: self.is_translation.clone(),
            },
            theta0: self.theta0.clone(),
        })
    }
}

impl ExperimentConfig {
    pub fn load_model(&self) -> Result<SspModel> {
        match (&self.env, &self.model) {
            (Some(name), None) => builtin_environment(name),
            (None, Some(path)) => SspModel::from_path(path),
            _ => Err(Error::InvalidConfig("exactly one of env and model must be set".into())),
        }
    }

    /// Validate and translate into core run settings.
    pub fn run_settings(&self) -> Result<RunSettings> {
        let s = self.schedule;
        let schedule = StepSizeSchedule::new(s.zeta1(), s.zeta2(), s.gamma(), s.beta())?;
        let batch = MiniBatchPlan::new(self.batch.coeff, self.batch.exponent, self.batch.weights.clone())?;
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        self.importance.config.validate()?;
        if self.importance.mode != IsMode::Off && self.algo != "sa" {
            return Err(Error::InvalidConfig("importance sampling is only available with --algo sa".into()));
        }
        let mut settings = RunSettings::new(RiskConfig::new(self.alpha, self.k_alpha)?, self.iterations, self.seed);
        settings.schedule = schedule;
        settings.batch = batch;
        settings.grad_mode = self.grad_mode;
        settings.grad_scaling = self.grad_scaling;
        settings.batch_var_mode = self.batch_var_mode;
        settings.batch_aggregation = self.batch_aggregation;
        settings.lambda0 = self.lambda0;
        settings.lambda_max = self.lambda_max;
        settings.max_steps = self.max_steps;
        settings.workers = self.workers.max(1);
        settings.importance = Some(self.importance.clone());
        Ok(settings)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultSummary {
    pub theta: Vec<f64>,
    pub theta_output: Vec<f64>,
    pub lambda: f64,
    pub xi: f64,
    pub psi: f64,
    pub episodes: u64,
}

/// Oracle evaluation of the reported policy, or why it was skipped.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum OracleReport {
    Evaluated {
        mean_g: f64,
        mean_c: f64,
        var: f64,
        ru_cvar: f64,
        constraint_satisfied: bool,
    },
    Skipped {
        skipped: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub result: ResultSummary,
    pub oracle: OracleReport,
}

fn oracle_report(model: &SspModel, policy: &PolicyParams, cfg: &ExperimentConfig) -> OracleReport {
    match summarize(model, policy, cfg.alpha, OracleSettings::default()) {
        Ok(OracleSummary { mean_g, mean_c, var, cvar, .. }) => OracleReport::Evaluated {
            mean_g,
            mean_c,
            var,
            ru_cvar: cvar,
            constraint_satisfied: cvar <= cfg.k_alpha,
        },
        Err(e) => OracleReport::Skipped { skipped: e.to_string() },
    }
}

pub fn trace_csv(trace: &[IterationRecord], with_is: bool) -> String {
    let mut out = String::from("n,xi,psi,lambda,g_bar,c_mean,theta_norm,tau_mean");
    if with_is {
        out.push_str(",eta_norm,mu_norm,weight_mean");
    }
    out.push('\n');
    for r in trace {
        let _ = write!(out, "{},{},{},{},{},{},{},{}", r.n, r.xi, r.psi, r.lambda, r.g_bar, r.c_mean, r.theta_norm, r.tau_mean);
        if with_is {
            let is = r.is.unwrap_or(cvar_ssp::optimizer::IsRecord { eta_norm: 0.0, mu_norm: 0.0, weight_mean: 1.0 });
            let _ = write!(out, ",{},{},{}", is.eta_norm, is.mu_norm, is.weight_mean);
        }
        out.push('\n');
    }
    out
}

/// Execute a run and write its outputs under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Summary> {
    let model = cfg.load_model()?.validated()?;
    let settings = cfg.run_settings()?;
    let policy0 = match (&model.features, &cfg.theta0) {
        (Some(features), theta) => {
            let dim = features.iter().flatten().map(Vec::len).next().unwrap_or(0);
            PolicyParams::feature(&model, theta.clone().unwrap_or_else(|| vec![0.0; dim]))?
        }
        (None, Some(theta)) => PolicyParams::tabular(&model, theta.clone())?,
        (None, None) => PolicyParams::uniform(&model),
    };
    let registry = AlgorithmRegistry::with_builtins();
    let result: RunResult = registry.get(&cfg.algo)?.run(&model, &policy0, &settings)?;
    let reported = policy0.with_theta(result.theta_output.clone())?;

    let summary = Summary {
        config: cfg.clone(),
        seed: cfg.seed,
        oracle: oracle_report(&model, &reported, cfg),
        result: ResultSummary {
            theta: result.theta,
            theta_output: result.theta_output,
            lambda: result.lambda,
            xi: result.xi,
            psi: result.psi,
            episodes: result.episodes,
        },
    };
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("trace.csv"), trace_csv(&result.trace, cfg.importance.mode != IsMode::Off))?;
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

/// Machine-readable failure document.
pub fn error_json(err: &Error) -> String {
    let mut doc = serde_json::json!({ "error": { "kind": err.kind(), "message": err.to_string() } });
    if let Error::InvalidModel(report) = err {
        doc["error"]["violations"] = serde_json::to_value(report).unwrap_or_default();
    }
    doc.to_string()
}

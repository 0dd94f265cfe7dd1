//! Softmax policies over tabular SSP models.
//!
//! Two parameterizations share one parameter vector `theta`:
//!
//! - tabular softmax: one logit per `(s, a)` for every transient state, so
//!   `d = Σ_{s≥1} |A(s)|`;
//! - feature softmax: logits `φ(s,a)·θ` from a model-supplied feature table.
//!
//! Every action gets positive probability (until `exp` underflows for logit
//! gaps beyond ~745), which keeps every policy proper on a validated model
//! and keeps importance ratios well defined.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::SspModel;

#[derive(Debug, Clone, PartialEq)]
pub enum Parameterization {
    /// `blocks[s]` is the slice of `theta` holding state `s`'s logits.
    TabularSoftmax { blocks: Vec<Range<usize>> },
    FeatureSoftmax { features: Arc<Vec<Vec<Vec<f64>>>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    theta: Vec<f64>,
    param: Parameterization,
}

/// Parameter dimension of a tabular softmax policy on `model`.
pub fn tabular_dim(model: &SspModel) -> usize {
    model.actions.iter().skip(1).sum()
}

fn softmax_into(logits: impl Iterator<Item = f64>, out: &mut Vec<f64>) {
    out.clear();
    out.extend(logits);
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
}

impl PolicyParams {
    pub fn tabular(model: &SspModel, theta: Vec<f64>) -> Result<Self> {
        let mut blocks = Vec::with_capacity(model.num_states);
        blocks.push(0..0);
        let mut offset = 0;
        for &k in model.actions.iter().skip(1) {
            blocks.push(offset..offset + k);
            offset += k;
        }
        if theta.len() != offset {
            return Err(Error::InvalidPolicy(format!(
                "tabular softmax needs {offset} parameters, got {}",
                theta.len()
            )));
        }
        Self::checked(theta, Parameterization::TabularSoftmax { blocks })
    }

    /// Tabular softmax with `θ = 0`: uniform over actions in every state.
    pub fn uniform(model: &SspModel) -> Self {
        Self::tabular(model, vec![0.0; tabular_dim(model)]).expect("dimension matches by construction")
    }

    pub fn feature(model: &SspModel, theta: Vec<f64>) -> Result<Self> {
        let features = model
            .features
            .as_ref()
            .ok_or_else(|| Error::InvalidPolicy("model has no feature table".into()))?;
        let dim = features.iter().flatten().map(Vec::len).next().unwrap_or(0);
        if theta.len() != dim {
            return Err(Error::InvalidPolicy(format!(
                "feature softmax needs {dim} parameters, got {}",
                theta.len()
            )));
        }
        Self::checked(
            theta,
            Parameterization::FeatureSoftmax { features: Arc::new(features.clone()) },
        )
    }

    fn checked(theta: Vec<f64>, param: Parameterization) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPolicy("non-finite parameter".into()));
        }
        Ok(Self { theta, param })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn parameterization(&self) -> &Parameterization {
        &self.param
    }

    pub(crate) fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Same parameterization with a different parameter vector.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.theta.len() {
            return Err(Error::InvalidPolicy(format!(
                "expected {} parameters, got {}",
                self.theta.len(),
                theta.len()
            )));
        }
        Self::checked(theta, self.param.clone())
    }

    /// The policy `π_{θ+translation}`.
    pub fn translated(&self, translation: &[f64]) -> Result<Self> {
        let theta = self.theta.iter().zip(translation).map(|(t, d)| t + d).collect();
        self.with_theta(theta)
    }

    fn num_actions(&self, state: usize) -> Option<usize> {
        match &self.param {
            Parameterization::TabularSoftmax { blocks } => blocks.get(state).map(|b| b.len()),
            Parameterization::FeatureSoftmax { features } => features.get(state).map(Vec::len),
        }
    }

    fn check_state(&self, state: usize) -> Result<usize> {
        if state == 0 {
            return Err(Error::InvalidState { state, reason: "no decisions at the terminal state" });
        }
        match self.num_actions(state) {
            Some(k) if k > 0 => Ok(k),
            _ => Err(Error::InvalidState { state, reason: "state out of range" }),
        }
    }

    /// `π_θ(·|state)`.
    pub fn action_probabilities(&self, state: usize) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let mut out = Vec::new();
        self.probabilities_into(state, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`action_probabilities`](Self::action_probabilities).
    pub(crate) fn probabilities_into(&self, state: usize, out: &mut Vec<f64>) {
        match &self.param {
            Parameterization::TabularSoftmax { blocks } => {
                softmax_into(self.theta[blocks[state].clone()].iter().copied(), out)
            }
            Parameterization::FeatureSoftmax { features } => softmax_into(
                features[state].iter().map(|phi| dot(phi, &self.theta)),
                out,
            ),
        }
    }

    pub fn log_prob(&self, state: usize, action: usize) -> Result<f64> {
        let probs = self.action_probabilities(state)?;
        probs
            .get(action)
            .map(|p| p.ln())
            .ok_or(Error::InvalidAction { state, action })
    }

    /// `∇_θ log π_θ(action|state)`.
    pub fn score(&self, state: usize, action: usize) -> Result<Vec<f64>> {
        let k = self.check_state(state)?;
        if action >= k {
            return Err(Error::InvalidAction { state, action });
        }
        let mut probs = Vec::new();
        self.probabilities_into(state, &mut probs);
        let mut out = vec![0.0; self.dim()];
        self.add_score(state, action, &probs, &mut out);
        Ok(out)
    }

    /// Add `∇_θ log π_θ(action|state)` into `out`, given `probs = π_θ(·|state)`.
    pub(crate) fn add_score(&self, state: usize, action: usize, probs: &[f64], out: &mut [f64]) {
        match &self.param {
            Parameterization::TabularSoftmax { blocks } => {
                let block = &mut out[blocks[state].clone()];
                for (i, (o, p)) in block.iter_mut().zip(probs).enumerate() {
                    *o += if i == action { 1.0 - p } else { -p };
                }
            }
            Parameterization::FeatureSoftmax { features } => {
                let phis = &features[state];
                for (k, o) in out.iter_mut().enumerate() {
                    let mean: f64 = phis.iter().zip(probs).map(|(phi, p)| p * phi[k]).sum();
                    *o += phis[action][k] - mean;
                }
            }
        }
    }

    /// `log Π_m π_θ(a_m|s_m)` over a state/action sequence.
    pub fn log_likelihood(&self, states: &[usize], actions: &[usize]) -> f64 {
        let mut probs = Vec::new();
        states
            .iter()
            .zip(actions)
            .map(|(&s, &a)| {
                self.probabilities_into(s, &mut probs);
                probs[a].ln()
            })
            .sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

//! Brute-force ground truth on enumeration-scale models.
//!
//! Trajectories are enumerated depth by depth. Partial trajectories that sit
//! in the same state with the same accumulated constraint cost are merged
//! (their futures are identically distributed), which keeps long horizons
//! tractable without changing the resulting distribution.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SspModel;
use crate::policy::PolicyParams;
use crate::risk::ru_value;

/// Costs closer than this (relative to `max(1, |c|)`) are one atom.
pub const MERGE_TOL: f64 = 1e-12;

pub const DEFAULT_HORIZON: usize = 400;
pub const DEFAULT_MASS_TOL: f64 = 1e-10;
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Distribution of the total constraint cost `C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostDistribution {
    /// `(cost, probability)`, sorted by cost.
    pub atoms: Vec<(f64, f64)>,
    /// Probability of trajectories still running at the horizon.
    pub residual_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Enumeration {
    pub cost: CostDistribution,
    /// `E[G]` over terminated trajectories, normalized by their mass.
    pub mean_g: f64,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    state: usize,
    cost: f64,
    prob: f64,
    /// Σ over merged paths of `path probability × accumulated g`.
    g_mass: f64,
}

fn same_cost(a: f64, b: f64) -> bool {
    (a - b).abs() <= MERGE_TOL * a.abs().max(1.0)
}

fn merge_nodes(nodes: &mut Vec<Node>) {
    nodes.sort_by(|a, b| a.state.cmp(&b.state).then(a.cost.total_cmp(&b.cost)));
    let mut merged: Vec<Node> = Vec::with_capacity(nodes.len());
    for node in nodes.drain(..) {
        match merged.last_mut() {
            Some(last) if last.state == node.state && same_cost(last.cost, node.cost) => {
                last.prob += node.prob;
                last.g_mass += node.g_mass;
            }
            _ => merged.push(node),
        }
    }
    *nodes = merged;
}

fn merge_atoms(atoms: &mut Vec<(f64, f64)>) {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (c, p) in atoms.drain(..) {
        match merged.last_mut() {
            Some(last) if same_cost(last.0, c) => last.1 += p,
            _ => merged.push((c, p)),
        }
    }
    *atoms = merged;
}

/// Exact distribution of `C` and mean of `G` under `policy`, over all
/// trajectories of at most `horizon` decisions.
pub fn enumerate_cost_distribution(
    model: &SspModel,
    policy: &PolicyParams,
    horizon: usize,
    mass_tol: f64,
) -> Result<Enumeration> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("enumeration horizon must be at least 1".into()));
    }
    let mut layer = vec![Node { state: model.start_state, cost: 0.0, prob: 1.0, g_mass: 0.0 }];
    let mut atoms = Vec::new();
    let mut g_total = 0.0;
    let mut probs = Vec::new();

    for _ in 0..horizon {
        if layer.is_empty() {
            break;
        }
        let mut next = Vec::with_capacity(layer.len() * 4);
        for node in &layer {
            policy.probabilities_into(node.state, &mut probs);
            for (a, &pa) in probs.iter().enumerate() {
                if pa <= 0.0 {
                    continue;
                }
                let cost = node.cost + model.cost_c[node.state][a];
                let g_step = model.cost_g[node.state][a];
                for (succ, &p) in model.transition[node.state][a].iter().enumerate() {
                    if p <= 0.0 {
                        continue;
                    }
                    let w = pa * p;
                    let child = Node {
                        state: succ,
                        cost,
                        prob: node.prob * w,
                        g_mass: (node.g_mass + node.prob * g_step) * w,
                    };
                    if child.prob == 0.0 {
                        continue;
                    }
                    if succ == 0 {
                        atoms.push((child.cost, child.prob));
                        g_total += child.g_mass;
                    } else {
                        next.push(child);
                    }
                }
            }
        }
        merge_nodes(&mut next);
        layer = next;
    }

    let residual_mass: f64 = layer.iter().map(|n| n.prob).sum();
    if residual_mass > mass_tol {
        return Err(Error::ResidualMassTooLarge { residual: residual_mass, tolerance: mass_tol });
    }
    merge_atoms(&mut atoms);
    let terminated: f64 = atoms.iter().map(|a| a.1).sum();
    Ok(Enumeration {
        cost: CostDistribution { atoms, residual_mass },
        mean_g: g_total / terminated,
    })
}

impl CostDistribution {
    /// Distance between the smallest and largest atoms.
    pub fn spread(&self) -> f64 {
        match (self.atoms.first(), self.atoms.last()) {
            (Some(lo), Some(hi)) => hi.0 - lo.0,
            _ => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(c, p)| c * p).sum()
    }

    /// `P(C ≥ threshold)`.
    pub fn tail_probability(&self, threshold: f64) -> f64 {
        self.atoms.iter().filter(|(c, _)| *c >= threshold).map(|(_, p)| p).sum()
    }

    /// `V(ξ) = ξ + E[(C − ξ)₊] / (1 − α)`.
    pub fn ru_objective(&self, xi: f64, alpha: f64) -> f64 {
        xi + self.atoms.iter().map(|&(c, p)| p * (ru_value(xi, c, alpha) - xi)).sum::<f64>()
    }

    /// Smallest gap between `1 − α` and the tail masses `P(C > VaR)` and
    /// `P(C ≥ VaR)`. Near 0, the VaR sits on the boundary between two atoms.
    pub fn var_margin(&self, alpha: f64) -> Result<f64> {
        let (var, _) = exact_var_cvar(self, alpha)?;
        let above: f64 = self.atoms.iter().filter(|(c, _)| *c > var).map(|(_, p)| p).sum();
        let at_or_above = self.tail_probability(var);
        Ok(((1.0 - alpha) - above).min(at_or_above - (1.0 - alpha)))
    }
}

/// Exact VaR and RU-CVaR of an enumerated distribution.
///
/// VaR is the smallest atom with cumulative probability at least `α`; CVaR is
/// `V(VaR)`. Rejects distributions whose residual mass could hide tail atoms.
pub fn exact_var_cvar(dist: &CostDistribution, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if dist.residual_mass > (1.0 - alpha) / 100.0 {
        return Err(Error::TailGuard { residual: dist.residual_mass, alpha });
    }
    let mut cumulative = 0.0;
    let mut var = dist.atoms.last().map(|a| a.0).ok_or(Error::EmptyBatch)?;
    for &(c, p) in &dist.atoms {
        cumulative += p;
        if cumulative >= alpha - 1e-12 {
            var = c;
            break;
        }
    }
    Ok((var, dist.ru_objective(var, alpha)))
}

/// Scalar functional differentiated by [`finite_difference_gradient`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdQuantity {
    MeanG,
    CvarC,
}

/// Enumeration settings shared by the oracle entry points.
#[derive(Debug, Clone, Copy)]
pub struct OracleSettings {
    pub horizon: usize,
    pub mass_tol: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { horizon: DEFAULT_HORIZON, mass_tol: DEFAULT_MASS_TOL }
    }
}

fn evaluate(
    model: &SspModel,
    policy: &PolicyParams,
    quantity: FdQuantity,
    alpha: f64,
    settings: OracleSettings,
) -> Result<f64> {
    let e = enumerate_cost_distribution(model, policy, settings.horizon, settings.mass_tol)?;
    match quantity {
        FdQuantity::MeanG => Ok(e.mean_g),
        FdQuantity::CvarC => Ok(exact_var_cvar(&e.cost, alpha)?.1),
    }
}

/// Central-difference gradient of `E[G]` or `CVaR_α(C)` in the policy parameters.
pub fn finite_difference_gradient(
    model: &SspModel,
    policy: &PolicyParams,
    quantity: FdQuantity,
    h: f64,
    alpha: f64,
    settings: OracleSettings,
) -> Result<Vec<f64>> {
    (0..policy.dim())
        .map(|i| {
            let mut plus = policy.theta().to_vec();
            let mut minus = plus.clone();
            plus[i] += h;
            minus[i] -= h;
            let up = evaluate(model, &policy.with_theta(plus)?, quantity, alpha, settings)?;
            let down = evaluate(model, &policy.with_theta(minus)?, quantity, alpha, settings)?;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Oracle evaluation of one policy, for fixtures and run summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub mean_g: f64,
    pub mean_c: f64,
    pub var: f64,
    pub cvar: f64,
    pub distribution: CostDistribution,
}

pub fn summarize(
    model: &SspModel,
    policy: &PolicyParams,
    alpha: f64,
    settings: OracleSettings,
) -> Result<OracleSummary> {
    let e = enumerate_cost_distribution(model, policy, settings.horizon, settings.mass_tol)?;
    let (var, cvar) = exact_var_cvar(&e.cost, alpha)?;
    Ok(OracleSummary {
        theta: policy.theta().to_vec(),
        alpha,
        mean_g: e.mean_g,
        mean_c: e.cost.mean(),
        var,
        cvar,
        distribution: e.cost,
    })
}

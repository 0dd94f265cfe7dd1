//! Tabular stochastic shortest path models.
//!
//! States are `0..num_states`; state 0 is the cost-free absorbing terminal
//! state and every other state is transient. Costs are arbitrary reals.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyParams;

/// Row sums of the transition kernel must be within this of 1.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Default episode cap.
pub const DEFAULT_MAX_STEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SspModel {
    pub num_states: usize,
    /// Action count per state, `|A(s)|`.
    pub actions: Vec<usize>,
    /// `transition[s][a][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// Objective cost `g[s][a]`.
    pub cost_g: Vec<Vec<f64>>,
    /// Constraint cost `c[s][a]`.
    pub cost_c: Vec<Vec<f64>>,
    pub start_state: usize,
    /// Optional feature table `features[s][a][k]` for feature-softmax policies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<Vec<f64>>>>,
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Shape { detail: String },
    NoActions { state: usize },
    BadProbability { state: usize, action: usize, next: usize, value: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
    NonFiniteCost { state: usize, action: usize },
    TerminalNotAbsorbing { action: usize },
    TerminalCost { action: usize },
    BadStart { start: usize },
    Unreachable { state: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { detail } => write!(f, "shape mismatch: {detail}"),
            Violation::NoActions { state } => write!(f, "state {state} has no actions"),
            Violation::BadProbability { state, action, next, value } => write!(
                f,
                "probability {value} outside [0,1] at ({state},{action}) -> {next}"
            ),
            Violation::RowSum { state, action, sum } => {
                write!(f, "row sum ≠ 1 at ({state},{action}): {sum}")
            }
            Violation::NonFiniteCost { state, action } => {
                write!(f, "non-finite cost at ({state},{action})")
            }
            Violation::TerminalNotAbsorbing { action } => {
                write!(f, "terminal state not absorbing under action {action}")
            }
            Violation::TerminalCost { action } => {
                write!(f, "terminal state has nonzero cost under action {action}")
            }
            Violation::BadStart { start } => {
                write!(f, "start state {start} is not a transient state")
            }
            Violation::Unreachable { state } => write!(f, "state {state} cannot reach terminal"),
        }
    }
}

/// Outcome of [`validate_model`]. Violations are data, not faults.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Check every model invariant and report each violation.
///
/// Properness is checked as reachability of state 0 from every transient
/// state in the support graph over all actions. Softmax policies put positive
/// mass on every action, so this makes every such policy proper.
pub fn validate_model(model: &SspModel) -> ValidationReport {
    let mut violations = Vec::new();
    let n = model.num_states;

    let shape = |detail: String| Violation::Shape { detail };
    if n < 2 {
        violations.push(shape(format!("num_states = {n}, need at least 2")));
        return ValidationReport { violations };
    }
    if model.actions.len() != n
        || model.transition.len() != n
        || model.cost_g.len() != n
        || model.cost_c.len() != n
    {
        violations.push(shape(format!(
            "per-state tables must have {n} entries (actions {}, transition {}, cost_g {}, cost_c {})",
            model.actions.len(),
            model.transition.len(),
            model.cost_g.len(),
            model.cost_c.len()
        )));
        return ValidationReport { violations };
    }

    let mut shapes_ok = true;
    for s in 0..n {
        let k = model.actions[s];
        if k == 0 {
            violations.push(Violation::NoActions { state: s });
            shapes_ok = false;
            continue;
        }
        if model.transition[s].len() != k || model.cost_g[s].len() != k || model.cost_c[s].len() != k
        {
            violations.push(shape(format!("state {s}: tables disagree with |A(s)| = {k}")));
            shapes_ok = false;
            continue;
        }
        for a in 0..k {
            let row = &model.transition[s][a];
            if row.len() != n {
                violations.push(shape(format!("transition row ({s},{a}) has length {}", row.len())));
                shapes_ok = false;
                continue;
            }
            for (next, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    violations.push(Violation::BadProbability { state: s, action: a, next, value: p });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                violations.push(Violation::RowSum { state: s, action: a, sum });
            }
            if !model.cost_g[s][a].is_finite() || !model.cost_c[s][a].is_finite() {
                violations.push(Violation::NonFiniteCost { state: s, action: a });
            }
        }
    }
    if let Some(features) = &model.features {
        if features.len() != n {
            violations.push(shape(format!("features has {} states", features.len())));
            shapes_ok = false;
        } else {
            let dim = features.iter().flatten().map(Vec::len).next().unwrap_or(0);
            for s in 1..n {
                if features[s].len() != model.actions[s]
                    || features[s].iter().any(|phi| phi.len() != dim || phi.iter().any(|v| !v.is_finite()))
                {
                    violations.push(shape(format!("features for state {s} malformed")));
                    shapes_ok = false;
                }
            }
        }
    }
    if !shapes_ok {
        return ValidationReport { violations };
    }

    for a in 0..model.actions[0] {
        if model.transition[0][a][0] != 1.0 {
            violations.push(Violation::TerminalNotAbsorbing { action: a });
        }
        if model.cost_g[0][a] != 0.0 || model.cost_c[0][a] != 0.0 {
            violations.push(Violation::TerminalCost { action: a });
        }
    }
    if model.start_state == 0 || model.start_state >= n {
        violations.push(Violation::BadStart { start: model.start_state });
    }

    // Backward search from the terminal state over the support graph.
    let mut predecessors = vec![Vec::new(); n];
    for s in 1..n {
        for row in &model.transition[s] {
            for (next, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    predecessors[next].push(s);
                }
            }
        }
    }
    let mut reaches = vec![false; n];
    reaches[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(t) = queue.pop_front() {
        for &s in &predecessors[t] {
            if !reaches[s] {
                reaches[s] = true;
                queue.push_back(s);
            }
        }
    }
    for (s, ok) in reaches.iter().enumerate().skip(1) {
        if !ok {
            violations.push(Violation::Unreachable { state: s });
        }
    }

    ValidationReport { violations }
}

impl SspModel {
    /// Validate and return the model, or fail with the violation report.
    pub fn validated(self) -> Result<Self> {
        let report = validate_model(&self);
        if report.is_ok() {
            Ok(self)
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Number of transient (decision) states, `r`.
    pub fn num_transient(&self) -> usize {
        self.num_states - 1
    }
}

/// One simulated episode, from the start state to the first visit of state 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub tau: usize,
    pub total_g: f64,
    pub total_c: f64,
    /// Sum of `∇_θ log π_θ(a_m|s_m)` along the episode.
    pub score_sum: Vec<f64>,
}

/// Draw an index from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding left `acc` slightly below 1.
    last_positive
}

/// Simulate one episode of `model` under `policy`.
///
/// Fails with [`Error::EpisodeOverflow`] when state 0 is not reached within
/// `max_steps` decisions; truncating instead would bias the cost totals.
pub fn simulate_episode<R: Rng + ?Sized>(
    model: &SspModel,
    policy: &PolicyParams,
    rng: &mut R,
    max_steps: usize,
) -> Result<EpisodeTrace> {
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut total_g = 0.0;
    let mut total_c = 0.0;
    let mut score_sum = vec![0.0; policy.dim()];
    let mut probs = Vec::new();

    let mut s = model.start_state;
    for _ in 0..max_steps {
        policy.probabilities_into(s, &mut probs);
        let a = sample_index(&probs, rng);
        policy.add_score(s, a, &probs, &mut score_sum);
        total_g += model.cost_g[s][a];
        total_c += model.cost_c[s][a];
        states.push(s);
        actions.push(a);

        let next = sample_index(&model.transition[s][a], rng);
        if next == 0 {
            return Ok(EpisodeTrace {
                tau: states.len(),
                states,
                actions,
                total_g,
                total_c,
                score_sum,
            });
        }
        s = next;
    }
    Err(Error::EpisodeOverflow { max_steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use crate::rng::episode_stream;
    use rand::RngCore;

    /// Replays a fixed list of uniforms through `Rng::gen::<f64>()`.
    struct ScriptedRng {
        draws: Vec<f64>,
        next: usize,
    }

    impl ScriptedRng {
        fn new(draws: &[f64]) -> Self {
            Self { draws: draws.to_vec(), next: 0 }
        }
    }

    impl RngCore for ScriptedRng {
        fn next_u32(&mut self) -> u32 {
            (self.next_u64() >> 32) as u32
        }
        fn next_u64(&mut self) -> u64 {
            let u = self.draws[self.next];
            self.next += 1;
            ((u * (1u64 << 53) as f64) as u64) << 11
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            rand::rngs::mock::StepRng::new(0, 1).fill_bytes(dest)
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
            self.fill_bytes(dest);
            Ok(())
        }
    }

    fn two_state_chain() -> SspModel {
        SspModel {
            num_states: 2,
            actions: vec![1, 1],
            transition: vec![vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]]],
            cost_g: vec![vec![0.0], vec![1.0]],
            cost_c: vec![vec![0.0], vec![1.0]],
            start_state: 1,
            features: None,
        }
    }

    #[test]
    fn two_state_chain_is_valid() {
        assert!(validate_model(&two_state_chain()).is_ok());
    }

    #[test]
    fn bad_row_sum_is_reported_with_indices() {
        let mut m = envs::bandit_ssp();
        m.transition[1][0] = vec![0.5, 0.4, 0.0];
        let report = validate_model(&m);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::RowSum { state: 1, action: 0, .. })));
        assert!(report.to_string().contains("row sum ≠ 1 at (1,0)"));
    }

    #[test]
    fn unreachable_state_is_reported() {
        let mut m = envs::bandit_ssp();
        // State 2 loops on itself forever.
        m.transition[2][0] = vec![0.0, 0.0, 1.0];
        let report = validate_model(&m);
        assert_eq!(report.violations, vec![Violation::Unreachable { state: 2 }]);
        assert_eq!(report.to_string(), "state 2 cannot reach terminal");
    }

    #[test]
    fn terminal_must_be_absorbing_and_free() {
        let mut m = two_state_chain();
        m.transition[0][0] = vec![0.0, 1.0];
        m.cost_c[0][0] = 1.0;
        let report = validate_model(&m);
        assert!(report.violations.contains(&Violation::TerminalNotAbsorbing { action: 0 }));
        assert!(report.violations.contains(&Violation::TerminalCost { action: 0 }));
    }

    #[test]
    fn shape_errors_do_not_panic() {
        let mut m = two_state_chain();
        m.transition[1][0].pop();
        assert!(!validate_model(&m).is_ok());
        m.actions[1] = 0;
        assert!(!validate_model(&m).is_ok());
    }

    #[test]
    fn forced_a0_gives_single_step_episode() {
        let m = envs::bandit_ssp();
        let policy = PolicyParams::tabular(&m, vec![0.0, -1000.0, 0.0]).unwrap();
        let trace = simulate_episode(&m, &policy, &mut episode_stream(1, 1, 0), 10).unwrap();
        assert_eq!(trace.states, vec![1]);
        assert_eq!(trace.actions, vec![0]);
        assert_eq!(trace.tau, 1);
        assert_eq!(trace.total_c, 1.0);
        assert_eq!(trace.total_g, 1.0);
    }

    #[test]
    fn forced_a1_through_rare_branch() {
        let m = envs::bandit_ssp();
        let policy = PolicyParams::tabular(&m, vec![-1000.0, 0.0, 0.0]).unwrap();
        // action draw, transition draw landing in the 0.1 branch, action at 2, transition.
        let mut rng = ScriptedRng::new(&[0.5, 0.95, 0.5, 0.5]);
        let trace = simulate_episode(&m, &policy, &mut rng, 10).unwrap();
        assert_eq!(trace.states, vec![1, 2]);
        assert_eq!(trace.actions, vec![1, 0]);
        assert_eq!(trace.tau, 2);
        assert_eq!(trace.total_c, 20.0);
        assert_eq!(trace.total_g, 0.0);
    }

    #[test]
    fn overflow_when_cap_too_small() {
        let m = envs::bandit_ssp();
        let policy = PolicyParams::tabular(&m, vec![-1000.0, 0.0, 0.0]).unwrap();
        let mut rng = ScriptedRng::new(&[0.5, 0.95]);
        let err = simulate_episode(&m, &policy, &mut rng, 1).unwrap_err();
        assert!(matches!(err, Error::EpisodeOverflow { max_steps: 1 }));
    }

    #[test]
    fn simulation_is_bit_reproducible() {
        let m = envs::gridworld_trap();
        let policy = PolicyParams::tabular(&m, (0..32).map(|i| (i as f64).sin()).collect()).unwrap();
        for n in 0..50 {
            let a = simulate_episode(&m, &policy, &mut episode_stream(9, n, 0), DEFAULT_MAX_STEPS).unwrap();
            let b = simulate_episode(&m, &policy, &mut episode_stream(9, n, 0), DEFAULT_MAX_STEPS).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn trace_totals_match_cost_lookups() {
        let m = envs::chain();
        let policy = PolicyParams::uniform(&m);
        for n in 0..200 {
            let t = simulate_episode(&m, &policy, &mut episode_stream(3, n, 0), DEFAULT_MAX_STEPS).unwrap();
            assert_eq!(t.tau, t.states.len());
            assert_eq!(t.tau, t.actions.len());
            assert_eq!(t.states[0], m.start_state);
            let g: f64 = t.states.iter().zip(&t.actions).map(|(&s, &a)| m.cost_g[s][a]).sum();
            let c: f64 = t.states.iter().zip(&t.actions).map(|(&s, &a)| m.cost_c[s][a]).sum();
            assert_eq!(t.total_g, g);
            assert_eq!(t.total_c, c);
            let (&s_last, &a_last) = (t.states.last().unwrap(), t.actions.last().unwrap());
            assert!(m.transition[s_last][a_last][0] > 0.0);
        }
    }

    #[test]
    fn json_round_trip() {
        let m = envs::gridworld_trap();
        let back = SspModel::from_json_str(&m.to_json_string().unwrap()).unwrap();
        assert_eq!(m, back);
    }
}

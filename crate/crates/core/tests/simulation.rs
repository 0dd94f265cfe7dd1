use cvar_ssp::envs::{self, BUILTIN_NAMES};
use cvar_ssp::oracle::{enumerate_cost_distribution, DEFAULT_HORIZON, DEFAULT_MASS_TOL};
use cvar_ssp::rng::{episode_stream, master_stream};
use cvar_ssp::{simulate_episode, PolicyParams};
use std::collections::BTreeMap;

const N: u64 = 100_000;

#[test]
fn empirical_cost_distribution_matches_enumeration() {
    let tol = 3.0 / (N as f64).sqrt();
    for name in BUILTIN_NAMES {
        let model = envs::builtin_environment(name).unwrap();
        let policy = PolicyParams::uniform(&model);
        let exact = enumerate_cost_distribution(&model, &policy, DEFAULT_HORIZON, DEFAULT_MASS_TOL).unwrap();

        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        let mut rng = master_stream(11);
        for _ in 0..N {
            let ep = simulate_episode(&model, &policy, &mut rng, 100_000).unwrap();
            *counts.entry(ep.total_c.round() as i64).or_default() += 1;
        }
        for &(c, p) in &exact.cost.atoms {
            let freq = counts.get(&(c.round() as i64)).copied().unwrap_or(0) as f64 / N as f64;
            assert!((freq - p).abs() <= tol, "{name}: atom {c} empirical {freq} exact {p}");
        }
        let covered: u64 = exact.cost.atoms.iter().filter_map(|(c, _)| counts.get(&(c.round() as i64))).sum();
        assert_eq!(covered, N, "{name}: sampled a cost outside the enumerated support");
    }
}

#[test]
fn bandit_a1_only_mean_tau() {
    let model = envs::bandit_ssp();
    let policy = PolicyParams::tabular(&model, vec![-1000.0, 0.0, 0.0]).unwrap();
    let taus: Vec<f64> = (1..=N)
        .map(|n| simulate_episode(&model, &policy, &mut episode_stream(3, n, 0), 10).unwrap().tau as f64)
        .collect();
    let mean = taus.iter().sum::<f64>() / N as f64;
    let sd = (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (N - 1) as f64).sqrt();
    assert!((mean - 1.1).abs() <= 3.0 * sd / (N as f64).sqrt(), "mean tau {mean}");
}

#[test]
fn episodes_are_bit_reproducible() {
    let model = envs::gridworld_trap();
    let policy = PolicyParams::tabular(&model, (0..32).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    for n in 1..50 {
        let a = simulate_episode(&model, &policy, &mut episode_stream(9, n, 2), 10_000).unwrap();
        let b = simulate_episode(&model, &policy, &mut episode_stream(9, n, 2), 10_000).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tau, a.states.len());
        assert_eq!(a.tau, a.actions.len());
        let c: f64 = a.states.iter().zip(&a.actions).map(|(&s, &u)| model.cost_c[s][u]).sum();
        assert_eq!(c, a.total_c);
    }
}

use cvar_ssp::importance_sampling::continuous::translation_weight;
use cvar_ssp::importance_sampling::{
    continuous_is_step, ssp_is_estimate, ssp_is_weight, AlphaBoost, Density, DiagonalGaussian, IsConfig, IsMode,
    IsState, SspIsSettings,
};
use cvar_ssp::rng::{episode_stream, master_stream};
use cvar_ssp::schedule::PowerStep;
use cvar_ssp::{envs, oracle, simulate_episode, PolicyParams, RiskConfig};
use proptest::prelude::*;

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn steps() -> (PowerStep, PowerStep) {
    (PowerStep::new(1.0, 0.55), PowerStep::new(1.0, 0.7))
}

#[test]
fn translated_gaussian_tail_estimates_are_unbiased() {
    let g = DiagonalGaussian::standard(1);
    let normal_tail = |q: f64| 0.5 * erfc(q / std::f64::consts::SQRT_2);
    let mut rng = master_stream(11);
    for eta in [0.5, 1.5] {
        for q in [0.0, 1.0, 1.5, 2.0, 2.5] {
            let samples: Vec<f64> = (0..200_000)
                .map(|_| {
                    let x = g.sample(&mut rng);
                    let shifted = x[0] + eta;
                    if shifted >= q {
                        translation_weight(&g, &x, &[eta]).unwrap()
                    } else {
                        0.0
                    }
                })
                .collect();
            let (m, se) = mean_se(&samples);
            let truth = normal_tail(q);
            assert!((m - truth).abs() <= 3.0 * se, "eta {eta} q {q}: {m} vs {truth} (se {se})");
        }
    }
}

// Complementary error function (Numerical Recipes erfcc), |error| < 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

proptest! {
    #[test]
    fn var_increment_is_damped(
        xi in -2.0f64..3.0,
        eta in -2.0f64..2.0,
        x in -3.0f64..3.0,
        zeta in 0.001f64..1.0,
        alpha in 0.5f64..0.99,
    ) {
        let g = DiagonalGaussian::standard(1);
        let loss = |v: &[f64]| v[0];
        let cfg = IsConfig::default();
        let mut state = IsState::new(vec![eta], vec![0.0]);
        continuous_is_step(&mut state, &[xi], &g, &loss, 0.0, 0.0, alpha, &cfg, false).unwrap();
        prop_assert_eq!(state.xi, xi);
        let info = continuous_is_step(&mut state, &[x], &g, &loss, zeta, 0.5, alpha, &cfg, false).unwrap();
        let w = translation_weight(&g, &[x], &[eta]).unwrap();
        let damp = (-eta * eta).exp();
        let bound = zeta * damp * (1.0f64).max(w / (1.0 - alpha) - 1.0);
        prop_assert!(info.xi_increment.abs() <= bound * (1.0 + 1e-12) + 1e-15);
        let hit = if x + eta >= xi { w } else { 0.0 };
        let expected = -zeta * damp * (1.0 - hit / (1.0 - alpha));
        prop_assert!((info.xi_increment - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }
}

#[test]
fn policy_space_weights_recover_the_tail_mass() {
    let model = envs::bandit_ssp();
    let theta = PolicyParams::uniform(&model);
    let dist = oracle::enumerate_cost_distribution(&model, &theta, 400, 1e-12).unwrap().cost;
    let threshold = dist.atoms.last().unwrap().0;
    let truth = dist.tail_probability(threshold);
    for t in [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [0.5, -0.5, 1.5]] {
        let shifted = theta.translated(&t).unwrap();
        let samples: Vec<f64> = (1..=100_000u64)
            .map(|n| {
                let ep = simulate_episode(&model, &shifted, &mut episode_stream(3, n, 0), 1000).unwrap();
                if ep.total_c >= threshold {
                    ssp_is_weight(&ep, &theta, &t).unwrap()
                } else {
                    0.0
                }
            })
            .collect();
        let (m, se) = mean_se(&samples);
        assert!((m - truth).abs() <= 3.0 * se, "t {t:?}: {m} vs {truth} (se {se})");
    }
}

#[test]
fn fixed_translation_agrees_with_plain_estimation() {
    let model = envs::bandit_ssp();
    let theta = PolicyParams::uniform(&model);
    let cfg = RiskConfig::new(0.9, 0.0).unwrap();
    let run = |mode, seed| {
        let s = SspIsSettings {
            mode,
            config: IsConfig::default(),
            initial_translation: Some(vec![0.0, 0.0, 0.4]),
        };
        ssp_is_estimate(&model, &theta, &cfg, &s, steps(), 20_000, seed, 1000).unwrap().state.psi
    };
    let fixed: Vec<f64> = (0..20).map(|s| run(IsMode::Fixed, s)).collect();
    let plain: Vec<f64> = (0..20).map(|s| run(IsMode::Off, 100 + s)).collect();
    let (mf, sf) = mean_se(&fixed);
    let (mp, sp) = mean_se(&plain);
    assert!((mf - mp).abs() <= 3.0 * (sf * sf + sp * sp).sqrt(), "{mf} ({sf}) vs {mp} ({sp})");
}

#[test]
fn adaptive_bandit_cvar_estimate() {
    let model = envs::bandit_ssp();
    let theta = PolicyParams::uniform(&model);
    let cfg = RiskConfig::new(0.95, 0.0).unwrap();
    let s = SspIsSettings { mode: IsMode::Adaptive, ..Default::default() };
    let out = ssp_is_estimate(&model, &theta, &cfg, &s, steps(), 100_000, 9, 1000).unwrap();
    assert!((out.state.psi - 20.0).abs() <= 0.4, "psi {}", out.state.psi);
}

#[test]
fn boosted_adaptation_reduces_increment_variance_in_the_far_tail() {
    let model = envs::chain();
    let theta = PolicyParams::uniform(&model);
    let cfg = RiskConfig::new(0.999, 0.0).unwrap();
    let boost = Some(AlphaBoost { start_alpha: 0.9, warmup: 10_000 });
    let variance = |mode, seed| {
        let s = SspIsSettings { mode, config: IsConfig { boost, ..Default::default() }, initial_translation: None };
        let out = ssp_is_estimate(&model, &theta, &cfg, &s, steps(), 20_000, seed, 100_000).unwrap();
        let tail = &out.xi_increments[10_000..];
        let m = tail.iter().sum::<f64>() / tail.len() as f64;
        tail.iter().map(|x| (x - m).powi(2)).sum::<f64>() / tail.len() as f64
    };
    let adaptive: f64 = (0..10).map(|s| variance(IsMode::Adaptive, s)).sum::<f64>() / 10.0;
    let plain: f64 = (0..10).map(|s| variance(IsMode::Off, s)).sum::<f64>() / 10.0;
    assert!(adaptive <= plain, "adaptive {adaptive} plain {plain}");
}

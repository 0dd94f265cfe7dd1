//! Step-size schedules and mini-batch plans.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `coeff · n^(−exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerStep {
    pub coeff: f64,
    pub exponent: f64,
}

impl PowerStep {
    pub const fn new(coeff: f64, exponent: f64) -> Self {
        Self { coeff, exponent }
    }

    #[inline]
    pub fn at(&self, n: u64) -> f64 {
        self.coeff * (n as f64).powf(-self.exponent)
    }
}

/// The four step-size sequences: `ζ₁` (VaR), `ζ₂` (CVaR), `γ` (policy),
/// `β` (Lagrange multiplier), fastest to slowest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeSchedule {
    zeta1: PowerStep,
    zeta2: PowerStep,
    gamma: PowerStep,
    beta: PowerStep,
}

impl Default for StepSizeSchedule {
    fn default() -> Self {
        Self {
            zeta1: PowerStep::new(1.0, 0.55),
            zeta2: PowerStep::new(1.0, 0.7),
            gamma: PowerStep::new(1.0, 0.85),
            beta: PowerStep::new(1.0, 1.0),
        }
    }
}

impl StepSizeSchedule {
    /// Validates summability and timescale separation:
    /// `0.5 < p_ζ₁ < p_ζ₂ < p_γ < 1` and `p_γ < p_β ≤ 1`.
    pub fn new(zeta1: PowerStep, zeta2: PowerStep, gamma: PowerStep, beta: PowerStep) -> Result<Self> {
        for (name, step) in [("zeta1", zeta1), ("zeta2", zeta2), ("gamma", gamma), ("beta", beta)] {
            if !(step.coeff > 0.0 && step.coeff.is_finite()) {
                return Err(Error::InvalidSchedule(format!("{name} coefficient must be positive, got {}", step.coeff)));
            }
            let upper_ok = if name == "beta" { step.exponent <= 1.0 } else { step.exponent < 1.0 };
            if !(step.exponent > 0.5 && upper_ok) {
                return Err(Error::InvalidSchedule(format!(
                    "{name} exponent {} violates the summability conditions",
                    step.exponent
                )));
            }
        }
        if !(zeta1.exponent < zeta2.exponent
            && zeta2.exponent < gamma.exponent
            && gamma.exponent < beta.exponent)
        {
            return Err(Error::InvalidSchedule(format!(
                "exponents must satisfy zeta1 < zeta2 < gamma < beta, got {} {} {} {}",
                zeta1.exponent, zeta2.exponent, gamma.exponent, beta.exponent
            )));
        }
        Ok(Self { zeta1, zeta2, gamma, beta })
    }

    pub fn zeta1(&self) -> PowerStep {
        self.zeta1
    }
    pub fn zeta2(&self) -> PowerStep {
        self.zeta2
    }
    pub fn gamma(&self) -> PowerStep {
        self.gamma
    }
    pub fn beta(&self) -> PowerStep {
        self.beta
    }
}

/// Output weights `a_k` for the averaged iterate `θ̄_M`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "values")]
pub enum OutputWeights {
    /// `a_k = 1`.
    #[default]
    Uniform,
    /// `a_k = 1{k = M}`: the final iterate.
    Final,
    /// Explicit `a_1..a_M`; missing entries count as 0.
    Explicit(Vec<f64>),
}

impl OutputWeights {
    pub fn weight(&self, k: u64, total: u64) -> f64 {
        match self {
            OutputWeights::Uniform => 1.0,
            OutputWeights::Final => f64::from(u8::from(k == total)),
            OutputWeights::Explicit(w) => w.get((k - 1) as usize).copied().unwrap_or(0.0),
        }
    }
}

/// Batch sizes `m_n = ⌈C · n^δ⌉` and the output weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniBatchPlan {
    pub coeff: f64,
    pub exponent: f64,
    #[serde(default)]
    pub weights: OutputWeights,
}

impl Default for MiniBatchPlan {
    fn default() -> Self {
        Self { coeff: 5.0, exponent: 0.6, weights: OutputWeights::Uniform }
    }
}

impl MiniBatchPlan {
    pub fn new(coeff: f64, exponent: f64, weights: OutputWeights) -> Result<Self> {
        if !(coeff > 0.0 && coeff.is_finite()) {
            return Err(Error::InvalidConfig(format!("batch coefficient must be positive, got {coeff}")));
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::InvalidConfig(format!("batch exponent must be positive, got {exponent}")));
        }
        if let OutputWeights::Explicit(w) = &weights {
            if w.iter().any(|&a| !(a >= 0.0 && a.is_finite())) || w.iter().all(|&a| a == 0.0) {
                return Err(Error::InvalidConfig("output weights must be non-negative and not all zero".into()));
            }
        }
        Ok(Self { coeff, exponent, weights })
    }

    pub fn batch_size(&self, n: u64) -> usize {
        (self.coeff * (n as f64).powf(self.exponent)).ceil().max(1.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_schedule_is_valid() {
        let d = StepSizeSchedule::default();
        assert!(StepSizeSchedule::new(d.zeta1(), d.zeta2(), d.gamma(), d.beta()).is_ok());
        assert_eq!(d.beta().at(4), 0.25);
        assert_eq!(d.zeta1().at(1), 1.0);
    }

    #[test]
    fn rejects_bad_coefficients_and_bounds() {
        let ok = StepSizeSchedule::default();
        assert!(StepSizeSchedule::new(PowerStep::new(0.0, 0.55), ok.zeta2(), ok.gamma(), ok.beta()).is_err());
        assert!(StepSizeSchedule::new(PowerStep::new(1.0, 0.5), ok.zeta2(), ok.gamma(), ok.beta()).is_err());
        assert!(StepSizeSchedule::new(ok.zeta1(), ok.zeta2(), PowerStep::new(1.0, 1.0), ok.beta()).is_err());
        assert!(StepSizeSchedule::new(ok.zeta1(), ok.zeta2(), ok.gamma(), PowerStep::new(1.0, 1.1)).is_err());
    }

    #[test]
    fn batch_sizes() {
        let plan = MiniBatchPlan::default();
        assert_eq!(plan.batch_size(1), 5);
        assert_eq!(plan.batch_size(10), (5.0 * 10f64.powf(0.6)).ceil() as usize);
        assert!(MiniBatchPlan::new(0.0, 0.6, OutputWeights::Uniform).is_err());
        assert!(MiniBatchPlan::new(5.0, 0.0, OutputWeights::Uniform).is_err());
        assert!(MiniBatchPlan::new(5.0, 0.6, OutputWeights::Explicit(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn output_weights() {
        assert_eq!(OutputWeights::Final.weight(3, 3), 1.0);
        assert_eq!(OutputWeights::Final.weight(2, 3), 0.0);
        assert_eq!(OutputWeights::Explicit(vec![0.5]).weight(2, 3), 0.0);
    }

    proptest! {
        #[test]
        fn construction_enforces_timescale_ordering(
            p in proptest::collection::vec(0.3f64..1.2, 4),
        ) {
            let result = StepSizeSchedule::new(
                PowerStep::new(1.0, p[0]), PowerStep::new(1.0, p[1]),
                PowerStep::new(1.0, p[2]), PowerStep::new(1.0, p[3]),
            );
            let valid = p[0] > 0.5 && p[0] < p[1] && p[1] < p[2] && p[2] < p[3]
                && p[2] < 1.0 && p[3] <= 1.0;
            prop_assert_eq!(result.is_ok(), valid);
            if let Ok(s) = result {
                // Ratios of successive timescales shrink.
                let n = 1_000_000;
                prop_assert!(s.zeta2().at(n) < s.zeta1().at(n));
                prop_assert!(s.gamma().at(n) < s.zeta2().at(n));
                prop_assert!(s.beta().at(n) < s.gamma().at(n));
            }
        }

        #[test]
        fn batch_sizes_nondecreasing(c in 0.1f64..20.0, d in 0.01f64..2.0, n in 1u64..10_000) {
            let plan = MiniBatchPlan::new(c, d, OutputWeights::Uniform).unwrap();
            prop_assert!(plan.batch_size(1) >= 1);
            prop_assert!(plan.batch_size(n + 1) >= plan.batch_size(n));
        }
    }
}

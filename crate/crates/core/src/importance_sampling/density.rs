//! Densities for the continuous setting.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A sampling density `p` on `ℝ^d`.
pub trait Density: Send + Sync {
    fn dim(&self) -> usize;

    /// `log p(x)`; `−∞` outside the support.
    fn log_pdf(&self, x: &[f64]) -> f64;

    fn grad_log_pdf(&self, x: &[f64]) -> Vec<f64>;

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// Independent normal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != sd.len() {
            return Err(Error::InvalidConfig("mean and sd must be non-empty and of equal length".into()));
        }
        if sd.iter().any(|&s| !(s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidConfig("gaussian parameters must be finite with positive sd".into()));
        }
        Ok(Self { mean, sd })
    }

    /// `N(0, I_d)`.
    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim.max(1)], sd: vec![1.0; dim.max(1)] }
    }
}

impl Density for DiagonalGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_pdf(&self, x: &[f64]) -> f64 {
        const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
        x.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(&xi, (&m, &s))| {
                let z = (xi - m) / s;
                -0.5 * z * z - s.ln() - HALF_LN_2PI
            })
            .sum()
    }

    fn grad_log_pdf(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.sd)).map(|(&xi, (&m, &s))| -(xi - m) / (s * s)).collect()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.sd)
            .map(|(&m, &s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect()
    }
}

//! Noise schedules for both modalities.
//!
//! Numeric columns use a power-mean variance-exploding schedule
//! `sigma(t) = (smin^(1/rho) + t (smax^(1/rho) - smin^(1/rho)))^rho`, one
//! `rho` per column. Text positions survive masking with probability
//! `alpha_bar(t)`.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, SQRT_2};

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub const SIGMA_MIN: f64 = 0.002;
pub const SIGMA_MAX: f64 = 80.0;
pub const DEFAULT_RHO: f64 = 7.0;

/// Closed-form power-mean noise level. The endpoints are returned exactly.
pub fn power_mean_sigma(sigma_min: f64, sigma_max: f64, rho: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return sigma_min;
    }
    if t >= 1.0 {
        return sigma_max;
    }
    let lo = sigma_min.powf(1.0 / rho);
    let hi = sigma_max.powf(1.0 / rho);
    (lo + t * (hi - lo)).powf(rho)
}

/// d sigma / d rho of [`power_mean_sigma`] at fixed `t`.
pub fn power_mean_dsigma_drho(sigma_min: f64, sigma_max: f64, rho: f64, t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let lo = sigma_min.powf(1.0 / rho);
    let hi = sigma_max.powf(1.0 / rho);
    let u = lo + t * (hi - lo);
    let inv_rho2 = 1.0 / (rho * rho);
    let dlo = -lo * sigma_min.ln() * inv_rho2;
    let dhi = -hi * sigma_max.ln() * inv_rho2;
    let du = (1.0 - t) * dlo + t * dhi;
    let sigma = u.powf(rho);
    sigma * (u.ln() + rho * du / u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMeanSchedule {
    sigma_min: f64,
    sigma_max: f64,
    rho: Vec<f64>,
}

impl PowerMeanSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, rho: Vec<f64>) -> Result<Self> {
        ensure!(
            sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite(),
            Config,
            "need 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
        );
        ensure!(
            rho.iter().all(|&r| r > 0.0 && r.is_finite()),
            Config,
            "every rho must be positive and finite"
        );
        Ok(Self { sigma_min, sigma_max, rho })
    }

    /// Default endpoints with the same `rho` for all `features`.
    pub fn uniform(features: usize, rho: f64) -> Result<Self> {
        Self::new(SIGMA_MIN, SIGMA_MAX, alloc::vec![rho; features])
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn num_features(&self) -> usize {
        self.rho.len()
    }

    pub fn with_rho(&self, rho: Vec<f64>) -> Result<Self> {
        Self::new(self.sigma_min, self.sigma_max, rho)
    }

    pub fn sigma_at(&self, t: f64, feature: usize) -> Result<f64> {
        ensure!((0.0..=1.0).contains(&t), Precondition, "t = {t} is outside [0, 1]");
        let rho = *self.rho.get(feature).ok_or_else(|| {
            Error::Precondition(alloc::format!(
                "feature {feature} out of range for {} features",
                self.rho.len()
            ))
        })?;
        Ok(power_mean_sigma(self.sigma_min, self.sigma_max, rho, t))
    }

    /// Unchecked variant for hot loops; `t` is clamped into [0, 1].
    pub fn sigma(&self, t: f64, feature: usize) -> f64 {
        power_mean_sigma(self.sigma_min, self.sigma_max, self.rho[feature], t.clamp(0.0, 1.0))
    }

    pub fn dsigma_drho(&self, t: f64, feature: usize) -> f64 {
        power_mean_dsigma_drho(self.sigma_min, self.sigma_max, self.rho[feature], t)
    }

    pub fn discretize(&self, steps: usize, churn: &ChurnConfig) -> Result<DiscretizedSchedule> {
        DiscretizedSchedule::new(self, steps, churn)
    }
}

/// Survival probability of an unmasked token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSchedule {
    /// `alpha_bar(t) = 1 - t`
    #[default]
    Linear,
    /// `alpha_bar(t) = cos(pi t / 2)`
    Cosine,
}

impl MaskSchedule {
    pub fn alpha_bar(self, t: f64) -> Result<f64> {
        ensure!((0.0..=1.0).contains(&t), Precondition, "t = {t} is outside [0, 1]");
        Ok(self.alpha_bar_unchecked(t))
    }

    pub fn alpha_bar_unchecked(self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match self {
            MaskSchedule::Linear => 1.0 - t,
            MaskSchedule::Cosine => {
                if t >= 1.0 {
                    0.0
                } else {
                    (FRAC_PI_2 * t).cos()
                }
            }
        }
    }

    /// Masking probability `1 - alpha_bar(t)`.
    pub fn mask_prob(self, t: f64) -> f64 {
        1.0 - self.alpha_bar_unchecked(t)
    }

    /// Continuous-time ELBO weight `-alpha_bar'(t) / (1 - alpha_bar(t))`.
    pub fn elbo_weight(self, t: f64) -> f64 {
        let t = t.max(1e-4);
        match self {
            MaskSchedule::Linear => 1.0 / t,
            MaskSchedule::Cosine => {
                let x = FRAC_PI_2 * t;
                FRAC_PI_2 * x.sin() / (1.0 - x.cos())
            }
        }
    }
}

/// Stochastic churn for the reverse sampler: `sigma_hat = sigma (1 + gamma)`
/// with `gamma = min(amount / T, sqrt(2) - 1)` on levels inside
/// `[sigma_lo, sigma_hi]`. `amount = 0` gives the deterministic sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChurnConfig {
    pub amount: f64,
    pub sigma_lo: f64,
    /// Unbounded by default; written as null in JSON.
    #[serde(with = "unbounded")]
    pub sigma_hi: f64,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        x.is_finite().then_some(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for ChurnConfig {
    fn default() -> Self {
        Self { amount: 0.0, sigma_lo: 0.0, sigma_hi: f64::INFINITY }
    }
}

impl ChurnConfig {
    pub fn gamma(&self, sigma: f64, steps: usize) -> f64 {
        if self.amount <= 0.0 || sigma < self.sigma_lo || sigma > self.sigma_hi {
            0.0
        } else {
            (self.amount / steps as f64).min(SQRT_2 - 1.0)
        }
    }
}

/// Reverse-time grid. Index `t` runs `T..=0`; `sigma(0, i) = 0` so the last
/// Euler step lands exactly on the denoiser prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedSchedule {
    steps: usize,
    features: usize,
    /// `(steps + 1) * features`, row `t` holds the levels at step `t`.
    sigma: Vec<f64>,
    sigma_hat: Vec<f64>,
}

impl DiscretizedSchedule {
    pub fn new(schedule: &PowerMeanSchedule, steps: usize, churn: &ChurnConfig) -> Result<Self> {
        ensure!(steps >= 1, Config, "the sampler needs at least one step");
        ensure!(churn.amount >= 0.0, Config, "churn amount must be non-negative");
        let features = schedule.num_features();
        let mut sigma = alloc::vec![0.0; (steps + 1) * features];
        let mut sigma_hat = alloc::vec![0.0; (steps + 1) * features];
        for t in 1..=steps {
            for i in 0..features {
                let s = schedule.sigma(t as f64 / steps as f64, i);
                sigma[t * features + i] = s;
                sigma_hat[t * features + i] = s * (1.0 + churn.gamma(s, steps));
            }
        }
        Ok(Self { steps, features, sigma, sigma_hat })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_features(&self) -> usize {
        self.features
    }

    pub fn sigma(&self, t: usize, feature: usize) -> f64 {
        self.sigma[t * self.features + feature]
    }

    pub fn sigma_hat(&self, t: usize, feature: usize) -> f64 {
        self.sigma_hat[t * self.features + feature]
    }

    /// Levels of one feature ordered `sigma_T, ..., sigma_0`.
    pub fn levels(&self, feature: usize) -> Vec<f64> {
        (0..=self.steps).rev().map(|t| self.sigma(t, feature)).collect()
    }
}

use alloc::vec::Vec;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::forward::NoisyBatch;
use super::model::{DiffusionModel, LossReport};
use crate::error::{ensure, Result};
use crate::mdlm::SerializedRecord;
use crate::nn::{clip_grad_norm, zero_grad, AdamW, AdamWConfig, LrSchedule};
use crate::rng::{permutation, stream, Domain};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub lambda_max: f64,
    pub warm_steps: u64,
    /// Weight masked cross-entropy by the continuous-time ELBO factor.
    pub elbo_weighting: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 2e-4,
            warmup_ratio: 0.1,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.98,
            grad_clip: 1.0,
            lambda_max: 1.0,
            warm_steps: 2000,
            elbo_weighting: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.batch_size >= 1, Config, "batch size must be positive");
        ensure!(self.lr > 0.0, Config, "learning rate must be positive");
        ensure!((0.0..=1.0).contains(&self.warmup_ratio), Config, "warmup ratio must be in [0, 1]");
        ensure!(self.lambda_max >= 0.0, Config, "lambda_max must be non-negative");
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: 1e-8, weight_decay: self.weight_decay }
    }
}

/// `lambda_max * min(1, s / s_warm)`; a zero warm-up length gives
/// `lambda_max` from the first step.
pub fn lambda_weight(step: i64, lambda_max: f64, warm_steps: u64) -> Result<f64> {
    ensure!(step >= 0, Precondition, "step {step} is negative");
    if warm_steps == 0 {
        return Ok(lambda_max);
    }
    Ok(lambda_max * (step as f64 / warm_steps as f64).min(1.0))
}

/// One optimizer update on `batch`: corrupt with a fresh `t` per record,
/// accumulate gradients of `L_text + lambda(s) L_num`, clip, step.
pub fn training_step<S: Scalar>(
    model: &mut DiffusionModel<S>,
    optimizer: &mut AdamW<S>,
    batch: &[&SerializedRecord],
    step: u64,
    config: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<LossReport> {
    let schedule = model.schedule()?;
    let nb = NoisyBatch::sample(batch, &model.layout, &schedule, model.config.mask_schedule, rng)?;
    let lambda = lambda_weight(step as i64, config.lambda_max, config.warm_steps)?;
    zero_grad(model);
    let mut report = model.loss_and_backward(&nb, lambda, config.elbo_weighting, Some(rng))?;
    clip_grad_norm(model, config.grad_clip);
    optimizer.step(model);
    model.clamp_rho();
    report.step = step;
    Ok(report)
}

/// Epoch-based loop over a fixed record set. Everything random is derived
/// from `(seed, step)` or `(seed, epoch)`, so a run restored at step `s`
/// continues exactly as an uninterrupted one.
pub struct Trainer<S> {
    pub model: DiffusionModel<S>,
    pub optimizer: AdamW<S>,
    pub config: TrainConfig,
    records: Vec<SerializedRecord>,
    order: Vec<usize>,
    order_epoch: Option<usize>,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(model: DiffusionModel<S>, config: TrainConfig, records: Vec<SerializedRecord>) -> Result<Self> {
        config.validate()?;
        ensure!(!records.is_empty(), Precondition, "no training records");
        let total = Self::total_for(&config, records.len());
        let schedule = LrSchedule::warmup_linear(total, config.warmup_ratio);
        let optimizer = AdamW::new(config.optimizer(), schedule);
        Ok(Self { model, optimizer, config, records, order: Vec::new(), order_epoch: None })
    }

    fn total_for(config: &TrainConfig, n: usize) -> u64 {
        (config.epochs * n.div_ceil(config.batch_size)) as u64
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.records.len().div_ceil(self.config.batch_size)
    }

    pub fn total_steps(&self) -> u64 {
        Self::total_for(&self.config, self.records.len())
    }

    /// Number of completed updates.
    pub fn step_index(&self) -> u64 {
        self.optimizer.steps()
    }

    pub fn is_done(&self) -> bool {
        self.step_index() >= self.total_steps()
    }

    /// Record indices used by update `step`.
    pub fn batch_indices(&mut self, step: u64) -> Vec<usize> {
        let spe = self.steps_per_epoch();
        let epoch = step as usize / spe;
        let k = step as usize % spe;
        if self.order_epoch != Some(epoch) {
            self.order = permutation(&mut stream(self.config.seed, Domain::Shuffle, epoch as u64), self.records.len());
            self.order_epoch = Some(epoch);
        }
        let end = ((k + 1) * self.config.batch_size).min(self.records.len());
        self.order[k * self.config.batch_size..end].to_vec()
    }

    pub fn step(&mut self) -> Result<LossReport> {
        let s = self.step_index();
        let idx = self.batch_indices(s);
        let batch: Vec<&SerializedRecord> = idx.iter().map(|&i| &self.records[i]).collect();
        let mut rng = stream(self.config.seed, Domain::Corrupt, s);
        training_step(&mut self.model, &mut self.optimizer, &batch, s, &self.config, &mut rng)
    }
}

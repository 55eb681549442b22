use alloc::vec::Vec;
use core::str::FromStr;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::DiffusionModel;
use crate::error::{ensure, Error, Result};
use crate::mdlm::{detokenize, TokenLayout, Vocabulary, MASK, NUM};
use crate::numcodec::QuantileNormalizer;
use crate::rng::{normal, open01, stream, Domain};
use crate::schedules::{ChurnConfig, DiscretizedSchedule, PowerMeanSchedule};
use crate::table::{Schema, Table};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnmaskPolicy {
    /// Reveal the proposals the model is most sure about.
    #[default]
    HighConfidence,
    /// Reveal a uniformly random subset of masked positions.
    Random,
}

impl FromStr for UnmaskPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high-confidence" | "confidence" => Ok(UnmaskPolicy::HighConfidence),
            "random" => Ok(UnmaskPolicy::Random),
            other => Err(Error::Config(alloc::format!("unknown unmasking policy `{other}`"))),
        }
    }
}

impl UnmaskPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            UnmaskPolicy::HighConfidence => "high-confidence",
            UnmaskPolicy::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub steps: usize,
    pub policy: UnmaskPolicy,
    pub temperature: f64,
    pub churn: ChurnConfig,
    pub seed: u64,
    /// Records denoised together; does not affect results.
    pub batch_size: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { steps: 50, policy: UnmaskPolicy::HighConfidence, temperature: 1.0, churn: ChurnConfig::default(), seed: 0, batch_size: 64 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.steps >= 1, Config, "the sampler needs at least one step");
        ensure!(self.temperature > 0.0, Config, "temperature must be positive");
        ensure!(self.batch_size >= 1, Config, "sampling batch size must be positive");
        Ok(())
    }
}

/// Anything that maps a partially masked, noisy batch to token logits at
/// the layout's text positions and clean numeric estimates.
pub trait Denoiser {
    fn layout(&self) -> &TokenLayout;
    fn vocab_size(&self) -> usize;
    fn noise_schedule(&self) -> Result<PowerMeanSchedule>;
    /// Returns `(logits, numerics)`: `batch * G * vocab` and `batch * slots`.
    fn denoise(&self, tokens: &[u32], x_hat: &[f64], sigmas: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)>;
}

impl<S: Scalar> Denoiser for DiffusionModel<S> {
    fn layout(&self) -> &TokenLayout {
        &self.layout
    }

    fn vocab_size(&self) -> usize {
        DiffusionModel::vocab_size(self)
    }

    fn noise_schedule(&self) -> Result<PowerMeanSchedule> {
        self.schedule()
    }

    fn denoise(&self, tokens: &[u32], x_hat: &[f64], sigmas: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.predict(tokens, x_hat, sigmas, batch)
    }
}

/// Gumbel-max draw from `softmax(logits / tau)`.
pub fn gumbel_sample<R: Rng + ?Sized>(logits: &[f64], tau: f64, rng: &mut R) -> Result<usize> {
    ensure!(tau > 0.0, Precondition, "temperature must be positive");
    let mut best = None;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &l) in logits.iter().enumerate() {
        if l == f64::NEG_INFINITY || l.is_nan() {
            continue;
        }
        let g = -libm::log(-libm::log(open01(rng)));
        let score = l / tau + g;
        if best.is_none() || score > best_score {
            best = Some(i);
            best_score = score;
        }
    }
    best.ok_or_else(|| Error::Precondition("every logit is -inf".into()))
}

/// `softmax(logits / tau)[index]`
pub fn token_probability(logits: &[f64], tau: f64, index: usize) -> f64 {
    let mx = logits.iter().copied().filter(|l| l.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().filter(|l| l.is_finite()).map(|&l| libm::exp((l - mx) / tau)).sum();
    libm::exp((logits[index] - mx) / tau) / z
}

/// Split `total` reveals over `steps` as evenly as possible, remainder on
/// the earliest steps.
pub fn reveal_counts(total: usize, steps: usize) -> Vec<usize> {
    if steps == 0 {
        return Vec::new();
    }
    let (q, r) = (total / steps, total % steps);
    (0..steps).map(|i| q + usize::from(i < r)).collect()
}

/// Reveal `reveal` of the masked positions, writing their candidates into
/// `tokens`. `candidates` and `confidences` are parallel to `masked`.
pub fn unmask_step<R: Rng + ?Sized>(
    tokens: &mut [u32],
    candidates: &[u32],
    confidences: &[f64],
    masked: &[usize],
    reveal: usize,
    policy: UnmaskPolicy,
    rng: &mut R,
) -> Result<()> {
    ensure!(candidates.len() == masked.len() && confidences.len() == masked.len(), Shape, "candidates must parallel masked positions");
    ensure!(reveal <= masked.len(), Precondition, "cannot reveal {reveal} of {} masked positions", masked.len());
    let mut order: Vec<usize> = (0..masked.len()).collect();
    match policy {
        UnmaskPolicy::HighConfidence => {
            // stable sort: ties resolve to the earlier position
            order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));
        }
        UnmaskPolicy::Random => {
            for i in 0..reveal {
                let j = rng.gen_range(i..order.len());
                order.swap(i, j);
            }
        }
    }
    for &k in &order[..reveal] {
        tokens[masked[k]] = candidates[k];
    }
    Ok(())
}

/// `x_hat + (sigma_next - sigma_hat) (x_hat - x_tilde) / sigma_hat`; a
/// zero `sigma_hat` returns the prediction.
pub fn euler_update(x_hat: f64, x_tilde: f64, sigma_hat: f64, sigma_next: f64) -> f64 {
    if sigma_hat <= 0.0 {
        return x_tilde;
    }
    if sigma_next == 0.0 {
        return x_tilde;
    }
    x_hat + (sigma_next - sigma_hat) * (x_hat - x_tilde) / sigma_hat
}

/// Generated sequences before detokenization; numerics are normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub tokens: Vec<Vec<u32>>,
    pub numerics: Vec<Vec<f64>>,
}

/// Run the coupled reverse process for `n` records. Record `i` draws all of
/// its randomness from its own stream keyed by `(seed, i)`.
pub fn sample<D: Denoiser + ?Sized>(model: &D, n: usize, config: &SamplerConfig) -> Result<Samples> {
    config.validate()?;
    let layout = model.layout();
    let schedule = model.noise_schedule()?;
    let disc = DiscretizedSchedule::new(&schedule, config.steps, &config.churn)?;
    let (len, m, v) = (layout.len(), layout.numeric.len(), model.vocab_size());
    let text = layout.text_positions();
    let g = text.len();
    let counts = reveal_counts(g, config.steps);
    let mut out = Samples { tokens: Vec::with_capacity(n), numerics: Vec::with_capacity(n) };
    let mut start = 0;
    while start < n {
        let bsz = config.batch_size.min(n - start);
        let mut rngs: Vec<_> = (start..start + bsz).map(|i| stream(config.seed, Domain::Sample, i as u64)).collect();
        let mut tokens = Vec::with_capacity(bsz * len);
        let mut x = Vec::with_capacity(bsz * m);
        for rng in rngs.iter_mut() {
            let mut seq = alloc::vec![MASK; len];
            seq[..layout.prompt.len()].copy_from_slice(&layout.prompt);
            for &p in &layout.numeric_positions() {
                seq[p] = NUM;
            }
            tokens.extend(seq);
            for j in 0..m {
                x.push(disc.sigma(config.steps, j) * normal(rng));
            }
        }
        let mut sig_hat = alloc::vec![0.0; bsz * m];
        for (k, t) in (1..=config.steps).rev().enumerate() {
            for (b, rng) in rngs.iter_mut().enumerate() {
                for j in 0..m {
                    let (s, sh) = (disc.sigma(t, j), disc.sigma_hat(t, j));
                    if sh > s {
                        x[b * m + j] += libm::sqrt(sh * sh - s * s) * normal(rng);
                    }
                    sig_hat[b * m + j] = sh;
                }
            }
            let (logits, pred) = model.denoise(&tokens, &x, &sig_hat, bsz)?;
            ensure!(logits.len() == bsz * g * v && pred.len() == bsz * m, Shape, "denoiser returned wrongly sized outputs");
            for (b, rng) in rngs.iter_mut().enumerate() {
                let seq = &mut tokens[b * len..(b + 1) * len];
                let masked: Vec<usize> = text.clone().filter(|&p| seq[p] == MASK).collect();
                let mut cands = Vec::with_capacity(masked.len());
                let mut confs = Vec::with_capacity(masked.len());
                for &p in &masked {
                    let row = &logits[(b * g + p - text.start) * v..(b * g + p - text.start + 1) * v];
                    let id = gumbel_sample(row, config.temperature, rng)?;
                    cands.push(id as u32);
                    confs.push(token_probability(row, config.temperature, id));
                }
                let reveal = counts[k].min(masked.len());
                unmask_step(seq, &cands, &confs, &masked, reveal, config.policy, rng)?;
                for j in 0..m {
                    let i = b * m + j;
                    x[i] = euler_update(x[i], pred[i], sig_hat[i], disc.sigma(t - 1, j));
                }
            }
        }
        for b in 0..bsz {
            out.tokens.push(tokens[b * len..(b + 1) * len].to_vec());
            out.numerics.push(x[b * m..(b + 1) * m].to_vec());
        }
        start += bsz;
    }
    Ok(out)
}

/// Detokenize and denormalize samples. Records that do not decode are
/// dropped and counted.
pub fn decode_samples(
    samples: &Samples,
    schema: &Schema,
    layout: &TokenLayout,
    vocab: &Vocabulary,
    normalizers: &[QuantileNormalizer],
) -> Result<(Table, usize)> {
    let mut table = Table::new(schema.clone());
    let mut invalid = 0;
    for (tokens, numerics) in samples.tokens.iter().zip(&samples.numerics) {
        match detokenize(tokens, numerics, schema, layout, vocab, normalizers) {
            Ok(row) => table.push_row(row)?,
            Err(Error::Shape(msg)) => return Err(Error::Shape(msg)),
            Err(_) => invalid += 1,
        }
    }
    Ok((table, invalid))
}

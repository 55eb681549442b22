use alloc::vec::Vec;
use rand::Rng;

use crate::error::{ensure, Result};
use crate::mdlm::{SerializedRecord, TokenLayout, MASK};
use crate::rng::normal;
use crate::schedules::{MaskSchedule, PowerMeanSchedule};

/// `x0 + sigma_i(t) * eps_i` with fresh standard normal `eps`, one per
/// feature. Returns the noisy values and the noise draws.
pub fn forward_noise_numeric<R: Rng + ?Sized>(x0: &[f64], t: f64, schedule: &PowerMeanSchedule, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure!(x0.len() == schedule.num_features(), Shape, "{} values for {} scheduled features", x0.len(), schedule.num_features());
    let eps: Vec<f64> = x0.iter().map(|_| normal(rng)).collect();
    let noisy = noise_with(x0, &eps, t, schedule)?;
    Ok((noisy, eps))
}

/// The same map with the noise supplied.
pub fn noise_with(x0: &[f64], eps: &[f64], t: f64, schedule: &PowerMeanSchedule) -> Result<Vec<f64>> {
    ensure!(eps.len() == x0.len(), Shape, "noise and values differ in length");
    x0.iter().zip(eps).enumerate().map(|(i, (&x, &e))| Ok(x + schedule.sigma_at(t, i)? * e)).collect()
}

/// Replace each maskable token with [MASK] independently with probability
/// `1 - alpha_bar(t)`. Prompt and numeric placeholders are never touched.
pub fn forward_mask_text<R: Rng + ?Sized>(
    tokens: &[u32],
    t: f64,
    schedule: MaskSchedule,
    layout: &TokenLayout,
    rng: &mut R,
) -> Result<(Vec<u32>, Vec<bool>)> {
    ensure!(tokens.len() == layout.len(), Shape, "sequence does not match layout");
    let p = 1.0 - schedule.alpha_bar(t)?;
    let mut out = tokens.to_vec();
    let mut mask = alloc::vec![false; tokens.len()];
    for pos in layout.text_positions() {
        if rng.gen::<f64>() < p {
            out[pos] = MASK;
            mask[pos] = true;
        }
    }
    Ok((out, mask))
}

/// A corrupted training batch. Every record has one `t` that drives both
/// its token masking and its numeric noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyBatch {
    pub batch: usize,
    pub len: usize,
    pub slots: usize,
    /// Clean token targets, `batch * len`.
    pub clean: Vec<u32>,
    /// Model input tokens with [MASK] at corrupted positions.
    pub tokens: Vec<u32>,
    pub mask: Vec<bool>,
    /// Clean normalized numerics, `batch * slots`.
    pub x0: Vec<f64>,
    /// Standard normal draws behind the numeric noise.
    pub eps: Vec<f64>,
    pub t: Vec<f64>,
}

impl NoisyBatch {
    /// Corrupt `records` with `t ~ U[0, 1]` per record.
    pub fn sample<R: Rng + ?Sized>(
        records: &[&SerializedRecord],
        layout: &TokenLayout,
        schedule: &PowerMeanSchedule,
        mask_schedule: MaskSchedule,
        rng: &mut R,
    ) -> Result<Self> {
        let ts: Vec<f64> = records.iter().map(|_| rng.gen::<f64>()).collect();
        Self::at_times(records, &ts, layout, schedule, mask_schedule, rng)
    }

    pub fn at_times<R: Rng + ?Sized>(
        records: &[&SerializedRecord],
        ts: &[f64],
        layout: &TokenLayout,
        schedule: &PowerMeanSchedule,
        mask_schedule: MaskSchedule,
        rng: &mut R,
    ) -> Result<Self> {
        ensure!(!records.is_empty(), Precondition, "empty batch");
        ensure!(ts.len() == records.len(), Shape, "one time per record required");
        let (len, slots) = (layout.len(), layout.numeric.len());
        let mut nb = NoisyBatch {
            batch: records.len(),
            len,
            slots,
            clean: Vec::with_capacity(records.len() * len),
            tokens: Vec::with_capacity(records.len() * len),
            mask: Vec::with_capacity(records.len() * len),
            x0: Vec::with_capacity(records.len() * slots),
            eps: Vec::with_capacity(records.len() * slots),
            t: ts.to_vec(),
        };
        for (rec, &t) in records.iter().zip(ts) {
            ensure!(rec.numerics.len() == slots, Shape, "record has {} numerics, layout {}", rec.numerics.len(), slots);
            let (tokens, mask) = forward_mask_text(&rec.tokens, t, mask_schedule, layout, rng)?;
            let (_, eps) = forward_noise_numeric(&rec.numerics, t, schedule, rng)?;
            nb.clean.extend_from_slice(&rec.tokens);
            nb.tokens.extend(tokens);
            nb.mask.extend(mask);
            nb.x0.extend_from_slice(&rec.numerics);
            nb.eps.extend(eps);
        }
        Ok(nb)
    }

    /// Noisy numerics `x0 + sigma(t) eps` under `schedule`.
    pub fn x_hat(&self, schedule: &PowerMeanSchedule) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x0.len());
        for b in 0..self.batch {
            for j in 0..self.slots {
                let k = b * self.slots + j;
                out.push(self.x0[k] + schedule.sigma(self.t[b], j) * self.eps[k]);
            }
        }
        out
    }

    /// `sigma_j(t_b)` for every record and slot.
    pub fn sigmas(&self, schedule: &PowerMeanSchedule) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x0.len());
        for b in 0..self.batch {
            for j in 0..self.slots {
                out.push(schedule.sigma(self.t[b], j));
            }
        }
        out
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

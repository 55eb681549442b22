use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::forward::NoisyBatch;
use crate::error::{ensure, Error, Result};
use crate::mdlm::{is_special, Backbone, BackboneConfig, EmbedCache, EmbedInput, ForwardCache, TokenLayout, PAD};
use crate::nn::{join, Module, Param};
use crate::numcodec::{DecodeCache, EncodeCache, FloatCodec, NumericProjectors, ProjDecCache, ProjEncCache};
use crate::schedules::{MaskSchedule, PowerMeanSchedule, DEFAULT_RHO, SIGMA_MAX, SIGMA_MIN};
use crate::Scalar;

/// Bounds kept on learnable schedule shapes.
pub const RHO_RANGE: (f64, f64) = (0.2, 20.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    /// Projector dropout during training.
    pub dropout: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Initial (or fixed) power-mean shape for every numerical column.
    pub rho: f64,
    /// Train the per-column shapes through the numeric loss.
    pub learnable_rho: bool,
    pub mask_schedule: MaskSchedule,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::default(),
            dropout: 0.1,
            sigma_min: SIGMA_MIN,
            sigma_max: SIGMA_MAX,
            rho: DEFAULT_RHO,
            learnable_rho: false,
            mask_schedule: MaskSchedule::Linear,
        }
    }
}

/// Per-step loss terms; `total = text + lambda * num`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub text: f64,
    pub num: f64,
    pub lambda: f64,
    pub total: f64,
}

/// Whether the output head may emit a token. Content tokens and padding are
/// allowed; [MASK], [NUM] and the structural specials are not.
pub fn emittable(id: u32) -> bool {
    id == PAD || !is_special(id)
}

/// Frozen codec, projectors, backbone and noise-schedule shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionModel<S> {
    pub config: ModelConfig,
    pub layout: TokenLayout,
    pub codec: FloatCodec<S>,
    pub projectors: NumericProjectors<S>,
    pub backbone: Backbone<S>,
    /// One shape per numerical column.
    pub rho: Param<S>,
}

struct Tape<S> {
    enc: EncodeCache<S>,
    proj_e: ProjEncCache<S>,
    embed: EmbedCache<S>,
    fwd: ForwardCache<S>,
    hidden: Vec<S>,
    text_rows: Vec<usize>,
    text_hidden: Vec<S>,
    /// Softmax minus one-hot, already weighted.
    dlogits: Vec<S>,
    proj_d: ProjDecCache<S>,
    dec: DecodeCache<S>,
    dpred: Vec<S>,
}

impl<S: Scalar> DiffusionModel<S> {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, layout: TokenLayout, vocab_size: usize, mut codec: FloatCodec<S>, rng: &mut R) -> Result<Self> {
        config.backbone.validate()?;
        ensure!(layout.len() <= config.backbone.max_len, Config, "layout length {} exceeds max length {}", layout.len(), config.backbone.max_len);
        ensure!(config.sigma_min > 0.0 && config.sigma_min < config.sigma_max, Config, "need 0 < sigma_min < sigma_max");
        ensure!((0.0..1.0).contains(&config.dropout), Config, "dropout must be in [0, 1)");
        if !codec.is_frozen() {
            codec.freeze();
        }
        let mut backbone = Backbone::new(rng, config.backbone, vocab_size)?;
        backbone.noise.sigma_min = config.sigma_min;
        backbone.noise.sigma_max = config.sigma_max;
        let projectors = NumericProjectors::new(rng, codec.latent_dim(), config.backbone.hidden, config.dropout);
        let mut rho = Param::filled(layout.numeric.len(), S::of(config.rho));
        rho.trainable = config.learnable_rho;
        let model = Self { config, layout, codec, projectors, backbone, rho };
        model.schedule()?;
        Ok(model)
    }

    pub fn slots(&self) -> usize {
        self.layout.numeric.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.backbone.vocab_size()
    }

    pub fn schedule(&self) -> Result<PowerMeanSchedule> {
        let rho = self.rho.value.iter().map(|r| r.as_f64()).collect();
        PowerMeanSchedule::new(self.config.sigma_min, self.config.sigma_max, rho)
    }

    /// Keep learnable shapes inside [`RHO_RANGE`].
    pub fn clamp_rho(&mut self) {
        for r in &mut self.rho.value {
            *r = S::of(r.as_f64().clamp(RHO_RANGE.0, RHO_RANGE.1));
        }
    }

    fn forward_tape(&self, nb: &NoisyBatch, elbo: bool, mut rng: Option<&mut (dyn RngCore + '_)>) -> Result<(LossReport, Tape<S>)> {
        ensure!(nb.len == self.layout.len() && nb.slots == self.slots(), Shape, "batch does not match the model layout");
        let schedule = self.schedule()?;
        let (b, len, m, d) = (nb.batch, nb.len, nb.slots, self.backbone.hidden());
        let x_hat = nb.x_hat(&schedule);
        let sigmas = nb.sigmas(&schedule);
        let xs: Vec<S> = x_hat.iter().map(|&x| S::of(x)).collect();
        let (lat, enc) = self.codec.encode_forward(&xs);
        let (num_emb, proj_e) = self.projectors.encode_forward(&lat, b * m, rng.as_deref_mut());
        let positions = self.layout.numeric_positions();
        let input = EmbedInput { tokens: &nb.tokens, batch: b, len, numeric_positions: &positions, numeric_latents: &num_emb, sigmas: &sigmas };
        let (emb, embed) = self.backbone.embed(&input)?;
        let (hidden, fwd) = self.backbone.forward(&emb, b, len)?;

        // text: cross-entropy at masked positions
        let text_rows: Vec<usize> = (0..b * len).filter(|&i| nb.mask[i]).collect();
        let mut text_hidden = Vec::with_capacity(text_rows.len() * d);
        for &r in &text_rows {
            text_hidden.extend_from_slice(&hidden[r * d..(r + 1) * d]);
        }
        let v = self.vocab_size();
        let mut logits = self.backbone.lm_head(&text_hidden, text_rows.len());
        let mut text = 0.0;
        let inv_b = 1.0 / b as f64;
        for (k, &r) in text_rows.iter().enumerate() {
            let row = &mut logits[k * v..(k + 1) * v];
            let target = nb.clean[r] as usize;
            let w = if elbo { self.config.mask_schedule.elbo_weight(nb.t[r / len]) } else { 1.0 };
            let mut mx = f64::NEG_INFINITY;
            for (id, l) in row.iter().enumerate() {
                if emittable(id as u32) {
                    mx = mx.max(l.as_f64());
                }
            }
            let mut z = 0.0;
            for (id, l) in row.iter_mut().enumerate() {
                let e = if emittable(id as u32) { libm::exp(l.as_f64() - mx) } else { 0.0 };
                z += e;
                *l = S::of(e);
            }
            let target_p = row[target].as_f64() / z;
            text += w * -libm::log(target_p.max(f64::MIN_POSITIVE));
            let scale = w * inv_b;
            for (id, g) in row.iter_mut().enumerate() {
                let p = g.as_f64() / z;
                let onehot = if id == target { 1.0 } else { 0.0 };
                *g = S::of(scale * (p - onehot));
            }
        }
        let text = text * inv_b;

        // numerics: squared error of the decoded prediction
        let mut num_hidden = Vec::with_capacity(b * m * d);
        for bi in 0..b {
            for &p in &positions {
                let r = bi * len + p;
                num_hidden.extend_from_slice(&hidden[r * d..(r + 1) * d]);
            }
        }
        let (lat_out, proj_d) = self.projectors.decode_forward(&num_hidden, b * m, rng.as_deref_mut());
        let (pred, dec) = self.codec.decode_forward(&lat_out);
        let mut num = 0.0;
        let mut dpred = Vec::with_capacity(pred.len());
        for (p, &x) in pred.iter().zip(&nb.x0) {
            let e = p.as_f64() - x;
            num += e * e;
            dpred.push(S::of(2.0 * e * inv_b));
        }
        let num = num * inv_b;
        if !(text.is_finite() && num.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("text loss {text}, numeric loss {num}")));
        }
        let report = LossReport { step: 0, text, num, lambda: 0.0, total: text };
        let tape = Tape { enc, proj_e, embed, fwd, hidden, text_rows, text_hidden, dlogits: logits, proj_d, dec, dpred };
        Ok((report, tape))
    }

    /// Loss without touching gradients (dropout off).
    pub fn loss(&self, nb: &NoisyBatch, lambda: f64, elbo: bool) -> Result<LossReport> {
        let (mut r, _) = self.forward_tape(nb, elbo, None)?;
        r.lambda = lambda;
        r.total = r.text + lambda * r.num;
        Ok(r)
    }

    /// Forward and backward pass; gradients are accumulated into every
    /// trainable parameter. `dropout_rng = None` disables dropout.
    pub fn loss_and_backward(&mut self, nb: &NoisyBatch, lambda: f64, elbo: bool, dropout_rng: Option<&mut (dyn RngCore + '_)>) -> Result<LossReport> {
        let (mut report, tape) = self.forward_tape(nb, elbo, dropout_rng)?;
        report.lambda = lambda;
        report.total = report.text + lambda * report.num;
        let (b, len, m, d) = (nb.batch, nb.len, nb.slots, self.backbone.hidden());
        let mut dhidden = alloc::vec![S::zero(); tape.hidden.len()];

        let dtext = self.backbone.lm_head_backward(&tape.text_hidden, &tape.dlogits, tape.text_rows.len());
        for (k, &r) in tape.text_rows.iter().enumerate() {
            for (acc, &g) in dhidden[r * d..(r + 1) * d].iter_mut().zip(&dtext[k * d..(k + 1) * d]) {
                *acc += g;
            }
        }
        let lam = S::of(lambda);
        let dpred: Vec<S> = tape.dpred.iter().map(|&g| g * lam).collect();
        let dlat_out = self.codec.decode_backward(&tape.dec, &dpred);
        let dnum_hidden = self.projectors.decode_backward(&tape.proj_d, &dlat_out);
        let positions = self.layout.numeric_positions();
        for bi in 0..b {
            for (j, &p) in positions.iter().enumerate() {
                let r = bi * len + p;
                let k = (bi * m + j) * d;
                for (acc, &g) in dhidden[r * d..(r + 1) * d].iter_mut().zip(&dnum_hidden[k..k + d]) {
                    *acc += g;
                }
            }
        }
        let demb = self.backbone.backward(&tape.fwd, &dhidden);
        let (dnum_emb, dsigma) = self.backbone.embed_backward(&tape.embed, &demb);
        let dlat = self.projectors.encode_backward(&tape.proj_e, &dnum_emb);
        let dx_hat = self.codec.encode_backward(&tape.enc, &dlat);
        if self.rho.trainable && m > 0 {
            let schedule = self.schedule()?;
            for bi in 0..b {
                for j in 0..m {
                    let k = bi * m + j;
                    // sigma enters through the noisy input and the noise-level embedding
                    let g = (dx_hat[k].as_f64() * nb.eps[k] + dsigma[k]) * schedule.dsigma_drho(nb.t[bi], j);
                    self.rho.grad[j] += S::of(g);
                }
            }
        }
        Ok(report)
    }

    /// Denoiser outputs for a batch of partially masked sequences: logits at
    /// the text positions (`batch * G * vocab`, non-emittable tokens set to
    /// `-inf`) and numeric predictions in normalized space.
    pub fn predict(&self, tokens: &[u32], x_hat: &[f64], sigmas: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let (len, m, d) = (self.layout.len(), self.slots(), self.backbone.hidden());
        ensure!(tokens.len() == batch * len && x_hat.len() == batch * m && sigmas.len() == batch * m, Shape, "prediction inputs do not match the layout");
        let xs: Vec<S> = x_hat.iter().map(|&x| S::of(x)).collect();
        let lat = self.codec.encode(&xs);
        let (num_emb, _) = self.projectors.encode_forward(&lat, batch * m, None);
        let positions = self.layout.numeric_positions();
        let input = EmbedInput { tokens, batch, len, numeric_positions: &positions, numeric_latents: &num_emb, sigmas };
        let (emb, _) = self.backbone.embed(&input)?;
        let (hidden, _) = self.backbone.forward(&emb, batch, len)?;
        let text = self.layout.text_positions();
        let g = text.len();
        let mut text_hidden = Vec::with_capacity(batch * g * d);
        let mut num_hidden = Vec::with_capacity(batch * m * d);
        for bi in 0..batch {
            for p in text.clone() {
                let r = bi * len + p;
                text_hidden.extend_from_slice(&hidden[r * d..(r + 1) * d]);
            }
            for &p in &positions {
                let r = bi * len + p;
                num_hidden.extend_from_slice(&hidden[r * d..(r + 1) * d]);
            }
        }
        let v = self.vocab_size();
        let logits: Vec<f64> = self
            .backbone
            .lm_head(&text_hidden, batch * g)
            .iter()
            .enumerate()
            .map(|(i, l)| if emittable((i % v) as u32) { l.as_f64() } else { f64::NEG_INFINITY })
            .collect();
        let lat_out = self.projectors.decode_forward(&num_hidden, batch * m, None).0;
        let pred = self.codec.decode(&lat_out).iter().map(|p| p.as_f64()).collect();
        Ok((logits, pred))
    }

    pub fn cast<T: Scalar>(&self) -> DiffusionModel<T> {
        DiffusionModel {
            config: self.config.clone(),
            layout: self.layout.clone(),
            codec: self.codec.cast(),
            projectors: self.projectors.cast(),
            backbone: self.backbone.cast(),
            rho: self.rho.cast(),
        }
    }
}

impl<S: Scalar> Module<S> for DiffusionModel<S> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param<S>)) {
        self.codec.visit(&join(prefix, "codec"), f);
        self.projectors.visit(&join(prefix, "projectors"), f);
        self.backbone.visit(&join(prefix, "backbone"), f);
        f(join(prefix, "schedule.rho"), &self.rho);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<S>)) {
        self.codec.visit_mut(&join(prefix, "codec"), f);
        self.projectors.visit_mut(&join(prefix, "projectors"), f);
        self.backbone.visit_mut(&join(prefix, "backbone"), f);
        f(join(prefix, "schedule.rho"), &mut self.rho);
    }
}

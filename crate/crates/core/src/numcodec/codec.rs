use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::nn::{join, silu, silu_grad, zero_grad, AdamW, AdamWConfig, LayerNorm, LayerNormCache, Linear, LinearCache, LrSchedule, Module, Param};
use crate::Scalar;

/// Scalar-to-vector encoder (`1 -> h -> h -> r`, SiLU) with a
/// LayerNorm + linear decoder back to a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatCodec<S> {
    pub enc1: Linear<S>,
    pub enc2: Linear<S>,
    pub enc3: Linear<S>,
    pub dec_norm: LayerNorm<S>,
    pub dec: Linear<S>,
    frozen: bool,
}

pub struct EncodeCache<S> {
    c1: LinearCache<S>,
    z1: Vec<S>,
    c2: LinearCache<S>,
    z2: Vec<S>,
    c3: LinearCache<S>,
}

pub struct DecodeCache<S> {
    norm: LayerNormCache<S>,
    lin: LinearCache<S>,
}

fn silu_vec<S: Scalar>(x: &[S]) -> Vec<S> {
    x.iter().map(|&v| silu(v)).collect()
}

fn silu_back<S: Scalar>(x: &[S], dy: &[S]) -> Vec<S> {
    x.iter().zip(dy).map(|(&v, &d)| d * silu_grad(v)).collect()
}

impl<S: Scalar> FloatCodec<S> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, latent: usize) -> Self {
        let h = Self::hidden_width(latent);
        Self {
            enc1: Linear::new_uniform(rng, 1, h, true),
            enc2: Linear::new_uniform(rng, h, h, true),
            enc3: Linear::new_uniform(rng, h, latent, true),
            dec_norm: LayerNorm::new(latent),
            dec: Linear::new_uniform(rng, latent, 1, true),
            frozen: false,
        }
    }

    /// `max(floor(sqrt(r)), 4)`
    pub fn hidden_width(latent: usize) -> usize {
        (libm::floor(libm::sqrt(latent as f64)) as usize).max(4)
    }

    pub fn latent_dim(&self) -> usize {
        self.enc3.out_dim()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Stop accumulating gradients; parameters are never touched by an
    /// optimizer afterwards.
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.set_trainable(false);
    }

    pub fn encode_forward(&self, xs: &[S]) -> (Vec<S>, EncodeCache<S>) {
        let n = xs.len();
        let (z1, c1) = self.enc1.forward(xs, n);
        let a1 = silu_vec(&z1);
        let (z2, c2) = self.enc2.forward(&a1, n);
        let a2 = silu_vec(&z2);
        let (lat, c3) = self.enc3.forward(&a2, n);
        (lat, EncodeCache { c1, z1, c2, z2, c3 })
    }

    pub fn encode(&self, xs: &[S]) -> Vec<S> {
        self.encode_forward(xs).0
    }

    /// Gradient with respect to the inputs; parameter gradients are only
    /// accumulated while unfrozen.
    pub fn encode_backward(&mut self, cache: &EncodeCache<S>, dlat: &[S]) -> Vec<S> {
        let da2 = self.enc3.backward(&cache.c3, dlat);
        let dz2 = silu_back(&cache.z2, &da2);
        let da1 = self.enc2.backward(&cache.c2, &dz2);
        let dz1 = silu_back(&cache.z1, &da1);
        self.enc1.backward(&cache.c1, &dz1)
    }

    pub fn decode_forward(&self, latents: &[S]) -> (Vec<S>, DecodeCache<S>) {
        let rows = latents.len() / self.latent_dim();
        let (n, norm) = self.dec_norm.forward(latents);
        let (y, lin) = self.dec.forward(&n, rows);
        (y, DecodeCache { norm, lin })
    }

    pub fn decode(&self, latents: &[S]) -> Vec<S> {
        self.decode_forward(latents).0
    }

    pub fn decode_backward(&mut self, cache: &DecodeCache<S>, dy: &[S]) -> Vec<S> {
        let dn = self.dec.backward(&cache.lin, dy);
        self.dec_norm.backward(&cache.norm, &dn)
    }

    pub fn round_trip(&self, xs: &[S]) -> Vec<S> {
        self.decode(&self.encode(xs))
    }

    pub fn cast<T: Scalar>(&self) -> FloatCodec<T> {
        FloatCodec {
            enc1: self.enc1.cast(),
            enc2: self.enc2.cast(),
            enc3: self.enc3.cast(),
            dec_norm: self.dec_norm.cast(),
            dec: self.dec.cast(),
            frozen: self.frozen,
        }
    }

    /// Used when restoring a codec from a checkpoint.
    pub fn set_frozen_flag(&mut self, frozen: bool) {
        self.frozen = frozen;
        self.set_trainable(!frozen);
    }
}

impl<S: Scalar> Module<S> for FloatCodec<S> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param<S>)) {
        self.enc1.visit(&join(prefix, "enc1"), f);
        self.enc2.visit(&join(prefix, "enc2"), f);
        self.enc3.visit(&join(prefix, "enc3"), f);
        self.dec_norm.visit(&join(prefix, "dec_norm"), f);
        self.dec.visit(&join(prefix, "dec"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<S>)) {
        self.enc1.visit_mut(&join(prefix, "enc1"), f);
        self.enc2.visit_mut(&join(prefix, "enc2"), f);
        self.enc3.visit_mut(&join(prefix, "enc3"), f);
        self.dec_norm.visit_mut(&join(prefix, "dec_norm"), f);
        self.dec.visit_mut(&join(prefix, "dec"), f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecPretrainConfig {
    pub latent_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr` (cosine decay).
    pub final_lr_ratio: f64,
    pub grid_points: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub mean_tolerance: f64,
    pub max_tolerance: f64,
}

impl Default for CodecPretrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            epochs: 30_000,
            lr: 3e-2,
            final_lr_ratio: 1e-3,
            grid_points: 2001,
            grid_min: -4.0,
            grid_max: 4.0,
            mean_tolerance: 1e-3,
            max_tolerance: 1e-2,
        }
    }
}

impl CodecPretrainConfig {
    pub fn grid(&self) -> Vec<f64> {
        value_grid(self.grid_min, self.grid_max, self.grid_points)
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn value_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Mean and max absolute round-trip error over `grid`.
pub fn round_trip_error<S: Scalar>(codec: &FloatCodec<S>, grid: &[f64]) -> (f64, f64) {
    let xs: Vec<S> = grid.iter().map(|&x| S::of(x)).collect();
    let ys = codec.round_trip(&xs);
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (x, y) in grid.iter().zip(&ys) {
        let e = libm::fabs(y.as_f64() - x);
        let e = if e.is_finite() { e } else { f64::INFINITY };
        sum += e;
        max = max.max(e);
    }
    (sum / grid.len().max(1) as f64, max)
}

/// Fit a fresh codec to reproduce every grid value through encode/decode
/// (full-batch Adam on the mean squared round-trip error, cosine-decayed
/// learning rate), then freeze it.
///
/// Fails with [`Error::NotConverged`] if the final error exceeds the
/// configured tolerances.
pub fn pretrain_codec<S: Scalar, R: Rng + ?Sized>(cfg: &CodecPretrainConfig, grid: &[f64], rng: &mut R) -> Result<FloatCodec<S>> {
    let codec = fit_codec(cfg, grid, rng)?;
    let (mean_error, max_error) = round_trip_error(&codec, grid);
    if !(mean_error <= cfg.mean_tolerance && max_error <= cfg.max_tolerance) {
        return Err(Error::NotConverged { mean_error, max_error });
    }
    Ok(codec)
}

/// Like [`pretrain_codec`] without the tolerance gate.
pub fn fit_codec<S: Scalar, R: Rng + ?Sized>(cfg: &CodecPretrainConfig, grid: &[f64], rng: &mut R) -> Result<FloatCodec<S>> {
    ensure!(cfg.latent_dim >= 1, Config, "codec latent dimension must be positive");
    ensure!(grid.len() >= 2, Precondition, "codec grid needs at least two points");
    ensure!(grid.iter().all(|x| x.is_finite()), Precondition, "codec grid must be finite");
    let mut codec = FloatCodec::<S>::new(rng, cfg.latent_dim);
    let xs: Vec<S> = grid.iter().map(|&x| S::of(x)).collect();
    let schedule = LrSchedule::Cosine { total: cfg.epochs as u64, floor: cfg.final_lr_ratio };
    let adam = AdamWConfig { lr: cfg.lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 };
    let mut opt = AdamW::new(adam, schedule);
    let scale = S::of(2.0 / xs.len() as f64);
    for _ in 0..cfg.epochs {
        zero_grad(&mut codec);
        let (lat, ec) = codec.encode_forward(&xs);
        let (ys, dc) = codec.decode_forward(&lat);
        let dy: Vec<S> = ys.iter().zip(&xs).map(|(&y, &x)| scale * (y - x)).collect();
        let dlat = codec.decode_backward(&dc, &dy);
        codec.encode_backward(&ec, &dlat);
        opt.step(&mut codec);
    }
    codec.freeze();
    Ok(codec)
}

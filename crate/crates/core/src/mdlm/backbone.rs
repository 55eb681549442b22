use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::noise::{NoiseCache, NoiseEmbedding};
use crate::error::{ensure, Result};
use crate::nn::{init_normal, join, BlockCache, LayerNorm, LayerNormCache, LoraConfig, Module, Param, TransformerBlock};
use crate::scalar::{gemm, MatMut, MatRef};
use crate::schedules::{SIGMA_MAX, SIGMA_MIN};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ff: usize,
    pub max_len: usize,
    /// Low-rank adapters on attention and feed-forward linears; rank 0
    /// trains every parameter.
    pub lora: LoraConfig,
    pub init_std: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self { layers: 4, hidden: 128, heads: 4, ff: 512, max_len: 256, lora: LoraConfig::default(), init_std: 0.02 }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.hidden > 0 && self.heads > 0, Config, "hidden size and heads must be positive");
        ensure!(self.hidden % self.heads == 0, Config, "hidden size {} is not divisible by {} heads", self.hidden, self.heads);
        ensure!(self.hidden % 2 == 0, Config, "hidden size must be even");
        ensure!(self.ff > 0 && self.max_len > 0, Config, "feed-forward width and max length must be positive");
        Ok(())
    }
}

/// Bidirectional transformer over a fixed token layout with a tied LM head.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone<S> {
    pub config: BackboneConfig,
    /// `vocab x hidden`, shared with the output head.
    pub token_emb: Param<S>,
    pub head_bias: Param<S>,
    /// `max_len x hidden`
    pub pos_emb: Param<S>,
    pub noise: NoiseEmbedding<S>,
    pub blocks: Vec<TransformerBlock<S>>,
    pub final_norm: LayerNorm<S>,
    vocab: usize,
}

/// Inputs to [`Backbone::embed`]. Numeric tensors are in record-major slot
/// order: `numeric_latents` is `batch * slots * hidden`, `sigmas` is
/// `batch * slots`.
pub struct EmbedInput<'a, S> {
    pub tokens: &'a [u32],
    pub batch: usize,
    pub len: usize,
    pub numeric_positions: &'a [usize],
    pub numeric_latents: &'a [S],
    pub sigmas: &'a [f64],
}

pub struct EmbedCache<S> {
    tokens: Vec<u32>,
    batch: usize,
    len: usize,
    positions: Vec<usize>,
    noise: Option<NoiseCache<S>>,
}

pub struct ForwardCache<S> {
    blocks: Vec<BlockCache<S>>,
    norm: LayerNormCache<S>,
}

impl<S: Scalar> Backbone<S> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, config: BackboneConfig, vocab: usize) -> Result<Self> {
        config.validate()?;
        let (d, std) = (config.hidden, config.init_std);
        let token_emb = Param::new(init_normal(rng, vocab * d, std), [vocab, d]);
        let pos_emb = Param::new(init_normal(rng, config.max_len * d, std), [config.max_len, d]);
        let noise = NoiseEmbedding::new(rng, d, SIGMA_MIN, SIGMA_MAX, std);
        let blocks = (0..config.layers).map(|_| TransformerBlock::new(rng, d, config.heads, config.ff, std)).collect();
        Ok(Self {
            config,
            token_emb,
            head_bias: Param::zeros(vocab),
            pos_emb,
            noise,
            blocks,
            final_norm: LayerNorm::new(d),
            vocab,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    /// Attach low-rank adapters per `config.lora` and freeze everything in
    /// the transformer stack except the adapters.
    pub fn attach_adapters<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let cfg = self.config.lora;
        if cfg.rank == 0 {
            return;
        }
        for b in &mut self.blocks {
            b.attach_adapters(rng, cfg);
        }
        self.token_emb.trainable = false;
        self.head_bias.trainable = false;
        self.pos_emb.trainable = false;
        self.final_norm.set_trainable(false);
    }

    /// Token embeddings at text positions; projected numeric latents plus
    /// the noise embedding at numeric positions; positional embeddings
    /// everywhere.
    pub fn embed(&self, input: &EmbedInput<'_, S>) -> Result<(Vec<S>, EmbedCache<S>)> {
        let d = self.config.hidden;
        let (batch, len) = (input.batch, input.len);
        let m = input.numeric_positions.len();
        ensure!(len <= self.config.max_len, Shape, "sequence length {len} exceeds maximum {}", self.config.max_len);
        ensure!(input.tokens.len() == batch * len, Shape, "expected {} tokens, got {}", batch * len, input.tokens.len());
        ensure!(input.numeric_latents.len() == batch * m * d, Shape, "expected {} numeric latents for {m} slots", batch * m);
        ensure!(input.sigmas.len() == batch * m, Shape, "expected {} noise levels", batch * m);
        ensure!(input.numeric_positions.iter().all(|&p| p < len), Shape, "numeric position out of range");
        let mut is_num = alloc::vec![false; len];
        for &p in input.numeric_positions {
            is_num[p] = true;
        }
        let mut emb = alloc::vec![S::zero(); batch * len * d];
        for b in 0..batch {
            for p in 0..len {
                let row = &mut emb[(b * len + p) * d..(b * len + p + 1) * d];
                row.copy_from_slice(&self.pos_emb.value[p * d..(p + 1) * d]);
                if !is_num[p] {
                    let tok = input.tokens[b * len + p] as usize;
                    ensure!(tok < self.vocab, Shape, "token id {tok} outside vocabulary");
                    for (e, &w) in row.iter_mut().zip(&self.token_emb.value[tok * d..(tok + 1) * d]) {
                        *e += w;
                    }
                }
            }
        }
        let noise = if m > 0 {
            let (ne, cache) = self.noise.forward(input.sigmas);
            for b in 0..batch {
                for (j, &p) in input.numeric_positions.iter().enumerate() {
                    let row = &mut emb[(b * len + p) * d..(b * len + p + 1) * d];
                    let k = (b * m + j) * d;
                    for i in 0..d {
                        row[i] += input.numeric_latents[k + i] + ne[k + i];
                    }
                }
            }
            Some(cache)
        } else {
            None
        };
        let cache = EmbedCache { tokens: input.tokens.to_vec(), batch, len, positions: input.numeric_positions.to_vec(), noise };
        Ok((emb, cache))
    }

    /// Accumulate embedding gradients; returns the gradients with respect to
    /// the numeric latents and to the noise levels.
    pub fn embed_backward(&mut self, cache: &EmbedCache<S>, demb: &[S]) -> (Vec<S>, Vec<f64>) {
        let d = self.config.hidden;
        let (batch, len, m) = (cache.batch, cache.len, cache.positions.len());
        let mut is_num = alloc::vec![false; len];
        for &p in &cache.positions {
            is_num[p] = true;
        }
        for b in 0..batch {
            for p in 0..len {
                let g = &demb[(b * len + p) * d..(b * len + p + 1) * d];
                if self.pos_emb.trainable {
                    for (acc, &v) in self.pos_emb.grad[p * d..(p + 1) * d].iter_mut().zip(g) {
                        *acc += v;
                    }
                }
                if !is_num[p] && self.token_emb.trainable {
                    let tok = cache.tokens[b * len + p] as usize;
                    for (acc, &v) in self.token_emb.grad[tok * d..(tok + 1) * d].iter_mut().zip(g) {
                        *acc += v;
                    }
                }
            }
        }
        let mut dlat = alloc::vec![S::zero(); batch * m * d];
        for b in 0..batch {
            for (j, &p) in cache.positions.iter().enumerate() {
                let k = (b * m + j) * d;
                dlat[k..k + d].copy_from_slice(&demb[(b * len + p) * d..(b * len + p + 1) * d]);
            }
        }
        let dsigma = match &cache.noise {
            Some(nc) => self.noise.backward(nc, &dlat),
            None => Vec::new(),
        };
        (dlat, dsigma)
    }

    /// Transformer stack and final norm: `batch * len * hidden` states.
    pub fn forward(&self, emb: &[S], batch: usize, len: usize) -> Result<(Vec<S>, ForwardCache<S>)> {
        ensure!(len <= self.config.max_len, Shape, "sequence length {len} exceeds maximum {}", self.config.max_len);
        ensure!(emb.len() == batch * len * self.config.hidden, Shape, "embedding buffer has wrong size");
        let mut h = emb.to_vec();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, c) = block.forward(&h, batch, len);
            caches.push(c);
            h = next;
        }
        let (out, norm) = self.final_norm.forward(&h);
        Ok((out, ForwardCache { blocks: caches, norm }))
    }

    pub fn backward(&mut self, cache: &ForwardCache<S>, dhidden: &[S]) -> Vec<S> {
        let mut g = self.final_norm.backward(&cache.norm, dhidden);
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = block.backward(c, &g);
        }
        g
    }

    /// Tied output head: `hidden . E^T + b` for `rows` hidden vectors.
    pub fn lm_head(&self, hidden: &[S], rows: usize) -> Vec<S> {
        let (d, v) = (self.config.hidden, self.vocab);
        let mut logits = alloc::vec![S::zero(); rows * v];
        for row in logits.chunks_mut(v) {
            row.copy_from_slice(&self.head_bias.value);
        }
        gemm(S::one(), MatRef::new(hidden, rows, d), MatRef::new(&self.token_emb.value, v, d).t(), S::one(), MatMut::new(&mut logits, rows, v));
        logits
    }

    pub fn lm_head_backward(&mut self, hidden: &[S], dlogits: &[S], rows: usize) -> Vec<S> {
        let (d, v) = (self.config.hidden, self.vocab);
        if self.head_bias.trainable {
            for row in dlogits.chunks(v) {
                for (g, &x) in self.head_bias.grad.iter_mut().zip(row) {
                    *g += x;
                }
            }
        }
        if self.token_emb.trainable {
            gemm(S::one(), MatRef::new(dlogits, rows, v).t(), MatRef::new(hidden, rows, d), S::one(), MatMut::new(&mut self.token_emb.grad, v, d));
        }
        let mut dh = alloc::vec![S::zero(); rows * d];
        gemm(S::one(), MatRef::new(dlogits, rows, v), MatRef::new(&self.token_emb.value, v, d), S::zero(), MatMut::new(&mut dh, rows, d));
        dh
    }

    pub fn cast<T: Scalar>(&self) -> Backbone<T> {
        Backbone {
            config: self.config,
            token_emb: self.token_emb.cast(),
            head_bias: self.head_bias.cast(),
            pos_emb: self.pos_emb.cast(),
            noise: self.noise.cast(),
            blocks: self.blocks.iter().map(TransformerBlock::cast).collect(),
            final_norm: self.final_norm.cast(),
            vocab: self.vocab,
        }
    }
}

impl<S: Scalar> Module<S> for Backbone<S> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param<S>)) {
        f(join(prefix, "token_emb"), &self.token_emb);
        f(join(prefix, "head_bias"), &self.head_bias);
        f(join(prefix, "pos_emb"), &self.pos_emb);
        self.noise.visit(&join(prefix, "noise"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &alloc::format!("blocks.{i}")), f);
        }
        self.final_norm.visit(&join(prefix, "final_norm"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<S>)) {
        f(join(prefix, "token_emb"), &mut self.token_emb);
        f(join(prefix, "head_bias"), &mut self.head_bias);
        f(join(prefix, "pos_emb"), &mut self.pos_emb);
        self.noise.visit_mut(&join(prefix, "noise"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &alloc::format!("blocks.{i}")), f);
        }
        self.final_norm.visit_mut(&join(prefix, "final_norm"), f);
    }
}

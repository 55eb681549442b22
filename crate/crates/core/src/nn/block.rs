use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

use super::{add_assign, join, Activation, AttentionCache, LayerNorm, LayerNormCache, Linear, LinearCache, LoraConfig, Module, MultiHeadAttention, Param};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward<S> {
    pub up: Linear<S>,
    pub down: Linear<S>,
    act: Activation,
}

pub struct FeedForwardCache<S> {
    up: LinearCache<S>,
    pre_act: Vec<S>,
    down: LinearCache<S>,
}

impl<S: Scalar> FeedForward<S> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, dim: usize, hidden: usize, std: f64) -> Self {
        Self {
            up: Linear::new_normal(rng, dim, hidden, std),
            down: Linear::new_normal(rng, hidden, dim, std),
            act: Activation::Gelu,
        }
    }

    pub fn forward(&self, x: &[S], rows: usize) -> (Vec<S>, FeedForwardCache<S>) {
        let (pre_act, up) = self.up.forward(x, rows);
        let a = self.act.forward(&pre_act);
        let (y, down) = self.down.forward(&a, rows);
        (y, FeedForwardCache { up, pre_act, down })
    }

    pub fn backward(&mut self, cache: &FeedForwardCache<S>, dy: &[S]) -> Vec<S> {
        let da = self.down.backward(&cache.down, dy);
        let dpre = self.act.backward(&cache.pre_act, &da);
        self.up.backward(&cache.up, &dpre)
    }
}

/// Pre-norm transformer block: `x + attn(ln(x))`, then `x + ffn(ln(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerBlock<S> {
    pub attn_norm: LayerNorm<S>,
    pub attn: MultiHeadAttention<S>,
    pub ffn_norm: LayerNorm<S>,
    pub ffn: FeedForward<S>,
}

pub struct BlockCache<S> {
    ln1: LayerNormCache<S>,
    attn: AttentionCache<S>,
    ln2: LayerNormCache<S>,
    ffn: FeedForwardCache<S>,
}

impl<S: Scalar> TransformerBlock<S> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, dim: usize, heads: usize, ff: usize, std: f64) -> Self {
        Self {
            attn_norm: LayerNorm::new(dim),
            attn: MultiHeadAttention::new(rng, dim, heads, std),
            ffn_norm: LayerNorm::new(dim),
            ffn: FeedForward::new(rng, dim, ff, std),
        }
    }

    pub fn attach_adapters<R: Rng + ?Sized>(&mut self, rng: &mut R, cfg: LoraConfig) {
        if cfg.rank == 0 {
            return;
        }
        self.attn.attach_adapters(rng, cfg);
        self.ffn.up.attach_adapter(rng, cfg);
        self.ffn.down.attach_adapter(rng, cfg);
        self.attn_norm.set_trainable(false);
        self.ffn_norm.set_trainable(false);
    }

    pub fn merge_adapters(&mut self) {
        self.attn.merge_adapters();
        self.ffn.up.merge_adapter();
        self.ffn.down.merge_adapter();
        self.attn_norm.set_trainable(true);
        self.ffn_norm.set_trainable(true);
    }

    pub fn forward(&self, x: &[S], batch: usize, len: usize) -> (Vec<S>, BlockCache<S>) {
        let rows = batch * len;
        let (n1, ln1) = self.attn_norm.forward(x);
        let (a, attn) = self.attn.forward(&n1, batch, len);
        let mut h = x.to_vec();
        add_assign(&mut h, &a);
        let (n2, ln2) = self.ffn_norm.forward(&h);
        let (f, ffn) = self.ffn.forward(&n2, rows);
        add_assign(&mut h, &f);
        (h, BlockCache { ln1, attn, ln2, ffn })
    }

    pub fn backward(&mut self, cache: &BlockCache<S>, dy: &[S]) -> Vec<S> {
        let dn2 = self.ffn.backward(&cache.ffn, dy);
        let mut dh = self.ffn_norm.backward(&cache.ln2, &dn2);
        add_assign(&mut dh, dy);
        let dn1 = self.attn.backward(&cache.attn, &dh);
        let mut dx = self.attn_norm.backward(&cache.ln1, &dn1);
        add_assign(&mut dx, &dh);
        dx
    }

    pub fn cast<T: Scalar>(&self) -> TransformerBlock<T> {
        TransformerBlock {
            attn_norm: self.attn_norm.cast(),
            attn: self.attn.cast(),
            ffn_norm: self.ffn_norm.cast(),
            ffn: FeedForward { up: self.ffn.up.cast(), down: self.ffn.down.cast(), act: self.ffn.act },
        }
    }
}

impl<S: Scalar> Module<S> for TransformerBlock<S> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param<S>)) {
        self.attn_norm.visit(&join(prefix, "attn_norm"), f);
        self.attn.visit(&join(prefix, "attn"), f);
        self.ffn_norm.visit(&join(prefix, "ffn_norm"), f);
        self.ffn.up.visit(&join(prefix, "ffn.up"), f);
        self.ffn.down.visit(&join(prefix, "ffn.down"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<S>)) {
        self.attn_norm.visit_mut(&join(prefix, "attn_norm"), f);
        self.attn.visit_mut(&join(prefix, "attn"), f);
        self.ffn_norm.visit_mut(&join(prefix, "ffn_norm"), f);
        self.ffn.up.visit_mut(&join(prefix, "ffn.up"), f);
        self.ffn.down.visit_mut(&join(prefix, "ffn.down"), f);
    }
}

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

use super::{join, softmax_rows, Linear, LinearCache, LoraConfig, Module, Param};
use crate::scalar::{gemm, MatMut, MatRef};
use crate::Scalar;
#[allow(unused_imports)]
use num_traits::Float;

/// Full (bidirectional) multi-head self-attention over fixed-length
/// sequences packed as `batch * len` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention<S> {
    pub query: Linear<S>,
    pub key: Linear<S>,
    pub value: Linear<S>,
    pub output: Linear<S>,
    heads: usize,
    dim: usize,
}

pub struct AttentionCache<S> {
    q: Vec<S>,
    k: Vec<S>,
    v: Vec<S>,
    /// `batch * heads * len * len` attention weights.
    probs: Vec<S>,
    q_cache: LinearCache<S>,
    k_cache: LinearCache<S>,
    v_cache: LinearCache<S>,
    o_cache: LinearCache<S>,
    batch: usize,
    len: usize,
}

impl<S: Scalar> MultiHeadAttention<S> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, dim: usize, heads: usize, std: f64) -> Self {
        assert!(heads > 0 && dim % heads == 0, "hidden size must divide into heads");
        Self {
            query: Linear::new_normal(rng, dim, dim, std),
            key: Linear::new_normal(rng, dim, dim, std),
            value: Linear::new_normal(rng, dim, dim, std),
            output: Linear::new_normal(rng, dim, dim, std),
            heads,
            dim,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn attach_adapters<R: Rng + ?Sized>(&mut self, rng: &mut R, cfg: LoraConfig) {
        for l in [&mut self.query, &mut self.key, &mut self.value, &mut self.output] {
            l.attach_adapter(rng, cfg);
        }
    }

    pub fn merge_adapters(&mut self) {
        for l in [&mut self.query, &mut self.key, &mut self.value, &mut self.output] {
            l.merge_adapter();
        }
    }

    pub fn forward(&self, x: &[S], batch: usize, len: usize) -> (Vec<S>, AttentionCache<S>) {
        let rows = batch * len;
        let (q, q_cache) = self.query.forward(x, rows);
        let (k, k_cache) = self.key.forward(x, rows);
        let (v, v_cache) = self.value.forward(x, rows);
        let (d, h) = (self.dim, self.heads);
        let dh = d / h;
        let scale = S::of(1.0 / (dh as f64).sqrt());
        let mut probs = alloc::vec![S::zero(); batch * h * len * len];
        let mut ctx = alloc::vec![S::zero(); rows * d];
        for b in 0..batch {
            for head in 0..h {
                let off = b * len * d + head * dh;
                let p = &mut probs[(b * h + head) * len * len..(b * h + head + 1) * len * len];
                gemm(
                    scale,
                    MatRef::strided(&q[off..], len, dh, d, 1),
                    MatRef::strided(&k[off..], len, dh, d, 1).t(),
                    S::zero(),
                    MatMut::new(p, len, len),
                );
                softmax_rows(p, len);
                gemm(
                    S::one(),
                    MatRef::new(p, len, len),
                    MatRef::strided(&v[off..], len, dh, d, 1),
                    S::zero(),
                    MatMut::strided(&mut ctx[off..], len, dh, d, 1),
                );
            }
        }
        let (y, o_cache) = self.output.forward(&ctx, rows);
        (y, AttentionCache { q, k, v, probs, q_cache, k_cache, v_cache, o_cache, batch, len })
    }

    pub fn backward(&mut self, cache: &AttentionCache<S>, dy: &[S]) -> Vec<S> {
        let (batch, len) = (cache.batch, cache.len);
        let (d, h) = (self.dim, self.heads);
        let dh = d / h;
        let scale = S::of(1.0 / (dh as f64).sqrt());
        let dctx = self.output.backward(&cache.o_cache, dy);
        let rows = batch * len;
        let mut dq = alloc::vec![S::zero(); rows * d];
        let mut dk = alloc::vec![S::zero(); rows * d];
        let mut dv = alloc::vec![S::zero(); rows * d];
        let mut dp = alloc::vec![S::zero(); len * len];
        for b in 0..batch {
            for head in 0..h {
                let off = b * len * d + head * dh;
                let p = &cache.probs[(b * h + head) * len * len..(b * h + head + 1) * len * len];
                let dctx_bh = MatRef::strided(&dctx[off..], len, dh, d, 1);
                // dV = P^T dCtx
                gemm(S::one(), MatRef::new(p, len, len).t(), dctx_bh, S::zero(), MatMut::strided(&mut dv[off..], len, dh, d, 1));
                // dP = dCtx V^T
                gemm(S::one(), dctx_bh, MatRef::strided(&cache.v[off..], len, dh, d, 1).t(), S::zero(), MatMut::new(&mut dp, len, len));
                // softmax backward: dS = P * (dP - rowsum(dP * P))
                for i in 0..len {
                    let pr = &p[i * len..(i + 1) * len];
                    let dr = &mut dp[i * len..(i + 1) * len];
                    let dot: S = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                    for (g, &pp) in dr.iter_mut().zip(pr) {
                        *g = pp * (*g - dot);
                    }
                }
                gemm(scale, MatRef::new(&dp, len, len), MatRef::strided(&cache.k[off..], len, dh, d, 1), S::zero(), MatMut::strided(&mut dq[off..], len, dh, d, 1));
                gemm(scale, MatRef::new(&dp, len, len).t(), MatRef::strided(&cache.q[off..], len, dh, d, 1), S::zero(), MatMut::strided(&mut dk[off..], len, dh, d, 1));
            }
        }
        let mut dx = self.query.backward(&cache.q_cache, &dq);
        super::add_assign(&mut dx, &self.key.backward(&cache.k_cache, &dk));
        super::add_assign(&mut dx, &self.value.backward(&cache.v_cache, &dv));
        dx
    }

    pub fn cast<T: Scalar>(&self) -> MultiHeadAttention<T> {
        MultiHeadAttention {
            query: self.query.cast(),
            key: self.key.cast(),
            value: self.value.cast(),
            output: self.output.cast(),
            heads: self.heads,
            dim: self.dim,
        }
    }
}

impl<S: Scalar> Module<S> for MultiHeadAttention<S> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param<S>)) {
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.value.visit(&join(prefix, "value"), f);
        self.output.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<S>)) {
        self.query.visit_mut(&join(prefix, "query"), f);
        self.key.visit_mut(&join(prefix, "key"), f);
        self.value.visit_mut(&join(prefix, "value"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}

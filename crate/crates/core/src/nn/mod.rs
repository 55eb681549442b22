//! Minimal neural-network layers with explicit forward caches and backward
//! passes. Activations are row-major `rows x features` buffers.

mod act;
mod adam;
mod attention;
mod block;
mod linear;
mod norm;
mod param;

pub use act::{dropout_backward, dropout_forward, gelu, gelu_grad, silu, silu_grad, Activation};
pub use adam::{AdamW, AdamWConfig, LrSchedule, MomentState};
pub use attention::{AttentionCache, MultiHeadAttention};
pub use block::{BlockCache, FeedForward, FeedForwardCache, TransformerBlock};
pub use linear::{Linear, LinearCache, LoraConfig};
pub use norm::{LayerNorm, LayerNormCache};
pub use param::{checksum, clip_grad_norm, count_params, zero_grad, Module, Param};

use alloc::vec::Vec;
use rand::Rng;

use crate::rng::normal;
use crate::Scalar;

pub(crate) fn join(prefix: &str, name: &str) -> alloc::string::String {
    if prefix.is_empty() {
        name.into()
    } else {
        alloc::format!("{prefix}.{name}")
    }
}

pub fn init_normal<S: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize, std: f64) -> Vec<S> {
    (0..n).map(|_| S::of(normal(rng) * std)).collect()
}

pub fn init_uniform<S: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize, bound: f64) -> Vec<S> {
    (0..n).map(|_| S::of(rng.gen_range(-bound..=bound))).collect()
}

/// Row-wise softmax in place.
pub fn softmax_rows<S: Scalar>(x: &mut [S], cols: usize) {
    for row in x.chunks_mut(cols) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = S::one() / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// `x += y` elementwise.
pub fn add_assign<S: Scalar>(x: &mut [S], y: &[S]) {
    debug_assert_eq!(x.len(), y.len());
    for (a, &b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

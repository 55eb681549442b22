use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
    Gelu,
}

impl Activation {
    pub fn forward<S: Scalar>(self, x: &[S]) -> Vec<S> {
        match self {
            Activation::Silu => x.iter().map(|&v| silu(v)).collect(),
            Activation::Gelu => x.iter().map(|&v| gelu(v)).collect(),
        }
    }

    /// `dy * f'(x)` elementwise.
    pub fn backward<S: Scalar>(self, x: &[S], dy: &[S]) -> Vec<S> {
        match self {
            Activation::Silu => x.iter().zip(dy).map(|(&v, &g)| g * silu_grad(v)).collect(),
            Activation::Gelu => x.iter().zip(dy).map(|(&v, &g)| g * gelu_grad(v)).collect(),
        }
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

pub fn silu<S: Scalar>(x: S) -> S {
    x * sigmoid(x)
}

pub fn silu_grad<S: Scalar>(x: S) -> S {
    let s = sigmoid(x);
    s * (S::one() + x * (S::one() - s))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// tanh approximation of GELU.
pub fn gelu<S: Scalar>(x: S) -> S {
    let inner = S::of(GELU_C) * (x + S::of(GELU_K) * x * x * x);
    S::of(0.5) * x * (S::one() + inner.tanh())
}

pub fn gelu_grad<S: Scalar>(x: S) -> S {
    let inner = S::of(GELU_C) * (x + S::of(GELU_K) * x * x * x);
    let th = inner.tanh();
    let dinner = S::of(GELU_C) * (S::one() + S::of(3.0 * GELU_K) * x * x);
    S::of(0.5) * (S::one() + th) + S::of(0.5) * x * (S::one() - th * th) * dinner
}

/// Inverted dropout. Returns the scaled mask (`0` or `1 / (1 - p)`), or an
/// empty mask when `p == 0`.
pub fn dropout_forward<S: Scalar, R: Rng + ?Sized>(x: &mut [S], p: f64, rng: &mut R) -> Vec<S> {
    if p <= 0.0 {
        return Vec::new();
    }
    let keep = S::of(1.0 / (1.0 - p));
    let mask: Vec<S> = (0..x.len()).map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep }).collect();
    for (v, &m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    mask
}

pub fn dropout_backward<S: Scalar>(dy: &mut [S], mask: &[S]) {
    if mask.is_empty() {
        return;
    }
    for (g, &m) in dy.iter_mut().zip(mask) {
        *g *= m;
    }
}

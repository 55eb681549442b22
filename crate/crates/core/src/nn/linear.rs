use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init_normal, init_uniform, join, Module, Param};
use crate::scalar::{gemm, MatMut, MatRef};
use crate::Scalar;
#[allow(unused_imports)]
use num_traits::Float;

/// Low-rank adapter settings; `rank == 0` disables adapters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
}

impl Default for LoraConfig {
    fn default() -> Self {
        Self { rank: 0, alpha: 32.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Lora<S> {
    /// `in x rank`
    down: Param<S>,
    /// `rank x out`, zero-initialised so the adapter starts as a no-op.
    up: Param<S>,
    scale: S,
}

/// `y = x W + b`, with `W` stored `in x out`, plus an optional low-rank
/// update `scale * (x A) B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    pub weight: Param<S>,
    pub bias: Option<Param<S>>,
    lora: Option<Lora<S>>,
    in_dim: usize,
    out_dim: usize,
}

pub struct LinearCache<S> {
    input: Vec<S>,
    /// `x A` when an adapter is attached.
    down: Vec<S>,
    rows: usize,
}

impl<S: Scalar> Linear<S> {
    /// Framework-default init: weights and bias uniform in `+-1/sqrt(in)`.
    pub fn new_uniform<R: Rng + ?Sized>(rng: &mut R, in_dim: usize, out_dim: usize, bias: bool) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = Param::matrix(init_uniform(rng, in_dim * out_dim, bound), in_dim, out_dim);
        let bias = bias.then(|| Param::vector(init_uniform(rng, out_dim, bound)));
        Self { weight, bias, lora: None, in_dim, out_dim }
    }

    /// Transformer-style init: weights `N(0, std^2)`, zero bias.
    pub fn new_normal<R: Rng + ?Sized>(rng: &mut R, in_dim: usize, out_dim: usize, std: f64) -> Self {
        let weight = Param::matrix(init_normal(rng, in_dim * out_dim, std), in_dim, out_dim);
        Self { weight, bias: Some(Param::zeros(out_dim)), lora: None, in_dim, out_dim }
    }

    pub fn from_parts(weight: Vec<S>, bias: Option<Vec<S>>, in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Param::matrix(weight, in_dim, out_dim),
            bias: bias.map(Param::vector),
            lora: None,
            in_dim,
            out_dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn has_adapter(&self) -> bool {
        self.lora.is_some()
    }

    /// Attach a low-rank adapter and freeze the base weight and bias.
    pub fn attach_adapter<R: Rng + ?Sized>(&mut self, rng: &mut R, cfg: LoraConfig) {
        if cfg.rank == 0 {
            return;
        }
        let bound = 1.0 / (self.in_dim as f64).sqrt();
        let down = Param::matrix(init_uniform(rng, self.in_dim * cfg.rank, bound), self.in_dim, cfg.rank);
        let up = Param::matrix(alloc::vec![S::zero(); cfg.rank * self.out_dim], cfg.rank, self.out_dim);
        self.weight.trainable = false;
        if let Some(b) = &mut self.bias {
            b.trainable = false;
        }
        self.lora = Some(Lora { down, up, scale: S::of(cfg.alpha / cfg.rank as f64) });
    }

    /// Fold the adapter into the base weight and drop it.
    pub fn merge_adapter(&mut self) {
        if let Some(l) = self.lora.take() {
            let r = l.down.shape[1];
            gemm(
                l.scale,
                MatRef::new(&l.down.value, self.in_dim, r),
                MatRef::new(&l.up.value, r, self.out_dim),
                S::one(),
                MatMut::new(&mut self.weight.value, self.in_dim, self.out_dim),
            );
            self.weight.trainable = true;
            if let Some(b) = &mut self.bias {
                b.trainable = true;
            }
        }
    }

    pub fn forward(&self, x: &[S], rows: usize) -> (Vec<S>, LinearCache<S>) {
        let y = self.apply(x, rows);
        let down = match &self.lora {
            Some(l) => {
                let r = l.down.shape[1];
                let mut d = alloc::vec![S::zero(); rows * r];
                gemm(S::one(), MatRef::new(x, rows, self.in_dim), MatRef::new(&l.down.value, self.in_dim, r), S::zero(), MatMut::new(&mut d, rows, r));
                d
            }
            None => Vec::new(),
        };
        (y, LinearCache { input: x.to_vec(), down, rows })
    }

    /// Forward without keeping a cache.
    pub fn apply(&self, x: &[S], rows: usize) -> Vec<S> {
        assert_eq!(x.len(), rows * self.in_dim, "linear input has wrong size");
        let mut y = alloc::vec![S::zero(); rows * self.out_dim];
        if let Some(b) = &self.bias {
            for row in y.chunks_mut(self.out_dim) {
                row.copy_from_slice(&b.value);
            }
        }
        gemm(
            S::one(),
            MatRef::new(x, rows, self.in_dim),
            MatRef::new(&self.weight.value, self.in_dim, self.out_dim),
            S::one(),
            MatMut::new(&mut y, rows, self.out_dim),
        );
        if let Some(l) = &self.lora {
            let r = l.down.shape[1];
            let mut d = alloc::vec![S::zero(); rows * r];
            gemm(S::one(), MatRef::new(x, rows, self.in_dim), MatRef::new(&l.down.value, self.in_dim, r), S::zero(), MatMut::new(&mut d, rows, r));
            gemm(l.scale, MatRef::new(&d, rows, r), MatRef::new(&l.up.value, r, self.out_dim), S::one(), MatMut::new(&mut y, rows, self.out_dim));
        }
        y
    }

    /// Accumulate parameter gradients and return `dL/dx`.
    pub fn backward(&mut self, cache: &LinearCache<S>, dy: &[S]) -> Vec<S> {
        let rows = cache.rows;
        let (i, o) = (self.in_dim, self.out_dim);
        assert_eq!(dy.len(), rows * o, "linear output gradient has wrong size");
        if self.weight.trainable {
            gemm(S::one(), MatRef::new(&cache.input, rows, i).t(), MatRef::new(dy, rows, o), S::one(), MatMut::new(&mut self.weight.grad, i, o));
        }
        if let Some(b) = &mut self.bias {
            if b.trainable {
                for row in dy.chunks(o) {
                    for (g, &d) in b.grad.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }
        }
        let mut dx = alloc::vec![S::zero(); rows * i];
        gemm(S::one(), MatRef::new(dy, rows, o), MatRef::new(&self.weight.value, i, o).t(), S::zero(), MatMut::new(&mut dx, rows, i));
        if let Some(l) = &mut self.lora {
            let r = l.down.shape[1];
            gemm(l.scale, MatRef::new(&cache.down, rows, r).t(), MatRef::new(dy, rows, o), S::one(), MatMut::new(&mut l.up.grad, r, o));
            let mut ddown = alloc::vec![S::zero(); rows * r];
            gemm(l.scale, MatRef::new(dy, rows, o), MatRef::new(&l.up.value, r, o).t(), S::zero(), MatMut::new(&mut ddown, rows, r));
            gemm(S::one(), MatRef::new(&cache.input, rows, i).t(), MatRef::new(&ddown, rows, r), S::one(), MatMut::new(&mut l.down.grad, i, r));
            gemm(S::one(), MatRef::new(&ddown, rows, r), MatRef::new(&l.down.value, i, r).t(), S::one(), MatMut::new(&mut dx, rows, i));
        }
        dx
    }

    pub fn cast<T: Scalar>(&self) -> Linear<T> {
        Linear {
            weight: self.weight.cast(),
            bias: self.bias.as_ref().map(Param::cast),
            lora: self.lora.as_ref().map(|l| Lora { down: l.down.cast(), up: l.up.cast(), scale: T::of(l.scale.as_f64()) }),
            in_dim: self.in_dim,
            out_dim: self.out_dim,
        }
    }
}

impl<S: Scalar> Module<S> for Linear<S> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param<S>)) {
        f(join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(join(prefix, "bias"), b);
        }
        if let Some(l) = &self.lora {
            f(join(prefix, "lora_down"), &l.down);
            f(join(prefix, "lora_up"), &l.up);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<S>)) {
        f(join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(join(prefix, "bias"), b);
        }
        if let Some(l) = &mut self.lora {
            f(join(prefix, "lora_down"), &mut l.down);
            f(join(prefix, "lora_up"), &mut l.up);
        }
    }
}

use alloc::string::String;
use alloc::vec::Vec;

use super::{join, Module, Param};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<S> {
    pub gamma: Param<S>,
    pub beta: Param<S>,
    dim: usize,
    eps: f64,
}

pub struct LayerNormCache<S> {
    xhat: Vec<S>,
    rstd: Vec<S>,
}

impl<S: Scalar> LayerNorm<S> {
    pub fn new(dim: usize) -> Self {
        Self { gamma: Param::filled(dim, S::one()), beta: Param::zeros(dim), dim, eps: 1e-5 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward(&self, x: &[S]) -> (Vec<S>, LayerNormCache<S>) {
        let d = self.dim;
        let rows = x.len() / d;
        let mut y = alloc::vec![S::zero(); x.len()];
        let mut xhat = alloc::vec![S::zero(); x.len()];
        let mut rstd = alloc::vec![S::zero(); rows];
        let n = S::of(d as f64);
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<S>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let rs = S::one() / (var + S::of(self.eps)).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                y[r * d + j] = h * self.gamma.value[j] + self.beta.value[j];
            }
        }
        (y, LayerNormCache { xhat, rstd })
    }

    pub fn apply(&self, x: &[S]) -> Vec<S> {
        self.forward(x).0
    }

    pub fn backward(&mut self, cache: &LayerNormCache<S>, dy: &[S]) -> Vec<S> {
        let d = self.dim;
        let rows = dy.len() / d;
        let n = S::of(d as f64);
        let mut dx = alloc::vec![S::zero(); dy.len()];
        let trainable = self.gamma.trainable;
        for r in 0..rows {
            let g = &dy[r * d..(r + 1) * d];
            let h = &cache.xhat[r * d..(r + 1) * d];
            let mut sum_dh = S::zero();
            let mut sum_dh_h = S::zero();
            for j in 0..d {
                let dh = g[j] * self.gamma.value[j];
                sum_dh += dh;
                sum_dh_h += dh * h[j];
                if trainable {
                    self.gamma.grad[j] += g[j] * h[j];
                    self.beta.grad[j] += g[j];
                }
            }
            let m1 = sum_dh / n;
            let m2 = sum_dh_h / n;
            for j in 0..d {
                let dh = g[j] * self.gamma.value[j];
                dx[r * d + j] = cache.rstd[r] * (dh - m1 - h[j] * m2);
            }
        }
        dx
    }

    pub fn cast<T: Scalar>(&self) -> LayerNorm<T> {
        LayerNorm { gamma: self.gamma.cast(), beta: self.beta.cast(), dim: self.dim, eps: self.eps }
    }
}

impl<S: Scalar> Module<S> for LayerNorm<S> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param<S>)) {
        f(join(prefix, "gamma"), &self.gamma);
        f(join(prefix, "beta"), &self.beta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<S>)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
    }
}

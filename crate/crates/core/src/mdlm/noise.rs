use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

use crate::nn::{join, silu, silu_grad, Linear, LinearCache, Module, Param};
use crate::Scalar;

/// Sinusoidal features of a log-scaled noise level, passed through a
/// two-layer SiLU MLP. Only numeric positions receive it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEmbedding<S> {
    pub lin1: Linear<S>,
    pub lin2: Linear<S>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

pub struct NoiseCache<S> {
    sigmas: Vec<f64>,
    c1: LinearCache<S>,
    z1: Vec<S>,
    c2: LinearCache<S>,
}

/// Map `sigma` to `[0, 1000]` on a log scale and expand it into `dim`
/// cosine/sine features with geometrically spaced frequencies.
pub fn noise_features(sigma: f64, sigma_min: f64, sigma_max: f64, dim: usize) -> Vec<f64> {
    let s = sigma.max(sigma_min);
    let c = 1000.0 * (libm::log(s) - libm::log(sigma_min)) / (libm::log(sigma_max) - libm::log(sigma_min));
    let half = dim / 2;
    let mut out = alloc::vec![0.0; dim];
    for i in 0..half {
        let freq = libm::exp(-libm::log(10_000.0) * i as f64 / half as f64);
        out[i] = libm::cos(c * freq);
        out[half + i] = libm::sin(c * freq);
    }
    out
}

impl<S: Scalar> NoiseEmbedding<S> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, dim: usize, sigma_min: f64, sigma_max: f64, std: f64) -> Self {
        Self {
            lin1: Linear::new_normal(rng, dim, dim, std),
            lin2: Linear::new_normal(rng, dim, dim, std),
            sigma_min,
            sigma_max,
        }
    }

    pub fn dim(&self) -> usize {
        self.lin2.out_dim()
    }

    pub fn forward(&self, sigmas: &[f64]) -> (Vec<S>, NoiseCache<S>) {
        let d = self.lin1.in_dim();
        let mut feats = Vec::with_capacity(sigmas.len() * d);
        for &s in sigmas {
            feats.extend(noise_features(s, self.sigma_min, self.sigma_max, d).into_iter().map(S::of));
        }
        let (z1, c1) = self.lin1.forward(&feats, sigmas.len());
        let a1: Vec<S> = z1.iter().map(|&v| silu(v)).collect();
        let (y, c2) = self.lin2.forward(&a1, sigmas.len());
        (y, NoiseCache { sigmas: sigmas.to_vec(), c1, z1, c2 })
    }

    /// Accumulate parameter gradients and return the gradient with respect
    /// to each input noise level.
    pub fn backward(&mut self, cache: &NoiseCache<S>, dy: &[S]) -> Vec<f64> {
        let mut da = self.lin2.backward(&cache.c2, dy);
        for (d, &z) in da.iter_mut().zip(&cache.z1) {
            *d *= silu_grad(z);
        }
        let dfeat = self.lin1.backward(&cache.c1, &da);
        let dim = self.lin1.in_dim();
        let half = dim / 2;
        let span = libm::log(self.sigma_max) - libm::log(self.sigma_min);
        cache
            .sigmas
            .iter()
            .enumerate()
            .map(|(n, &sigma)| {
                if sigma <= self.sigma_min {
                    return 0.0;
                }
                let c = 1000.0 * (libm::log(sigma) - libm::log(self.sigma_min)) / span;
                let dc_dsigma = 1000.0 / (sigma * span);
                let g = &dfeat[n * dim..(n + 1) * dim];
                let mut dc = 0.0;
                for i in 0..half {
                    let freq = libm::exp(-libm::log(10_000.0) * i as f64 / half as f64);
                    dc += g[i].as_f64() * -freq * libm::sin(c * freq) + g[half + i].as_f64() * freq * libm::cos(c * freq);
                }
                dc * dc_dsigma
            })
            .collect()
    }

    pub fn cast<T: Scalar>(&self) -> NoiseEmbedding<T> {
        NoiseEmbedding { lin1: self.lin1.cast(), lin2: self.lin2.cast(), sigma_min: self.sigma_min, sigma_max: self.sigma_max }
    }
}

impl<S: Scalar> Module<S> for NoiseEmbedding<S> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param<S>)) {
        self.lin1.visit(&join(prefix, "lin1"), f);
        self.lin2.visit(&join(prefix, "lin2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<S>)) {
        self.lin1.visit_mut(&join(prefix, "lin1"), f);
        self.lin2.visit_mut(&join(prefix, "lin2"), f);
    }
}

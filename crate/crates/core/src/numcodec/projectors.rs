use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, RngCore};

use super::FloatCodec;
use crate::error::{ensure, Result};
use crate::nn::{dropout_backward, dropout_forward, join, silu, silu_grad, LayerNorm, LayerNormCache, Linear, LinearCache, Module, Param};
use crate::Scalar;

/// Trainable maps between codec latents (`r`) and the model width (`D`):
/// `LN -> Linear(r, H) -> SiLU -> Dropout -> Linear(H, D)` on the way in and
/// `Linear(D, H) -> SiLU -> Dropout -> Linear(H, r)` on the way out.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericProjectors<S> {
    pub in_norm: LayerNorm<S>,
    pub in1: Linear<S>,
    pub in2: Linear<S>,
    pub out1: Linear<S>,
    pub out2: Linear<S>,
    pub dropout: f64,
}

pub struct ProjEncCache<S> {
    norm: LayerNormCache<S>,
    c1: LinearCache<S>,
    z1: Vec<S>,
    mask: Vec<S>,
    c2: LinearCache<S>,
}

pub struct ProjDecCache<S> {
    c1: LinearCache<S>,
    z1: Vec<S>,
    mask: Vec<S>,
    c2: LinearCache<S>,
}

fn act<S: Scalar>(z: &[S], p: f64, rng: Option<&mut (dyn RngCore + '_)>) -> (Vec<S>, Vec<S>) {
    let mut a: Vec<S> = z.iter().map(|&v| silu(v)).collect();
    let mask = match rng {
        Some(r) if p > 0.0 => dropout_forward(&mut a, p, r),
        _ => Vec::new(),
    };
    (a, mask)
}

fn act_back<S: Scalar>(z: &[S], mask: &[S], mut da: Vec<S>) -> Vec<S> {
    dropout_backward(&mut da, mask);
    for (d, &v) in da.iter_mut().zip(z) {
        *d *= silu_grad(v);
    }
    da
}

impl<S: Scalar> NumericProjectors<S> {
    /// Hidden width `max(2 * max(r, D), 64)`.
    pub fn hidden_width(latent: usize, model_dim: usize) -> usize {
        (2 * latent.max(model_dim)).max(64)
    }

    pub fn new<R: Rng + ?Sized>(rng: &mut R, latent: usize, model_dim: usize, dropout: f64) -> Self {
        let h = Self::hidden_width(latent, model_dim);
        Self {
            in_norm: LayerNorm::new(latent),
            in1: Linear::new_uniform(rng, latent, h, true),
            in2: Linear::new_uniform(rng, h, model_dim, true),
            out1: Linear::new_uniform(rng, model_dim, h, true),
            out2: Linear::new_uniform(rng, h, latent, true),
            dropout,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.in1.in_dim()
    }

    pub fn model_dim(&self) -> usize {
        self.in2.out_dim()
    }

    /// `rng = None` is inference mode (no dropout).
    pub fn encode_forward(&self, latents: &[S], rows: usize, rng: Option<&mut (dyn RngCore + '_)>) -> (Vec<S>, ProjEncCache<S>) {
        let (n, norm) = self.in_norm.forward(latents);
        let (z1, c1) = self.in1.forward(&n, rows);
        let (a1, mask) = act(&z1, self.dropout, rng);
        let (y, c2) = self.in2.forward(&a1, rows);
        (y, ProjEncCache { norm, c1, z1, mask, c2 })
    }

    pub fn encode_backward(&mut self, cache: &ProjEncCache<S>, dy: &[S]) -> Vec<S> {
        let da = self.in2.backward(&cache.c2, dy);
        let dz = act_back(&cache.z1, &cache.mask, da);
        let dn = self.in1.backward(&cache.c1, &dz);
        self.in_norm.backward(&cache.norm, &dn)
    }

    pub fn decode_forward(&self, hidden: &[S], rows: usize, rng: Option<&mut (dyn RngCore + '_)>) -> (Vec<S>, ProjDecCache<S>) {
        let (z1, c1) = self.out1.forward(hidden, rows);
        let (a1, mask) = act(&z1, self.dropout, rng);
        let (y, c2) = self.out2.forward(&a1, rows);
        (y, ProjDecCache { c1, z1, mask, c2 })
    }

    pub fn decode_backward(&mut self, cache: &ProjDecCache<S>, dy: &[S]) -> Vec<S> {
        let da = self.out2.backward(&cache.c2, dy);
        let dz = act_back(&cache.z1, &cache.mask, da);
        self.out1.backward(&cache.c1, &dz)
    }

    pub fn cast<T: Scalar>(&self) -> NumericProjectors<T> {
        NumericProjectors {
            in_norm: self.in_norm.cast(),
            in1: self.in1.cast(),
            in2: self.in2.cast(),
            out1: self.out1.cast(),
            out2: self.out2.cast(),
            dropout: self.dropout,
        }
    }
}

impl<S: Scalar> Module<S> for NumericProjectors<S> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param<S>)) {
        self.in_norm.visit(&join(prefix, "in_norm"), f);
        self.in1.visit(&join(prefix, "in1"), f);
        self.in2.visit(&join(prefix, "in2"), f);
        self.out1.visit(&join(prefix, "out1"), f);
        self.out2.visit(&join(prefix, "out2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<S>)) {
        self.in_norm.visit_mut(&join(prefix, "in_norm"), f);
        self.in1.visit_mut(&join(prefix, "in1"), f);
        self.in2.visit_mut(&join(prefix, "in2"), f);
        self.out1.visit_mut(&join(prefix, "out1"), f);
        self.out2.visit_mut(&join(prefix, "out2"), f);
    }
}

fn check_dims<S: Scalar>(codec: &FloatCodec<S>, proj: &NumericProjectors<S>) -> Result<()> {
    ensure!(
        codec.latent_dim() == proj.latent_dim(),
        Config,
        "codec latent size {} does not match projector latent size {}",
        codec.latent_dim(),
        proj.latent_dim()
    );
    Ok(())
}

/// `PROJ_e(ENC(x))` in inference mode: a `D`-vector for one normalized value.
pub fn encode_value<S: Scalar>(x: S, codec: &FloatCodec<S>, proj: &NumericProjectors<S>) -> Result<Vec<S>> {
    check_dims(codec, proj)?;
    let lat = codec.encode(&[x]);
    Ok(proj.encode_forward(&lat, 1, None).0)
}

/// `DEC(PROJ_d(h))` in inference mode.
pub fn decode_hidden<S: Scalar>(h: &[S], codec: &FloatCodec<S>, proj: &NumericProjectors<S>) -> Result<S> {
    check_dims(codec, proj)?;
    ensure!(h.len() == proj.model_dim(), Config, "hidden vector has length {}, expected {}", h.len(), proj.model_dim());
    let lat = proj.decode_forward(h, 1, None).0;
    Ok(codec.decode(&lat)[0])
}

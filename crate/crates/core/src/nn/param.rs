use alloc::string::String;
use alloc::vec::Vec;

use crate::Scalar;

/// A parameter tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub value: Vec<S>,
    pub grad: Vec<S>,
    /// `[rows, cols]`; vectors use `[1, n]`.
    pub shape: [usize; 2],
    pub trainable: bool,
    /// Whether decoupled weight decay applies.
    pub decay: bool,
}

impl<S: Scalar> Param<S> {
    pub fn new(value: Vec<S>, shape: [usize; 2]) -> Self {
        assert_eq!(value.len(), shape[0] * shape[1], "parameter shape mismatch");
        let grad = alloc::vec![S::zero(); value.len()];
        Self { value, grad, shape, trainable: true, decay: false }
    }

    pub fn matrix(value: Vec<S>, rows: usize, cols: usize) -> Self {
        let mut p = Self::new(value, [rows, cols]);
        p.decay = true;
        p
    }

    pub fn vector(value: Vec<S>) -> Self {
        let n = value.len();
        Self::new(value, [1, n])
    }

    pub fn zeros(n: usize) -> Self {
        Self::vector(alloc::vec![S::zero(); n])
    }

    pub fn filled(n: usize, v: S) -> Self {
        Self::vector(alloc::vec![v; n])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn cast<T: Scalar>(&self) -> Param<T> {
        Param {
            value: crate::scalar::cast_slice(&self.value),
            grad: alloc::vec![T::zero(); self.value.len()],
            shape: self.shape,
            trainable: self.trainable,
            decay: self.decay,
        }
    }
}

/// Anything that owns parameters. Visiting order is stable and defines the
/// layout of optimizer state and checkpoints.
pub trait Module<S: Scalar> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param<S>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<S>));

    fn set_trainable(&mut self, trainable: bool) {
        self.visit_mut("", &mut |_, p| p.trainable = trainable);
    }

    fn named_params(&self) -> Vec<(String, &Param<S>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, p| out.push((name, p)));
        out
    }
}

pub fn zero_grad<S: Scalar>(m: &mut (impl Module<S> + ?Sized)) {
    m.visit_mut("", &mut |_, p| p.grad.iter_mut().for_each(|g| *g = S::zero()));
}

pub fn count_params<S: Scalar>(m: &(impl Module<S> + ?Sized), trainable_only: bool) -> usize {
    let mut n = 0;
    m.visit("", &mut |_, p| {
        if !trainable_only || p.trainable {
            n += p.len()
        }
    });
    n
}

/// Order-sensitive FNV-1a digest over parameter names and bit patterns.
pub fn checksum<S: Scalar>(m: &(impl Module<S> + ?Sized)) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    m.visit("", &mut |name, p| {
        feed(name.as_bytes());
        for v in &p.value {
            feed(&v.as_f64().to_bits().to_le_bytes());
        }
    });
    h
}

/// Scale trainable gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<S: Scalar>(m: &mut (impl Module<S> + ?Sized), max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    m.visit("", &mut |_, p| {
        if p.trainable {
            sq += p.grad.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>();
        }
    });
    let norm = num_traits::Float::sqrt(sq);
    if max_norm > 0.0 && norm > max_norm {
        let scale = S::of(max_norm / (norm + 1e-12));
        m.visit_mut("", &mut |_, p| {
            if p.trainable {
                p.grad.iter_mut().for_each(|g| *g *= scale);
            }
        });
    }
    norm
}

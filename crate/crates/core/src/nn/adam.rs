use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::Module;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied only to parameters flagged `decay`.
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.9, beta2: 0.98, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// Learning-rate multiplier as a function of the optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Linear warmup over `warmup` steps, then linear decay to zero at `total`.
    WarmupLinear { warmup: u64, total: u64 },
    /// Cosine decay from 1 to `floor` over `total` steps.
    Cosine { total: u64, floor: f64 },
}

impl LrSchedule {
    pub fn warmup_linear(total: u64, warmup_ratio: f64) -> Self {
        let warmup = libm::round(total as f64 * warmup_ratio) as u64;
        LrSchedule::WarmupLinear { warmup, total }
    }

    /// Multiplier for the update with 0-based index `step`.
    pub fn factor(&self, step: u64) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::WarmupLinear { warmup, total } => {
                if step < warmup {
                    (step + 1) as f64 / warmup as f64
                } else if total <= warmup {
                    1.0
                } else {
                    let rem = total.saturating_sub(step) as f64 / (total - warmup) as f64;
                    rem.clamp(0.0, 1.0)
                }
            }
            LrSchedule::Cosine { total, floor } => {
                let p = (step as f64 / total.max(1) as f64).min(1.0);
                floor + (1.0 - floor) * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * p))
            }
        }
    }
}

/// Per-parameter first and second moments, keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub name: String,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct AdamW<S> {
    pub config: AdamWConfig,
    pub schedule: LrSchedule,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(config: AdamWConfig, schedule: LrSchedule) -> Self {
        Self { config, schedule, step: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr * self.schedule.factor(self.step)
    }

    /// Apply one update to every trainable parameter using its accumulated
    /// gradient. Returns the learning rate used.
    pub fn step(&mut self, model: &mut (impl Module<S> + ?Sized)) -> f64 {
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as f64;
        let c = self.config;
        let bc1 = 1.0 - libm::pow(c.beta1, t);
        let bc2 = 1.0 - libm::pow(c.beta2, t);
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let (ob1, ob2) = (S::of(1.0 - c.beta1), S::of(1.0 - c.beta2));
        let step_size = S::of(lr / bc1);
        let inv_bc2 = S::of(1.0 / bc2);
        let eps = S::of(c.eps);
        let shrink = S::of(1.0 - lr * c.weight_decay);
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        model.visit_mut("", &mut |_, p| {
            if ms.len() <= idx {
                ms.push(Vec::new());
                vs.push(Vec::new());
            }
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            idx += 1;
            if !p.trainable {
                return;
            }
            if m.len() != p.len() {
                *m = alloc::vec![S::zero(); p.len()];
                *v = alloc::vec![S::zero(); p.len()];
            }
            let decay = p.decay && c.weight_decay > 0.0;
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + ob1 * g;
                v[i] = b2 * v[i] + ob2 * g * g;
                if decay {
                    p.value[i] *= shrink;
                }
                p.value[i] -= step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        });
        lr
    }

    pub fn export_state(&self, model: &(impl Module<S> + ?Sized)) -> (u64, Vec<MomentState>) {
        let mut out = Vec::new();
        let mut idx = 0;
        model.visit("", &mut |name, _| {
            if let (Some(m), Some(v)) = (self.m.get(idx), self.v.get(idx)) {
                if !m.is_empty() {
                    out.push(MomentState {
                        name,
                        m: m.iter().map(|x| x.as_f64() as f32).collect(),
                        v: v.iter().map(|x| x.as_f64() as f32).collect(),
                    });
                }
            }
            idx += 1;
        });
        (self.step, out)
    }

    /// Restore moments by parameter name. Unknown names are ignored and
    /// parameters without saved state start from zero.
    pub fn import_state(&mut self, model: &(impl Module<S> + ?Sized), step: u64, state: &[MomentState]) -> crate::Result<()> {
        self.step = step;
        self.m.clear();
        self.v.clear();
        let mut err = None;
        model.visit("", &mut |name, p| {
            match state.iter().find(|s| s.name == name) {
                Some(s) if s.m.len() == p.len() && s.v.len() == p.len() => {
                    self.m.push(s.m.iter().map(|&x| S::of(x as f64)).collect());
                    self.v.push(s.v.iter().map(|&x| S::of(x as f64)).collect());
                }
                Some(_) => {
                    err.get_or_insert_with(|| alloc::format!("optimizer state for {name} has wrong size"));
                    self.m.push(Vec::new());
                    self.v.push(Vec::new());
                }
                None => {
                    self.m.push(Vec::new());
                    self.v.push(Vec::new());
                }
            }
        });
        match err {
            Some(e) => Err(crate::Error::Shape(e)),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;

    struct Quad(Param<f64>);

    impl Module<f64> for Quad {
        fn visit<'a>(&'a self, _: &str, f: &mut dyn FnMut(String, &'a Param<f64>)) {
            f("w".into(), &self.0)
        }
        fn visit_mut(&mut self, _: &str, f: &mut dyn FnMut(String, &mut Param<f64>)) {
            f("w".into(), &mut self.0)
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut q = Quad(Param::vector(alloc::vec![1.0, -2.0]));
        q.0.grad = alloc::vec![0.5, -3.0];
        let cfg = AdamWConfig { lr: 0.1, weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(cfg, LrSchedule::Constant);
        opt.step(&mut q);
        assert!((q.0.value[0] - 0.9).abs() < 1e-6);
        assert!((q.0.value[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_quadratic() {
        let mut q = Quad(Param::vector(alloc::vec![3.0, -4.0]));
        let mut opt = AdamW::new(AdamWConfig { lr: 0.05, weight_decay: 0.0, ..Default::default() }, LrSchedule::Constant);
        for _ in 0..2000 {
            q.0.grad = q.0.value.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut q);
        }
        assert!(q.0.value.iter().all(|x| x.abs() < 1e-2), "{:?}", q.0.value);
    }

    #[test]
    fn warmup_then_linear_decay() {
        let s = LrSchedule::warmup_linear(100, 0.1);
        assert!((s.factor(0) - 0.1).abs() < 1e-12);
        assert!((s.factor(9) - 1.0).abs() < 1e-12);
        assert!((s.factor(10) - 1.0).abs() < 1e-12);
        assert!((s.factor(55) - 0.5).abs() < 1e-12);
        assert_eq!(s.factor(100), 0.0);
    }

    #[test]
    fn state_round_trips() {
        let mut q = Quad(Param::vector(alloc::vec![1.0, 2.0]));
        q.0.grad = alloc::vec![0.3, 0.1];
        let mut opt = AdamW::new(AdamWConfig::default(), LrSchedule::Constant);
        opt.step(&mut q);
        let (step, st) = opt.export_state(&q);
        let mut other = AdamW::<f64>::new(AdamWConfig::default(), LrSchedule::Constant);
        other.import_state(&q, step, &st).unwrap();
        assert_eq!(other.export_state(&q), (step, st));
    }
}

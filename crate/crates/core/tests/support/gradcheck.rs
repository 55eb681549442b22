//! Central finite-difference check of the total training loss.

#![allow(dead_code)]

use rand::Rng;
use tabmix_core::datasets::gen_mathexpr;
use tabmix_core::diffusion::{DiffusionModel, ModelConfig, NoisyBatch};
use tabmix_core::mdlm::{build_vocabulary, serialize_record, BackboneConfig, OverflowPolicy, SerializedRecord, TokenLayout};
use tabmix_core::nn::{zero_grad, Module};
use tabmix_core::numcodec::{fit_normalizer, FloatCodec};
use tabmix_core::rng::{stream, Domain};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely. Key biases, for
/// one, have an exact zero gradient and their differences are pure
/// rounding noise of order eps * loss / STEP.
pub const FLOOR: f64 = 1e-5;

pub struct GradCheck {
    pub checked: usize,
    pub tensors: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// 2 layers, width 32, learnable rho, no dropout, lambda 0.7.
pub fn run(seed: u64, samples: usize) -> GradCheck {
    let table = gen_mathexpr(6, seed).unwrap();
    let vocab = build_vocabulary(&table);
    let layout = TokenLayout::build(&table, &vocab, OverflowPolicy::Fail).unwrap();
    let norms: Vec<_> = table.schema().numerical().iter().map(|&c| fit_normalizer(table.numeric(c).unwrap()).unwrap()).collect();
    let records: Vec<SerializedRecord> =
        (0..table.num_rows()).map(|i| serialize_record(&table.row(i), table.schema(), &layout, &vocab, &norms).unwrap()).collect();

    let mut rng = stream(seed, Domain::Init, 0);
    let codec = FloatCodec::<f64>::new(&mut rng, 8);
    let config = ModelConfig {
        backbone: BackboneConfig { layers: 2, hidden: 32, heads: 2, ff: 64, max_len: 128, init_std: 0.2, ..Default::default() },
        dropout: 0.0,
        learnable_rho: true,
        ..Default::default()
    };
    let mut model = DiffusionModel::new(config, layout.clone(), vocab.len(), codec, &mut rng).unwrap();
    model.visit_mut("", &mut |name, p| {
        if name == "schedule.rho" {
            p.value = vec![4.0, 11.0];
        }
    });
    let schedule = model.schedule().unwrap();
    let refs: Vec<&SerializedRecord> = records.iter().collect();
    let times = [0.15, 0.4, 0.55, 0.7, 0.85, 0.3];
    let nb = NoisyBatch::at_times(&refs, &times, &layout, &schedule, model.config.mask_schedule, &mut stream(seed, Domain::Corrupt, 0)).unwrap();
    let lambda = 0.7;

    zero_grad(&mut model);
    model.loss_and_backward(&nb, lambda, false, None).unwrap();
    let grads: Vec<(String, Vec<f64>, bool)> = model.named_params().into_iter().map(|(n, p)| (n, p.grad.clone(), p.trainable)).collect();
    let trainable = grads.iter().filter(|g| g.2).count();
    let per_tensor = samples.div_ceil(trainable);

    let mut out = GradCheck { checked: 0, tensors: trainable, worst: 0.0, failures: Vec::new() };
    let mut pick = stream(seed, Domain::Init, 1);
    for (index, (name, grad, is_trainable)) in grads.iter().enumerate() {
        if !is_trainable {
            if grad.iter().any(|&g| g != 0.0) {
                out.failures.push(format!("{name} is frozen but received a gradient"));
            }
            continue;
        }
        for _ in 0..per_tensor {
            let j = pick.gen_range(0..grad.len());
            let mut eval = |delta: f64| {
                let mut k = 0;
                model.visit_mut("", &mut |_, p| {
                    if k == index {
                        p.value[j] += delta;
                    }
                    k += 1;
                });
                let l = model.loss(&nb, lambda, false).unwrap().total;
                let mut k = 0;
                model.visit_mut("", &mut |_, p| {
                    if k == index {
                        p.value[j] -= delta;
                    }
                    k += 1;
                });
                l
            };
            let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            let err = relative_error(grad[j], numeric);
            out.worst = out.worst.max(err);
            if err > TOLERANCE {
                out.failures.push(format!("{name}[{j}]: analytic {:e} numeric {numeric:e}", grad[j]));
            }
            out.checked += 1;
        }
    }
    out
}

//! Joint forward corruption, training objective and the coupled reverse
//! sampler.

mod forward;
mod model;
mod sampler;
mod train;

pub use forward::{forward_mask_text, forward_noise_numeric, noise_with, NoisyBatch};
pub use model::{emittable, DiffusionModel, LossReport, ModelConfig, RHO_RANGE};
pub use sampler::{
    decode_samples, euler_update, gumbel_sample, reveal_counts, sample, token_probability, unmask_step, Denoiser, Samples, SamplerConfig,
    UnmaskPolicy,
};
pub use train::{lambda_weight, training_step, TrainConfig, Trainer};

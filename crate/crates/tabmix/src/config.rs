//! Run configuration: one TOML file drives codec pretraining, training and
//! sampling.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};
use tabmix_core::diffusion::{ModelConfig, SamplerConfig, TrainConfig};
use tabmix_core::mdlm::OverflowPolicy;
use tabmix_core::numcodec::CodecPretrainConfig;

use crate::io::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecSection {
    #[serde(flatten)]
    pub pretrain: CodecPretrainConfig,
    pub seed: u64,
    /// Pretrained codec to load instead of fitting one. Relative paths are
    /// resolved against the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for CodecSection {
    fn default() -> Self {
        Self { pretrain: CodecPretrainConfig::default(), seed: 0, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Save a resumable checkpoint every this many updates (0: only at the end).
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub overflow: OverflowPolicy,
    /// Seed for parameter initialization.
    pub init_seed: u64,
    /// Stop after this many updates even if epochs remain; the schedule
    /// still follows `train.epochs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { checkpoint_every: 500, log_every: 1, overflow: OverflowPolicy::Fail, init_seed: 0, max_steps: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub codec: CodecSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing run config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and resolve relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        if let Some(p) = &cfg.codec.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.codec.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.codec.pretrain.latent_dim >= 1, "codec.latent_dim must be positive");
        ensure!(self.codec.pretrain.grid_points >= 2, "codec.grid_points must be at least 2");
        ensure!(self.codec.pretrain.grid_min < self.codec.pretrain.grid_max, "codec grid is empty");
        self.model.backbone.validate()?;
        ensure!(self.model.sigma_min > 0.0 && self.model.sigma_min < self.model.sigma_max, "need 0 < sigma_min < sigma_max");
        ensure!((0.0..1.0).contains(&self.model.dropout), "model.dropout must be in [0, 1)");
        self.train.validate()?;
        self.sampler.validate()?;
        ensure!(self.run.log_every >= 1, "run.log_every must be positive");
        Ok(())
    }

    /// Canonical JSON: fixed field order, without the codec path (the codec
    /// file is hashed separately) or settings that cannot change the
    /// trained weights.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.without_run_controls()).expect("config serializes")
    }

    /// Copy with checkpoint cadence, logging and the step cap reset, so that
    /// an interrupted run and its resumption share a hash.
    pub fn without_run_controls(&self) -> Self {
        let mut c = self.clone();
        c.codec.path = None;
        let d = RunSection::default();
        c.run.max_steps = None;
        c.run.checkpoint_every = d.checkpoint_every;
        c.run.log_every = d.log_every;
        c
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    /// Hash of the settings that determine a pretrained codec.
    pub fn codec_hash(&self) -> String {
        let json = serde_json::to_string(&(&self.codec.pretrain, self.codec.seed)).expect("config serializes");
        sha256_hex(json.as_bytes())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

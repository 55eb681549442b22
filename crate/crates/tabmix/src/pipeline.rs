//! The five subcommands as library functions.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};
use tabmix_core::datasets::{generate, split};
use tabmix_core::diffusion::{decode_samples, sample, DiffusionModel, SamplerConfig, Trainer, UnmaskPolicy};
use tabmix_core::mdlm::{build_vocabulary, serialize_record, SerializedRecord, TokenLayout, Vocabulary};
use tabmix_core::metrics::{evaluate, FidelityReport};
use tabmix_core::nn::{checksum, count_params};
use tabmix_core::numcodec::{fit_normalizer, pretrain_codec, round_trip_error, FloatCodec, QuantileNormalizer};
use tabmix_core::rng::{stream, Domain};
use tabmix_core::table::{Schema, Table};

use crate::checkpoint::{check_hash, Checkpoint, FORMAT_VERSION};
use crate::config::RunConfig;
use crate::io::{file_sha256, read_csv, read_schema, schema_hash, schema_sidecar, sha256_hex, write_csv, write_file, write_json, write_schema};

pub const TRAIN_FRACTION: f64 = 0.9;
pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";
pub const LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub dataset: String,
    pub generator_version: String,
    pub n: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub train_rows: usize,
    pub validation_rows: usize,
    /// File name to SHA-256.
    pub files: Vec<(String, String)>,
}

/// Paths written by `gen-data`.
#[derive(Debug, Clone)]
pub struct DataFiles {
    pub full: PathBuf,
    pub train: PathBuf,
    pub validation: PathBuf,
    pub schema: PathBuf,
    pub manifest: PathBuf,
}

/// Generate a benchmark table and its 9:1 split into `out_dir`.
pub fn cmd_gen_data(dataset: &str, n: usize, seed: u64, out_dir: &Path) -> Result<DataFiles> {
    let table = generate(dataset, n, seed)?;
    let (train, validation) = split(&table, TRAIN_FRACTION, seed)?;
    let files = DataFiles {
        full: out_dir.join(format!("{dataset}.csv")),
        train: out_dir.join(format!("{dataset}.train.csv")),
        validation: out_dir.join(format!("{dataset}.val.csv")),
        schema: out_dir.join(format!("{dataset}.schema.json")),
        manifest: out_dir.join(format!("{dataset}.manifest.json")),
    };
    write_csv(&files.full, &table)?;
    write_csv(&files.train, &train)?;
    write_csv(&files.validation, &validation)?;
    write_schema(&files.schema, table.schema())?;
    let mut hashes = Vec::new();
    for p in [&files.full, &files.train, &files.validation, &files.schema] {
        hashes.push((p.file_name().unwrap().to_string_lossy().into_owned(), file_sha256(p)?));
    }
    let manifest = DataManifest {
        dataset: dataset.into(),
        generator_version: env!("CARGO_PKG_VERSION").into(),
        n,
        seed,
        train_fraction: TRAIN_FRACTION,
        train_rows: train.num_rows(),
        validation_rows: validation.num_rows(),
        files: hashes,
    };
    write_json(&files.manifest, &manifest)?;
    info!("wrote {} rows ({} train / {} validation) to {}", n, train.num_rows(), validation.num_rows(), out_dir.display());
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecMeta {
    pub format: u32,
    pub kind: String,
    pub codec_config_hash: String,
    pub latent_dim: usize,
    pub mean_error: f64,
    pub max_error: f64,
}

fn fit_codec_from(cfg: &RunConfig) -> Result<(FloatCodec<f32>, f64, f64)> {
    let grid = cfg.codec.pretrain.grid();
    let start = Instant::now();
    let codec: FloatCodec<f32> = pretrain_codec(&cfg.codec.pretrain, &grid, &mut stream(cfg.codec.seed, Domain::Codec, 0))?;
    let (mean, max) = round_trip_error(&codec, &grid);
    info!("codec pretrained in {:.1}s: mean error {mean:.2e}, max error {max:.2e}", start.elapsed().as_secs_f64());
    Ok((codec, mean, max))
}

pub fn cmd_pretrain_codec(config: &Path, out: &Path) -> Result<CodecMeta> {
    let cfg = RunConfig::load(config)?;
    let (codec, mean_error, max_error) = fit_codec_from(&cfg)?;
    let meta = CodecMeta {
        format: FORMAT_VERSION,
        kind: "codec".into(),
        codec_config_hash: cfg.codec_hash(),
        latent_dim: codec.latent_dim(),
        mean_error,
        max_error,
    };
    let mut ck = Checkpoint::new(&meta)?;
    ck.add_module("", &codec);
    ck.save(out)?;
    Ok(meta)
}

pub fn load_codec(path: &Path, latent_dim: usize) -> Result<FloatCodec<f32>> {
    let ck = Checkpoint::load(path)?;
    let meta: CodecMeta = ck.meta()?;
    ensure!(meta.kind == "codec", "{} is a {} checkpoint, not a codec", path.display(), meta.kind);
    ensure!(meta.latent_dim == latent_dim, "codec latent dimension {} does not match config {}", meta.latent_dim, latent_dim);
    let mut codec = FloatCodec::<f32>::new(&mut stream(0, Domain::Codec, 0), latent_dim);
    ck.load_module("", &mut codec)?;
    codec.freeze();
    Ok(codec)
}

/// A training table turned into model inputs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub table: Table,
    pub vocab: Vocabulary,
    pub layout: TokenLayout,
    pub normalizers: Vec<QuantileNormalizer>,
    pub records: Vec<SerializedRecord>,
    pub data_hash: String,
}

pub fn prepare(data: &Path, cfg: &RunConfig) -> Result<Prepared> {
    let schema = read_schema(&schema_sidecar(data))?;
    let table = read_csv(data, &schema)?.impute()?;
    table.validate()?;
    ensure!(table.num_rows() > 0, "{} has no rows", data.display());
    let vocab = build_vocabulary(&table);
    let layout = TokenLayout::build(&table, &vocab, cfg.run.overflow)?;
    let normalizers = table
        .schema()
        .numerical()
        .iter()
        .map(|&c| fit_normalizer(table.numeric(c).unwrap()))
        .collect::<tabmix_core::Result<Vec<_>>>()?;
    let records = (0..table.num_rows())
        .map(|i| serialize_record(&table.row(i), table.schema(), &layout, &vocab, &normalizers))
        .collect::<tabmix_core::Result<Vec<_>>>()?;
    Ok(Prepared { table, vocab, layout, normalizers, records, data_hash: file_sha256(data)? })
}

/// Header of a model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format: u32,
    pub kind: String,
    pub config_toml: String,
    pub config_hash: String,
    pub data_hash: String,
    pub schema: Schema,
    pub schema_hash: String,
    pub vocabulary: Vocabulary,
    pub vocab_hash: String,
    pub layout: TokenLayout,
    pub normalizers: Vec<QuantileNormalizer>,
    pub codec_checksum: String,
    pub step: u64,
    pub total_steps: u64,
}

impl ModelMeta {
    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::from_toml(&self.config_toml)
    }

    pub fn is_complete(&self) -> bool {
        self.step >= self.total_steps
    }
}

fn vocab_hash(v: &Vocabulary) -> String {
    sha256_hex(serde_json::to_string(v).expect("vocabulary serializes").as_bytes())
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub l_text: f64,
    pub l_num: f64,
    pub lambda: f64,
    pub total: f64,
    pub lr: f64,
    pub wall_s: f64,
}

/// Model and metadata restored from a checkpoint; parameters only.
pub fn load_model(ck: &Checkpoint) -> Result<(DiffusionModel<f32>, ModelMeta)> {
    let meta: ModelMeta = ck.meta()?;
    ensure!(meta.kind == "model", "checkpoint holds a {}, not a model", meta.kind);
    let cfg = meta.config()?;
    let codec = FloatCodec::<f32>::new(&mut stream(0, Domain::Codec, 0), cfg.codec.pretrain.latent_dim);
    let mut model = DiffusionModel::new(cfg.model.clone(), meta.layout.clone(), meta.vocabulary.len(), codec, &mut stream(0, Domain::Init, 0))?;
    ck.load_module("", &mut model)?;
    ensure!(format!("{:016x}", checksum(&model.codec)) == meta.codec_checksum, "codec parameters do not match the recorded checksum");
    Ok((model, meta))
}

fn model_checkpoint(trainer: &Trainer<f32>, meta: &ModelMeta) -> Result<Checkpoint> {
    let mut meta = meta.clone();
    meta.step = trainer.step_index();
    let mut ck = Checkpoint::new(&meta)?;
    ck.add_module("", &trainer.model);
    ck.add_optimizer(&trainer.model, &trainer.optimizer);
    Ok(ck)
}

/// Keep only log lines for updates before `step`.
fn truncate_log(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut kept = String::new();
    for line in BufReader::new(fs::File::open(path)?).lines() {
        let line = line?;
        match serde_json::from_str::<LogRecord>(&line) {
            Ok(r) if r.step < step => {
                kept.push_str(&line);
                kept.push('\n');
            }
            _ => {}
        }
    }
    write_file(path, kept.as_bytes())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub steps_run: u64,
    pub step: u64,
    pub total_steps: u64,
    pub resumed_from: Option<u64>,
    pub last: Option<LogRecord>,
}

/// Train into `out_dir`, resuming from its checkpoint when one exists.
pub fn cmd_train(config: &Path, data: &Path, out_dir: &Path) -> Result<TrainOutcome> {
    let cfg = RunConfig::load(config)?;
    train_with(&cfg, data, out_dir)
}

pub fn train_with(cfg: &RunConfig, data: &Path, out_dir: &Path) -> Result<TrainOutcome> {
    let prep = prepare(data, cfg)?;
    let ck_path = out_dir.join(CHECKPOINT_FILE);
    let log_path = out_dir.join(LOG_FILE);
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let (mut trainer, meta, resumed_from) = if ck_path.exists() {
        let ck = Checkpoint::load(&ck_path)?;
        let (model, meta) = load_model(&ck)?;
        check_hash("config", &meta.config_hash, &cfg.hash())?;
        check_hash("data", &meta.data_hash, &prep.data_hash)?;
        check_hash("schema", &meta.schema_hash, &schema_hash(prep.table.schema()))?;
        check_hash("vocabulary", &meta.vocab_hash, &vocab_hash(&prep.vocab))?;
        let mut trainer = Trainer::new(model, cfg.train.clone(), prep.records)?;
        ck.load_optimizer(&trainer.model, &mut trainer.optimizer, meta.step)?;
        info!("resuming from step {} of {}", meta.step, meta.total_steps);
        truncate_log(&log_path, meta.step)?;
        let step = meta.step;
        (trainer, meta, Some(step))
    } else {
        let codec = match &cfg.codec.path {
            Some(p) => load_codec(p, cfg.codec.pretrain.latent_dim)?,
            None => fit_codec_from(cfg)?.0,
        };
        let model = DiffusionModel::new(cfg.model.clone(), prep.layout.clone(), prep.vocab.len(), codec, &mut stream(cfg.run.init_seed, Domain::Init, 0))?;
        info!(
            "model: {} trainable parameters, sequence length {}, vocabulary {}",
            count_params(&model, true),
            prep.layout.len(),
            prep.vocab.len()
        );
        let meta = ModelMeta {
            format: FORMAT_VERSION,
            kind: "model".into(),
            config_toml: cfg.without_run_controls().to_toml(),
            config_hash: cfg.hash(),
            data_hash: prep.data_hash.clone(),
            schema: prep.table.schema().clone(),
            schema_hash: schema_hash(prep.table.schema()),
            vocab_hash: vocab_hash(&prep.vocab),
            vocabulary: prep.vocab.clone(),
            layout: prep.layout.clone(),
            normalizers: prep.normalizers.clone(),
            codec_checksum: format!("{:016x}", checksum(&model.codec)),
            step: 0,
            total_steps: 0,
        };
        truncate_log(&log_path, 0)?;
        (Trainer::new(model, cfg.train.clone(), prep.records)?, meta, None)
    };
    let meta = ModelMeta { total_steps: trainer.total_steps(), ..meta };

    let mut log = OpenOptions::new().create(true).append(true).open(&log_path).with_context(|| format!("opening {}", log_path.display()))?;
    let start = Instant::now();
    let first = trainer.step_index();
    let stop = cfg.run.max_steps.map_or(trainer.total_steps(), |m| m.min(trainer.total_steps()));
    let mut last = None;
    while trainer.step_index() < stop {
        let lr = trainer.optimizer.current_lr();
        let r = trainer.step()?;
        let rec = LogRecord { step: r.step, l_text: r.text, l_num: r.num, lambda: r.lambda, total: r.total, lr, wall_s: start.elapsed().as_secs_f64() };
        if r.step % cfg.run.log_every == 0 || trainer.step_index() == stop {
            writeln!(log, "{}", serde_json::to_string(&rec)?)?;
        }
        if r.step % 50 == 0 {
            info!("step {} / {}: text {:.4} num {:.4} lambda {:.3}", r.step, trainer.total_steps(), r.text, r.num, r.lambda);
        }
        last = Some(rec);
        let done = trainer.step_index();
        if cfg.run.checkpoint_every > 0 && done % cfg.run.checkpoint_every == 0 && done < stop {
            model_checkpoint(&trainer, &meta)?.save(&ck_path)?;
        }
    }
    log.flush()?;
    model_checkpoint(&trainer, &meta)?.save(&ck_path)?;
    Ok(TrainOutcome {
        checkpoint: ck_path,
        steps_run: trainer.step_index() - first,
        step: trainer.step_index(),
        total_steps: trainer.total_steps(),
        resumed_from,
        last,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub config_hash: String,
    pub checkpoint_sha256: String,
    pub checkpoint_step: u64,
    pub requested: usize,
    pub rows: usize,
    pub invalid_records: usize,
    pub sampler: SamplerConfig,
    pub csv_sha256: String,
}

pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("sample.json")
}

/// Draw `n` records from a trained checkpoint into a CSV with schema and
/// manifest sidecars.
pub fn cmd_sample(ckpt: &Path, n: usize, steps: usize, policy: UnmaskPolicy, seed: u64, out: &Path) -> Result<SampleManifest> {
    ensure!(n >= 1, "need at least one sample");
    let ck = Checkpoint::load(ckpt)?;
    let (model, meta) = load_model(&ck)?;
    if !meta.is_complete() {
        log::warn!("checkpoint stopped at step {} of {}", meta.step, meta.total_steps);
    }
    let cfg = meta.config()?;
    let sampler = SamplerConfig { steps, policy, seed, ..cfg.sampler.clone() };
    let start = Instant::now();
    let samples = sample(&model, n, &sampler)?;
    let (table, invalid) = decode_samples(&samples, &meta.schema, &meta.layout, &meta.vocabulary, &meta.normalizers)?;
    info!("sampled {n} records in {:.1}s, {invalid} did not decode", start.elapsed().as_secs_f64());
    write_csv(out, &table)?;
    write_schema(&schema_sidecar(out), &meta.schema)?;
    let manifest = SampleManifest {
        config_hash: meta.config_hash.clone(),
        checkpoint_sha256: file_sha256(ckpt)?,
        checkpoint_step: meta.step,
        requested: n,
        rows: table.num_rows(),
        invalid_records: invalid,
        sampler,
        csv_sha256: file_sha256(out)?,
    };
    write_json(&manifest_path(out), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub real_sha256: String,
    pub synth_sha256: String,
    pub schema_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler_seed: Option<u64>,
    pub report: FidelityReport,
}

/// Compare a synthetic CSV with a real one. Writes `<report>.json` and
/// `<report>.txt`.
pub fn cmd_eval(real: &Path, synth: &Path, schema: &Path, report: &Path) -> Result<EvalOutput> {
    let sch = read_schema(schema)?;
    let r = read_csv(real, &sch)?;
    let s = read_csv(synth, &sch)?;
    if s.num_rows() == 0 {
        bail!("{} has no rows to evaluate", synth.display());
    }
    let manifest: Option<SampleManifest> = match fs::read_to_string(manifest_path(synth)) {
        Ok(text) => Some(serde_json::from_str(&text).context("parsing sample manifest")?),
        Err(_) => None,
    };
    let invalid = manifest.as_ref().map_or(0, |m| m.invalid_records);
    let rep = evaluate(&r, &s, invalid)?;
    let out = EvalOutput {
        real_sha256: file_sha256(real)?,
        synth_sha256: file_sha256(synth)?,
        schema_sha256: file_sha256(schema)?,
        config_hash: manifest.as_ref().map(|m| m.config_hash.clone()),
        sampler_seed: manifest.as_ref().map(|m| m.sampler.seed),
        report: rep,
    };
    write_json(&report.with_extension("json"), &out)?;
    let mut text = out.report.to_text();
    if let Some(h) = &out.config_hash {
        text.push_str(&format!("\nconfig {h}\n"));
    }
    write_file(&report.with_extension("txt"), text.as_bytes())?;
    Ok(out)
}

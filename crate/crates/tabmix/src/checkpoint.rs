//! Named f32 tensors in a safetensors container with a JSON header entry.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tabmix_core::nn::{AdamW, Module, MomentState};

use crate::io::write_file;

/// Header key holding the JSON metadata. A single key keeps the header
/// bytes deterministic (the container stores its metadata as a hash map).
const META_KEY: &str = "tabmix";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: String,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new<M: Serialize>(meta: &M) -> Result<Self> {
        Ok(Self { meta: serde_json::to_string(meta)?, tensors: BTreeMap::new() })
    }

    pub fn meta<M: DeserializeOwned>(&self) -> Result<M> {
        serde_json::from_str(&self.meta).context("checkpoint metadata does not match this version")
    }

    pub fn insert(&mut self, name: String, shape: Vec<usize>, data: Vec<f32>) {
        self.tensors.insert(name, Tensor { shape, data });
    }

    /// Every parameter of `m` under `param.{prefix}{name}`.
    pub fn add_module(&mut self, prefix: &str, m: &impl Module<f32>) {
        m.visit(prefix, &mut |name, p| self.insert(format!("param.{name}"), p.shape.to_vec(), p.value.clone()));
    }

    /// Overwrite every parameter of `m`; all must be present with matching
    /// shapes.
    pub fn load_module(&self, prefix: &str, m: &mut impl Module<f32>) -> Result<()> {
        let mut err = None;
        m.visit_mut(prefix, &mut |name, p| {
            if err.is_some() {
                return;
            }
            match self.tensors.get(&format!("param.{name}")) {
                Some(t) if t.shape == p.shape && t.data.len() == p.value.len() => p.value.copy_from_slice(&t.data),
                Some(t) => err = Some(anyhow!("parameter {name}: checkpoint shape {:?}, model shape {:?}", t.shape, p.shape)),
                None => err = Some(anyhow!("parameter {name} missing from checkpoint")),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn add_optimizer(&mut self, model: &impl Module<f32>, opt: &AdamW<f32>) {
        let (_, state) = opt.export_state(model);
        for s in state {
            let n = s.m.len();
            self.insert(format!("adam.m.{}", s.name), vec![n], s.m);
            self.insert(format!("adam.v.{}", s.name), vec![n], s.v);
        }
    }

    pub fn load_optimizer(&self, model: &impl Module<f32>, opt: &mut AdamW<f32>, step: u64) -> Result<()> {
        let mut state = Vec::new();
        for (key, t) in &self.tensors {
            if let Some(name) = key.strip_prefix("adam.m.") {
                let v = self.tensors.get(&format!("adam.v.{name}")).ok_or_else(|| anyhow!("second moment of {name} missing"))?;
                state.push(MomentState { name: name.to_string(), m: t.data.clone(), v: v.data.clone() });
            }
        }
        opt.import_state(model, step, &state)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let bytes: Vec<(String, Vec<u8>, Vec<usize>)> = self
            .tensors
            .iter()
            .map(|(k, t)| (k.clone(), t.data.iter().flat_map(|x| x.to_le_bytes()).collect(), t.shape.clone()))
            .collect();
        let views = bytes
            .iter()
            .map(|(k, b, s)| Ok((k.as_str(), TensorView::new(Dtype::F32, s.clone(), b)?)))
            .collect::<Result<Vec<_>, safetensors::SafeTensorError>>()?;
        let mut header = HashMap::new();
        header.insert(META_KEY.to_string(), self.meta.clone());
        Ok(safetensors::serialize(views, &Some(header))?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let st = SafeTensors::deserialize(bytes)?;
        let (_, header) = SafeTensors::read_metadata(bytes)?;
        let meta = header
            .metadata()
            .as_ref()
            .and_then(|m| m.get(META_KEY))
            .ok_or_else(|| anyhow!("not a tabmix checkpoint (no `{META_KEY}` header entry)"))?
            .clone();
        let mut tensors = BTreeMap::new();
        for (name, view) in st.tensors() {
            ensure!(view.dtype() == Dtype::F32, "tensor {name} is {:?}, expected F32", view.dtype());
            let data = view.data().chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.insert(name, Tensor { shape: view.shape().to_vec(), data });
        }
        Ok(Self { meta, tensors })
    }

    /// Write through a temporary file so an interrupted save never leaves a
    /// truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("partial");
        write_file(&tmp, &self.to_bytes()?)?;
        fs::rename(&tmp, path).with_context(|| format!("moving checkpoint into {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("parsing checkpoint {}", path.display()))
    }
}

/// Refuse to continue when two recorded hashes disagree.
pub fn check_hash(what: &str, expected: &str, found: &str) -> Result<()> {
    if expected != found {
        bail!("{what} hash mismatch: checkpoint has {expected}, input has {found}");
    }
    Ok(())
}

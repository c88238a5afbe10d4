//! Versioned checkpoint: one JSON header line, then every parameter tensor as
//! little-endian `f64` in declaration order.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{AblationMode, ModelDims, NepModel};

pub const FORMAT: &str = "nep-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub shape_hash: String,
    pub dims: ModelDims,
    pub mode: AblationMode,
    pub best_epoch: usize,
    /// Canonical config text the model was trained with.
    pub config: String,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: Header,
    pub model: NepModel,
    pub config: RunConfig,
}

pub fn to_bytes(model: &NepModel, config: &RunConfig, best_epoch: usize) -> Result<Vec<u8>> {
    let tensors = model.tensors();
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        config_hash: config.hash(),
        shape_hash: config.shape_hash(),
        dims: model.dims,
        mode: model.mode,
        best_epoch,
        config: config.to_text(),
        tensors: model
            .tensor_names()
            .into_iter()
            .zip(&tensors)
            .map(|(name, t)| TensorInfo { name, len: t.len() })
            .collect(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for t in tensors {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedCheckpoint("missing header line".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..split])?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::MalformedCheckpoint(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let config = RunConfig::from_text(&header.config)?;
    if config.hash() != header.config_hash {
        return Err(Error::MalformedCheckpoint("config hash does not match stored config".into()));
    }

    // shapes come from the architecture; values are overwritten below
    let mut model = NepModel::new(header.dims, header.mode, &mut ChaCha8Rng::seed_from_u64(0));
    let names = model.tensor_names();
    if names.len() != header.tensors.len()
        || names
            .iter()
            .zip(&header.tensors)
            .any(|(n, t)| *n != t.name)
    {
        return Err(Error::MalformedCheckpoint("tensor list does not match architecture".into()));
    }
    let mut data = bytes[split + 1..].chunks_exact(8);
    if data.len() != header.tensors.iter().map(|t| t.len).sum::<usize>() || !data.remainder().is_empty() {
        return Err(Error::MalformedCheckpoint("parameter payload has the wrong length".into()));
    }
    for (t, info) in model.tensors_mut().into_iter().zip(&header.tensors) {
        if t.len() != info.len {
            return Err(Error::MalformedCheckpoint(format!("tensor {} has wrong length", info.name)));
        }
        for v in t.iter_mut() {
            let chunk = data.next().expect("length checked");
            *v = f64::from_le_bytes(chunk.try_into().expect("chunks of 8"));
        }
    }
    Ok(Checkpoint {
        header,
        model,
        config,
    })
}

pub fn save(path: &Path, model: &NepModel, config: &RunConfig, best_epoch: usize) -> Result<()> {
    std::fs::write(path, to_bytes(model, config, best_epoch)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

impl Checkpoint {
    /// Rejects a checkpoint whose shapes differ from what `config` and the
    /// corpus dimension require.
    pub fn check_compatible(&self, config: &RunConfig, corpus_dim: Option<usize>) -> Result<()> {
        if self.header.shape_hash != config.shape_hash() {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint dims {:?} differ from config dims {:?}",
                self.header.dims,
                config.dims()
            )));
        }
        if let Some(dim) = corpus_dim {
            if dim != self.header.dims.embed {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "corpus dimension {dim} != checkpoint dimension {}",
                    self.header.dims.embed
                )));
            }
        }
        Ok(())
    }
}

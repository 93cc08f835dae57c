//! Checkpoint file: a single-line UTF-8 JSON header, `\n\0`, then the raw
//! little-endian `f32` blob. Header offsets are byte offsets into the blob;
//! the header carries a SHA-256 of the blob.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "ecgnet-checkpoint";
const CHECKSUM_ALGORITHM: &str = "sha256";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: Option<usize>,
    pub seed: u64,
    pub thresholds: Option<Vec<f64>>,
    /// Lead names in input-channel order.
    pub leads: Vec<String>,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
    nbytes: usize,
}

#[derive(Serialize, Deserialize)]
struct Checksum {
    algorithm: String,
    value: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    metadata: CheckpointMeta,
    checksum: Checksum,
}

pub fn save_checkpoint(net: &Network, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for (name, t) in net.named_tensors() {
        let offset = blob.len();
        for v in t.data() {
            blob.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            offset,
            nbytes: blob.len() - offset,
        });
    }
    let header = Header {
        format: MAGIC.into(),
        version: CHECKPOINT_VERSION,
        config: net.cfg.clone(),
        tensors,
        metadata: meta.clone(),
        checksum: Checksum {
            algorithm: CHECKSUM_ALGORITHM.into(),
            value: hex::encode(Sha256::digest(&blob)),
        },
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.extend_from_slice(b"\n\0");
    bytes.extend_from_slice(&blob);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\0")
        .ok_or_else(|| Error::Checkpoint("missing header terminator".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != MAGIC {
        return Err(Error::Checkpoint(format!(
            "not a checkpoint (format `{}`)",
            header.format
        )));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version {} not supported (expected {CHECKPOINT_VERSION})",
            header.version
        )));
    }
    let blob = &bytes[split + 2..];
    let expected: usize = header.tensors.iter().map(|t| t.nbytes).sum();
    if blob.len() != expected {
        return Err(Error::Checkpoint(format!(
            "truncated blob: {} bytes, header describes {expected}",
            blob.len()
        )));
    }
    if header.checksum.algorithm != CHECKSUM_ALGORITHM {
        return Err(Error::Checkpoint(format!(
            "unsupported checksum `{}`",
            header.checksum.algorithm
        )));
    }
    if hex::encode(Sha256::digest(blob)) != header.checksum.value {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }

    let mut spans: Vec<(usize, usize)> = header
        .tensors
        .iter()
        .map(|t| (t.offset, t.offset + t.nbytes))
        .collect();
    spans.sort_unstable();
    if spans.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(Error::Checkpoint("overlapping tensor offsets".into()));
    }

    let mut net = Network::build(&header.config, 0)?;
    let mut slots: BTreeMap<String, &mut Tensor> = net.named_tensors_mut().into_iter().collect();
    let mut seen = HashSet::new();
    for entry in &header.tensors {
        let slot = slots
            .get_mut(&entry.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{}`", entry.name)))?;
        if !seen.insert(entry.name.as_str()) {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` stored twice",
                entry.name
            )));
        }
        if entry.dtype != "f32"
            || slot.shape() != entry.shape.as_slice()
            || entry.nbytes != slot.len() * 4
        {
            return Err(Error::Checkpoint(format!(
                "tensor `{}`: stored {:?} {}, model expects {:?} f32",
                entry.name,
                entry.shape,
                entry.dtype,
                slot.shape()
            )));
        }
        let raw = blob
            .get(entry.offset..entry.offset + entry.nbytes)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{}` out of bounds", entry.name)))?;
        for (dst, chunk) in slot.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f64::from(f32::from_le_bytes(chunk.try_into().expect("4 bytes")));
        }
    }
    if let Some(missing) = slots.keys().find(|k| !seen.contains(k.as_str())) {
        return Err(Error::Checkpoint(format!("tensor `{missing}` missing")));
    }
    drop(slots);
    Ok((net, header.metadata))
}

impl Network {
    /// Errors unless the network accepts `n_leads`-channel inputs of `nsteps` samples.
    pub fn ensure_input(&self, n_leads: usize, nsteps: usize) -> Result<()> {
        if self.cfg.n_leads != n_leads || self.cfg.nsteps != nsteps {
            return Err(Error::Config(format!(
                "model expects {} leads x {} samples, data has {n_leads} x {nsteps}",
                self.cfg.n_leads, self.cfg.nsteps
            )));
        }
        Ok(())
    }
}

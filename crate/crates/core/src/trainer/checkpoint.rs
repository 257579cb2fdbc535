//! Checkpoints as a pair of files: `ckpt_epoch_{E}.bin` holds raw
//! little-endian `f64` values (parameters, then Adam first and second
//! moments), `ckpt_epoch_{E}.json` holds names, shapes, metadata and a
//! SHA-256 of the binary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AdamState, EpochStats, TrainConfig};
use crate::autograd::ParamStore;
use crate::error::{Error, Result};
use crate::lfdfnet::{ModelManifest, NetworkConfig};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"LFDFCKP1";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub init_seed: u64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub manifest: ModelManifest,
    pub history: Vec<EpochStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub adam: AdamState,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    adam_t: u64,
    tensors: Vec<TensorEntry>,
    sha256: String,
    meta: CheckpointMeta,
}

/// `(bin, json)` paths of the checkpoint after `epoch` completed epochs.
pub fn checkpoint_paths(dir: &Path, epoch: usize) -> (PathBuf, PathBuf) {
    let stem = format!("ckpt_epoch_{epoch}");
    (
        dir.join(format!("{stem}.bin")),
        dir.join(format!("{stem}.json")),
    )
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Checkpoint {
    fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.params
            .ids()
            .map(|id| self.params.get(id))
            .chain(&self.adam.m)
            .chain(&self.adam.v)
    }

    /// Writes both files into `dir`; returns the JSON path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (bin_path, json_path) = checkpoint_paths(dir, self.meta.epoch);
        let mut bin = MAGIC.to_vec();
        for t in self.tensors() {
            for x in t.data() {
                bin.extend_from_slice(&x.to_le_bytes());
            }
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            adam_t: self.adam.t,
            tensors: self
                .params
                .ids()
                .map(|id| TensorEntry {
                    name: self.params.name(id).to_string(),
                    shape: self.params.get(id).shape().to_vec(),
                })
                .collect(),
            sha256: hex(&bin),
            meta: self.meta.clone(),
        };
        std::fs::write(&bin_path, &bin).map_err(|e| Error::io(&bin_path, e))?;
        let json = serde_json::to_vec_pretty(&header)?;
        std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
        Ok(json_path)
    }

    /// Loads from the JSON path (or the `.bin` next to it).
    pub fn load(path: &Path) -> Result<Self> {
        let json_path = path.with_extension("json");
        let bin_path = path.with_extension("bin");
        let text = std::fs::read(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let header: Header = serde_json::from_slice(&text)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let bin = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        if hex(&bin) != header.sha256 {
            return Err(Error::Checkpoint(format!(
                "checksum mismatch for {}",
                bin_path.display()
            )));
        }
        if !bin.starts_with(MAGIC) {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let scalars: usize = header
            .tensors
            .iter()
            .map(|t| t.shape.iter().product::<usize>())
            .sum();
        let body = &bin[MAGIC.len()..];
        if body.len() != 3 * scalars * 8 {
            return Err(Error::Checkpoint(format!(
                "expected {} values, found {} bytes",
                3 * scalars,
                body.len()
            )));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor::from_vec(shape, values.by_ref().take(n).collect())
        };
        let mut params = ParamStore::new();
        for t in &header.tensors {
            if params.id(&t.name).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor {}", t.name)));
            }
            params.add(t.name.clone(), take(&t.shape));
        }
        let m = header.tensors.iter().map(|t| take(&t.shape)).collect();
        let v = header.tensors.iter().map(|t| take(&t.shape)).collect();
        Ok(Self {
            params,
            adam: AdamState {
                t: header.adam_t,
                m,
                v,
            },
            meta: header.meta,
        })
    }
}

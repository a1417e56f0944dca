//! Checkpoint file: an 8-byte little-endian header length, a JSON header
//! (config, step, seed and a manifest of tensor names, shapes and float
//! offsets), then every tensor as little-endian `f32` in manifest order.
//! Parameters come first, followed by the optimizer moments `adam.m/<name>`
//! and `adam.v/<name>`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError, ParamStore};
use crate::tensor::{AdamState, Tensor};

const FORMAT: &str = "tabrec-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    step: u64,
    seed: u64,
    optimizer_step: u64,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    pub optimizer: AdamState<f32>,
    /// Training steps taken.
    pub step: u64,
    pub seed: u64,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(model: &Model<f32>, optimizer: AdamState<f32>, step: u64, seed: u64) -> Self {
        Self {
            config: model.config.clone(),
            params: model.params.clone(),
            optimizer,
            step,
            seed,
        }
    }

    pub fn model(&self) -> Result<Model<f32>, ModelError> {
        Model::from_params(self.config.clone(), self.params.clone())
    }

    fn tensors(&self) -> Vec<(String, &Tensor<f32>)> {
        let p = &self.params;
        let mut out: Vec<(String, &Tensor<f32>)> =
            p.names.iter().cloned().zip(&p.tensors).collect();
        for (prefix, slots) in [
            ("adam.m/", &self.optimizer.m),
            ("adam.v/", &self.optimizer.v),
        ] {
            out.extend(p.names.iter().map(|n| format!("{prefix}{n}")).zip(slots));
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let tensors = self.tensors();
        let mut offset = 0;
        let entries = tensors
            .iter()
            .map(|(name, t)| {
                let e = Entry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.numel();
                e
            })
            .collect();
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            config: self.config.clone(),
            step: self.step,
            seed: self.seed,
            optimizer_step: self.optimizer.step,
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
        let mut out = Vec::with_capacity(8 + json.len() + offset * 4);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| bad("truncated header length"))?;
        let len = u64::from_le_bytes(len_bytes) as usize;
        let json = bytes
            .get(8..8usize.saturating_add(len))
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| bad(format!("header: {e}")))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(bad(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let blob = &bytes[8 + len..];
        let floats: Vec<f32> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of four")))
            .collect();
        if !blob.len().is_multiple_of(4) {
            return Err(bad("blob length is not a multiple of four"));
        }
        let skeleton = Model::<f32>::new(header.config.clone(), 0)?;
        let names = &skeleton.params.names;
        let expected: Vec<String> = names
            .iter()
            .cloned()
            .chain(names.iter().map(|n| format!("adam.m/{n}")))
            .chain(names.iter().map(|n| format!("adam.v/{n}")))
            .collect();
        let got: Vec<&String> = header.tensors.iter().map(|e| &e.name).collect();
        if got.len() != expected.len() || got.iter().zip(&expected).any(|(a, b)| *a != b) {
            return Err(bad("tensor manifest does not match the config"));
        }
        let mut tensors = Vec::with_capacity(expected.len());
        let mut next = 0;
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            if e.offset != next || e.offset + n > floats.len() {
                return Err(bad(format!("tensor {} has a bad offset", e.name)));
            }
            tensors.push(
                Tensor::new(e.shape.clone(), floats[e.offset..e.offset + n].to_vec())
                    .map_err(|err| bad(err.to_string()))?,
            );
            next += n;
        }
        if next != floats.len() {
            return Err(bad("trailing data after the last tensor"));
        }
        let k = names.len();
        let v = tensors.split_off(2 * k);
        let m = tensors.split_off(k);
        let params = ParamStore {
            names: names.clone(),
            tensors,
        };
        Model::from_params(header.config.clone(), params.clone())?;
        Ok(Self {
            config: header.config,
            params,
            optimizer: AdamState {
                m,
                v,
                step: header.optimizer_step,
            },
            step: header.step,
            seed: header.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()?).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

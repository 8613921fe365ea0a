//! Checkpoint file.
//!
//! ```text
//! magic     8 bytes "SGCKPT\0\0"
//! version   u32
//! header    u32 length + UTF-8 JSON (model kind, hyperparameters, node count,
//!           normalization constants, graph fingerprint, training metadata)
//! sections  u32 count, then per parameter tensor:
//!               name  u32 length + UTF-8
//!               ndim  u32, dims u64 × ndim
//!               data  f64 × numel
//! crc32     u32 over everything above
//! ```
//!
//! Little-endian throughout. Values are stored bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConvBiGru, ConvBiGruConfig, Model, ModelKind, StreamConfig, StreamGConvGru};
use crate::binfmt::{read_file, write_file, BinReader, BinWriter};
use crate::dataset::NormalizationConstants;
use crate::error::{Error, Result};
use crate::graph::ScaledLaplacian;
use crate::params::Parameterized;

const MAGIC: &[u8; 8] = b"SGCKPT\0\0";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    /// 1-based epoch the weights come from.
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub num_nodes: usize,
    pub normalization: NormalizationConstants,
    pub graph_fingerprint: String,
    pub training: TrainingMetadata,
}

impl ModelCheckpoint {
    /// Fails unless `laplacian` was built from the graph the model was
    /// trained on.
    pub fn verify_graph(&self, laplacian: &ScaledLaplacian) -> Result<()> {
        if laplacian.graph_fingerprint() != self.graph_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.graph_fingerprint.clone(),
                found: laplacian.graph_fingerprint().to_string(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (stream, conv_bigru) = match &self.model {
            Model::StreamGConvGru(m) => (Some(m.config()), None),
            Model::ConvBiGru(m) => (None, Some(m.config())),
        };
        let header = Header {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model: self.model.kind(),
            stream,
            conv_bigru,
            num_nodes: self.num_nodes,
            normalization: self.normalization,
            graph_fingerprint: self.graph_fingerprint.clone(),
            training: self.training,
        };
        let mut w = BinWriter::new();
        w.bytes(MAGIC);
        w.u32(CHECKPOINT_FORMAT_VERSION);
        w.blob(serde_json::to_string(&header)?.as_bytes());
        let params = self.model.named_params();
        w.u32(params.len() as u32);
        for (name, t) in params {
            w.blob(name.as_bytes());
            w.u32(t.rank() as u32);
            for &d in t.shape() {
                w.u64(d as u64);
            }
            w.f64s(t.data());
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = BinReader::verified(bytes, path)?;
        if r.bytes(MAGIC.len())? != MAGIC {
            return Err(r.err("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: CHECKPOINT_FORMAT_VERSION,
                found: version,
            });
        }
        let header: Header = serde_json::from_slice(r.blob()?)
            .map_err(|e| r.err(&format!("invalid header: {e}")))?;
        if header.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: CHECKPOINT_FORMAT_VERSION,
                found: header.format_version,
            });
        }
        let mut model = match (header.model, header.stream, header.conv_bigru) {
            (ModelKind::StreamGconvgru, Some(c), None) => Model::StreamGConvGru(StreamGConvGru::zeros(
                c,
                header.num_nodes,
                header.graph_fingerprint.clone(),
            )?),
            (ModelKind::ConvBigru, None, Some(c)) => Model::ConvBiGru(ConvBiGru::zeros(c)?),
            _ => return Err(r.err("header hyperparameters do not match the model kind")),
        };

        let count = r.u32()? as usize;
        let mut params = model.named_params_mut();
        if count != params.len() {
            return Err(r.err(&format!(
                "expected {} parameter tensors, found {count}",
                params.len()
            )));
        }
        for (expected_name, tensor) in params.iter_mut() {
            let name = r.blob()?;
            if name != expected_name.as_bytes() {
                return Err(r.err(&format!(
                    "expected parameter `{expected_name}`, found `{}`",
                    String::from_utf8_lossy(name)
                )));
            }
            let ndim = r.u32()? as usize;
            let mut dims = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                dims.push(r.u64()? as usize);
            }
            if dims != tensor.shape() {
                return Err(r.err(&format!(
                    "parameter `{expected_name}` has shape {dims:?}, expected {:?}",
                    tensor.shape()
                )));
            }
            let data = r.f64s(tensor.numel())?;
            tensor.data_mut().copy_from_slice(&data);
        }
        drop(params);
        r.expect_end()?;
        Ok(ModelCheckpoint {
            model,
            num_nodes: header.num_nodes,
            normalization: header.normalization,
            graph_fingerprint: header.graph_fingerprint,
            training: header.training,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    stream: Option<StreamConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    conv_bigru: Option<ConvBiGruConfig>,
    num_nodes: usize,
    normalization: NormalizationConstants,
    graph_fingerprint: String,
    training: TrainingMetadata,
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &ModelCheckpoint) -> Result<()> {
    write_file(path.as_ref(), &checkpoint.to_bytes()?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let path = path.as_ref();
    ModelCheckpoint::from_bytes(&read_file(path)?, path)
}

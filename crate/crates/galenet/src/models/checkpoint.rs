//! Checkpoint files.
//!
//! Layout (little-endian): 4-byte magic `GLCK`, u32 version = 1, u32 JSON
//! header length, the UTF-8 JSON header (model kind + config, fitted
//! standardization statistics, training metadata, tensor directory), then
//! the named tensors as f64 LE, concatenated in directory order. Parameter
//! round-trips are bitwise.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{NormStats, Scenario};
use crate::error::{Error, Result};
use crate::models::{
    ConcatMlpConfig, ConcatMlpModel, FusionModel, GaLeNetConfig, GaLeNetModel, LogRegConfig,
    LogRegModel,
};
use crate::nn::tensor::Tensor2;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub seed: u64,
    pub epochs_trained: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum KindConfig {
    Logreg {
        config: LogRegConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        chosen_c: Option<f64>,
    },
    ConcatMlp {
        config: ConcatMlpConfig,
    },
    Galenet {
        config: GaLeNetConfig,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    /// Offset into the payload, in f64 elements.
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    model: KindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm: Option<NormStats>,
    metadata: CheckpointMetadata,
    tensors: Vec<TensorEntry>,
}

fn named_tensors(model: &FusionModel) -> Vec<(String, &Tensor2)> {
    let mut out: Vec<(String, &Tensor2)> = Vec::new();
    match model {
        FusionModel::LogReg(m) => {
            out.extend(m.param_names().into_iter().zip(m.params()));
        }
        FusionModel::ConcatMlp(m) => {
            out.extend(m.param_names().into_iter().zip(m.params()));
        }
        FusionModel::GaLeNet(m) => {
            out.extend(m.param_names().into_iter().zip(m.params()));
            out.extend(m.buffers());
        }
    }
    out
}

/// Saves a model (with its fitted standardization statistics and training
/// metadata) to `path`.
pub fn save_checkpoint(
    model: &FusionModel,
    norm: Option<&NormStats>,
    metadata: &CheckpointMetadata,
    path: &Path,
) -> Result<()> {
    let kind_config = match model {
        FusionModel::LogReg(m) => KindConfig::Logreg {
            config: m.config.clone(),
            chosen_c: m.chosen_c,
        },
        FusionModel::ConcatMlp(m) => KindConfig::ConcatMlp {
            config: m.config.clone(),
        },
        FusionModel::GaLeNet(m) => KindConfig::Galenet {
            config: m.config.clone(),
        },
    };
    let tensors = named_tensors(model);
    let mut directory = Vec::with_capacity(tensors.len());
    let mut offset = 0usize;
    for (name, t) in &tensors {
        directory.push(TensorEntry {
            name: name.clone(),
            rows: t.rows(),
            cols: t.cols(),
            offset,
        });
        offset += t.len();
    }
    let header = Header {
        model: kind_config,
        norm: norm.cloned(),
        metadata: metadata.clone(),
        tensors: directory,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    for (_, t) in &tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint, rebuilding the model from its stored config and
/// filling every named tensor.
pub fn load_checkpoint(path: &Path) -> Result<(FusionModel, Option<NormStats>, CheckpointMetadata)> {
    let file = File::open(path).map_err(|source| Error::MissingFile {
        path: path.display().to_string(),
        source,
    })?;
    let mut r = BufReader::new(file);
    let mut fixed = [0u8; 12];
    r.read_exact(&mut fixed)
        .map_err(|_| Error::CorruptedCheckpoint("file shorter than the fixed header".into()))?;
    let magic: [u8; 4] = fixed[0..4].try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = u32::from_le_bytes(fixed[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let header_len = u32::from_le_bytes(fixed[8..12].try_into().unwrap()) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)
        .map_err(|_| Error::CorruptedCheckpoint("truncated JSON header".into()))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::CorruptedCheckpoint(format!("header does not parse: {e}")))?;

    let total_elems: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum();
    let mut payload = Vec::with_capacity(total_elems * 8);
    r.read_to_end(&mut payload)?;
    if payload.len() != total_elems * 8 {
        return Err(Error::CorruptedCheckpoint(format!(
            "payload holds {} bytes, directory promises {}",
            payload.len(),
            total_elems * 8
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut model = match &header.model {
        KindConfig::Logreg { config, chosen_c } => {
            let mut m = LogRegModel::build(config.input_dim, config.features);
            m.config = config.clone();
            m.chosen_c = *chosen_c;
            FusionModel::LogReg(m)
        }
        KindConfig::ConcatMlp { config } => {
            FusionModel::ConcatMlp(ConcatMlpModel::zeros(config.clone())?)
        }
        KindConfig::Galenet { config } => {
            FusionModel::GaLeNet(GaLeNetModel::zeros(config.clone())?)
        }
    };

    {
        let mut targets: Vec<(String, &mut Tensor2)> = match &mut model {
            FusionModel::LogReg(m) => m.param_names().into_iter().zip(m.params_mut()).collect(),
            FusionModel::ConcatMlp(m) => m.param_names().into_iter().zip(m.params_mut()).collect(),
            FusionModel::GaLeNet(m) => m.named_tensors_mut(),
        };
        if targets.len() != header.tensors.len() {
            return Err(Error::CorruptedCheckpoint(format!(
                "directory lists {} tensors, model wants {}",
                header.tensors.len(),
                targets.len()
            )));
        }
        for entry in &header.tensors {
            let slot = targets
                .iter_mut()
                .find(|(name, _)| name == &entry.name)
                .ok_or_else(|| {
                    Error::CorruptedCheckpoint(format!("unknown tensor {:?}", entry.name))
                })?;
            let t = &mut slot.1;
            if t.shape() != (entry.rows, entry.cols) {
                return Err(Error::CorruptedCheckpoint(format!(
                    "tensor {:?} is {}x{}, model expects {}x{}",
                    entry.name,
                    entry.rows,
                    entry.cols,
                    t.rows(),
                    t.cols()
                )));
            }
            let n = entry.rows * entry.cols;
            if entry.offset + n > values.len() {
                return Err(Error::CorruptedCheckpoint(format!(
                    "tensor {:?} overruns the payload",
                    entry.name
                )));
            }
            t.data_mut()
                .copy_from_slice(&values[entry.offset..entry.offset + n]);
        }
    }
    Ok((model, header.norm, header.metadata))
}

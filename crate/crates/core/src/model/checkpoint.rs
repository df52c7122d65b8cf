//! Model checkpoints: config header plus raw parameter data.
//!
//! Layout: 8-byte magic, u64 LE header length, JSON header (format version,
//! scalar type, model config, parameter manifest), then every parameter's
//! elements as f64 little-endian in registration order. f32 values survive
//! the f64 encoding bit-exactly, so a round trip reproduces the store.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{Model, ModelConfig};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"FVCP0001";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    BadVersion(u32),
    #[error("checkpoint stores {found} values but this model uses {expected}")]
    DtypeMismatch { found: String, expected: String },
    #[error("invalid header: {0}")]
    BadHeader(String),
    #[error("stored config is invalid: {0}")]
    BadConfig(String),
    #[error("parameter set mismatch: {0}")]
    ParamMismatch(String),
    #[error("file truncated while reading {0}")]
    Truncated(String),
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    config: ModelConfig,
    params: Vec<ParamMeta>,
}

fn dtype_name<T: Scalar>() -> String {
    std::any::type_name::<T>().to_string()
}

/// Write the model (config and all parameters) to `path`.
pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<(), CheckpointError> {
    let store = &model.store;
    let params: Vec<ParamMeta> = store
        .ids()
        .map(|id| ParamMeta {
            name: store.name(id).to_string(),
            shape: store.value(id).shape().to_vec(),
            trainable: store.is_trainable(id),
        })
        .collect();
    let header = Header {
        format_version: FORMAT_VERSION,
        dtype: dtype_name::<T>(),
        config: model.cfg.clone(),
        params,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| CheckpointError::BadHeader(e.to_string()))?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())?;
    w.write_all(&header_json)?;
    for id in store.ids() {
        for &v in store.value(id).data() {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuild a model from `path`. The scalar type must match the one the file
/// was saved with, and the stored parameter manifest must agree with what the
/// stored config constructs.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes).map_err(|_| CheckpointError::Truncated("header".into()))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json).map_err(|_| CheckpointError::Truncated("header".into()))?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;

    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::BadVersion(header.format_version));
    }
    let expected = dtype_name::<T>();
    if header.dtype != expected {
        return Err(CheckpointError::DtypeMismatch { found: header.dtype, expected });
    }
    header.config.validate().map_err(|e| CheckpointError::BadConfig(e.to_string()))?;

    // Rebuild the parameter structure from the config, then overwrite values.
    let mut model: Model<T> = Model::new(header.config.clone(), 0);
    let store_params: Vec<_> = model.store.ids().collect();
    if store_params.len() != header.params.len() {
        return Err(CheckpointError::ParamMismatch(format!(
            "file lists {} parameters, config constructs {}",
            header.params.len(),
            store_params.len()
        )));
    }
    for (id, meta) in store_params.iter().zip(&header.params) {
        let name = model.store.name(*id);
        if name != meta.name {
            return Err(CheckpointError::ParamMismatch(format!(
                "expected parameter {name:?}, file has {:?}",
                meta.name
            )));
        }
        if model.store.value(*id).shape() != meta.shape.as_slice() {
            return Err(CheckpointError::ParamMismatch(format!(
                "parameter {name:?} has shape {:?} in the file, {:?} in the config",
                meta.shape,
                model.store.value(*id).shape()
            )));
        }
        if model.store.is_trainable(*id) != meta.trainable {
            return Err(CheckpointError::ParamMismatch(format!(
                "parameter {name:?} trainable flag disagrees with the config"
            )));
        }
    }
    let mut buf = [0u8; 8];
    for id in store_params {
        let name = model.store.name(id).to_string();
        let value = model.store.value_mut(id);
        for v in value.data_mut() {
            r.read_exact(&mut buf).map_err(|_| CheckpointError::Truncated(name.clone()))?;
            *v = T::from_f64_lossy(f64::from_le_bytes(buf));
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny_cfg() -> ModelConfig {
        let mut cfg = ModelConfig::desk();
        cfg.image_size = 16;
        cfg.backbone_channels = vec![8, 16];
        cfg.hidden = 16;
        cfg.ffn = 32;
        cfg.heads = 2;
        cfg.enc_layers = 1;
        cfg.dec_layers = 1;
        cfg.seq_len = 8;
        cfg.bins = 4;
        cfg
    }

    #[test]
    fn round_trip_is_bit_exact_for_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fvcp");
        let model: Model<f32> = Model::new(tiny_cfg(), 7);
        save_checkpoint(&model, &path).unwrap();
        let loaded: Model<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(model.cfg, loaded.cfg);
        for id in model.store.ids() {
            let a = model.store.value(id);
            let b = loaded.store.value(id);
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{}", model.store.name(id));
            }
        }
    }

    #[test]
    fn round_trip_is_bit_exact_for_f64() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fvcp");
        let mut model: Model<f64> = Model::new(tiny_cfg(), 7);
        // Perturb so the file is not just the seed-0 init.
        let id = model.store.id_of("head.token.w").unwrap();
        model.store.value_mut(id).data_mut()[0] = 0.123456789012345_f64;
        save_checkpoint(&model, &path).unwrap();
        let loaded: Model<f64> = load_checkpoint(&path).unwrap();
        for id in model.store.ids() {
            for (x, y) in model.store.value(id).data().iter().zip(loaded.store.value(id).data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn dtype_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fvcp");
        let model: Model<f32> = Model::new(tiny_cfg(), 7);
        save_checkpoint(&model, &path).unwrap();
        let err = load_checkpoint::<f64>(&path).unwrap_err();
        assert!(matches!(err, CheckpointError::DtypeMismatch { .. }), "{err}");
    }

    #[test]
    fn garbage_and_truncation_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.fvcp");
        std::fs::write(&bad, b"not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint::<f32>(&bad).unwrap_err(), CheckpointError::BadMagic));

        let path = dir.path().join("m.fvcp");
        let model: Model<f32> = Model::new(tiny_cfg(), 7);
        save_checkpoint(&model, &path).unwrap();
        let full = std::fs::read(&path).unwrap();
        let cut = path.with_extension("cut");
        std::fs::write(&cut, &full[..full.len() - 9]).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&cut).unwrap_err(),
            CheckpointError::Truncated(_)
        ));
    }
}

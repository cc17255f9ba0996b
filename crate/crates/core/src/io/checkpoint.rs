//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PMV1"                      4 magic bytes
//! version: u32                currently 1
//! descriptor_len: u32         length of the JSON block
//! descriptor: UTF-8 JSON      architecture (configs, classes, step)
//! tensor_count: u32
//! per tensor:
//!   name_len: u32, name: UTF-8
//!   rows: u32, cols: u32
//!   rows·cols f64 values, row-major, little-endian
//! crc: u32                    CRC32 (IEEE) of all preceding bytes
//! ```
//!
//! The loader rejects unknown versions, validates the CRC before parsing
//! anything behind the header, and re-validates the bundle's dimension
//! chain after reconstruction.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::atomic_write;
use crate::error::{Error, Result};
use crate::gradcheck::ParamAccess;
use crate::mat::Matrix;
use crate::models::{init_models, DistanceConfig, EncoderConfig, HeadInit, ModelBundle};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PMV1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Descriptor {
    encoder: EncoderConfig,
    distance: DistanceConfig,
    num_classes: usize,
    head_bias: bool,
    train_step: u64,
}

pub fn save_checkpoint(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let descriptor = Descriptor {
        encoder: bundle.enc_cfg.clone(),
        distance: bundle.dist_cfg.clone(),
        num_classes: bundle.num_classes,
        head_bias: bundle.head_bias(),
        train_step: bundle.train_step,
    };
    let descriptor_json =
        serde_json::to_vec(&descriptor).map_err(|e| Error::Format(format!("descriptor: {e}")))?;

    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(descriptor_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&descriptor_json);
    bytes.extend_from_slice(&(bundle.num_tensors() as u32).to_le_bytes());
    for t in 0..bundle.num_tensors() {
        let name = bundle.tensor_name(t);
        let value = &bundle.tensor(t).value;
        bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
        bytes.extend_from_slice(name.as_bytes());
        bytes.extend_from_slice(&(value.rows() as u32).to_le_bytes());
        bytes.extend_from_slice(&(value.cols() as u32).to_le_bytes());
        for &v in value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    atomic_write(path, &bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.offset + n;
        let s = self
            .bytes
            .get(self.offset..end)
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at offset {}", self.offset)))?;
        self.offset = end;
        Ok(s)
    }

    fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64_le(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ModelBundle> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 {
        return Err(Error::Format("checkpoint too short".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader {
        bytes: body,
        offset: 0,
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32_le()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let descriptor_len = r.u32_le()? as usize;
    let descriptor: Descriptor = serde_json::from_slice(r.take(descriptor_len)?)
        .map_err(|e| Error::Format(format!("descriptor: {e}")))?;

    let mut bundle = init_models(
        &descriptor.encoder,
        &descriptor.distance,
        descriptor.num_classes,
        descriptor.head_bias,
        HeadInit::Zeros,
        0,
    )?;
    bundle.train_step = descriptor.train_step;

    let tensor_count = r.u32_le()? as usize;
    if tensor_count != bundle.num_tensors() {
        return Err(Error::dimension(
            "checkpoint tensor count",
            bundle.num_tensors(),
            tensor_count,
        ));
    }
    for t in 0..tensor_count {
        let name_len = r.u32_le()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let expected = bundle.tensor_name(t);
        if name != expected {
            return Err(Error::Format(format!(
                "tensor {t} name {name:?}, expected {expected:?}"
            )));
        }
        let rows = r.u32_le()? as usize;
        let cols = r.u32_le()? as usize;
        let shape = bundle.tensor(t).value.shape();
        if (rows, cols) != shape {
            return Err(Error::dimension(
                format!("checkpoint tensor {name}"),
                format!("{}x{}", shape.0, shape.1),
                format!("{rows}x{cols}"),
            ));
        }
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = r.f64_le()?;
        }
        bundle.tensor_mut(t).value = m;
    }
    if r.offset != body.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensors",
            body.len() - r.offset
        )));
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Matrix;
    use crate::models::distance_score;
    use crate::rng::Rng;

    fn trained_ish_bundle() -> ModelBundle {
        let enc = EncoderConfig {
            input_dim: 5,
            hidden_dims: vec![7],
            embedding_dim: 3,
            slope: 0.01,
        };
        let dist = DistanceConfig {
            embedding_dim: 3,
            depth: 2,
            width: 6,
            dropout: 0.1,
            slope: 0.01,
        };
        let mut bundle = init_models(&enc, &dist, 4, true, HeadInit::Zeros, 9).unwrap();
        let mut rng = Rng::new(17);
        for t in 0..bundle.num_tensors() {
            for v in bundle.tensor_mut(t).value.data_mut() {
                *v += rng.normal();
            }
        }
        bundle.train_step = 1234;
        bundle
    }

    #[test]
    fn roundtrip_is_bit_exact_and_scores_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pmv");
        let bundle = trained_ish_bundle();
        save_checkpoint(&bundle, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();

        assert_eq!(back.train_step, 1234);
        for t in 0..bundle.num_tensors() {
            assert_eq!(
                bundle.tensor(t).value,
                back.tensor(t).value,
                "{}",
                bundle.tensor_name(t)
            );
        }
        let mut rng = Rng::new(2);
        let za = Matrix::from_vec(4, 3, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let zb = Matrix::from_vec(4, 3, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let (p1, _) = distance_score(&bundle, &za, &zb).unwrap();
        let (p2, _) = distance_score(&back, &za, &zb).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn flipped_byte_fails_crc() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pmv");
        save_checkpoint(&trained_ish_bundle(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Checksum { .. }), "{err}");
    }

    #[test]
    fn bumped_version_is_version_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pmv");
        save_checkpoint(&trained_ish_bundle(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 2; // version field, little-endian low byte
        let body_len = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&crc.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Version { found: 2, .. }), "{err}");
    }
}

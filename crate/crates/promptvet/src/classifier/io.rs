//! Versioned binary model container.
//!
//! Layout: 4-byte magic `PVGM`, u32 LE format version, u64 LE header length,
//! JSON header (feature config, bias, threshold, fingerprint, weight count),
//! raw little-endian f64 weights, and a trailing SHA-256 over everything
//! before it. Truncation, padding, or bit flips fail the integrity check.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FeatureConfig, GuardModel};
use crate::util::sha256_hex;

const MAGIC: &[u8; 4] = b"PVGM";
const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a guard model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {found} (supported: {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("model file failed integrity check: {0}")]
    Corrupted(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    feature_config: FeatureConfig,
    bias: f64,
    threshold: f64,
    training_fingerprint: String,
    weight_count: u64,
}

/// Serialize `model` to `path`. The write goes through a temp file and an
/// atomic rename.
pub fn save_model(model: &GuardModel, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
    let path = path.as_ref();
    model.validate().map_err(ModelIoError::Invalid)?;
    let header = Header {
        feature_config: model.feature_config.clone(),
        bias: model.bias,
        threshold: model.threshold,
        training_fingerprint: model.training_fingerprint.clone(),
        weight_count: model.weights.len() as u64,
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");

    let mut bytes = Vec::with_capacity(16 + header_json.len() + model.weights.len() * 8 + 32);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for w in &model.weights {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    let digest = sha256_hex(&bytes);
    bytes.extend_from_slice(&hex::decode(&digest).expect("valid hex"));

    let io_err = |e: std::io::Error| ModelIoError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, &bytes).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Read a model back, verifying magic, version, structural lengths, and the
/// trailing checksum.
pub fn load_model(path: impl AsRef<Path>) -> Result<GuardModel, ModelIoError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ModelIoError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    if bytes.len() < 16 {
        return Err(ModelIoError::Corrupted(format!(
            "file too short ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion { found: version });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .ok_or_else(|| ModelIoError::Corrupted("header length overflow".into()))?;
    if bytes.len() < header_end + CHECKSUM_LEN {
        return Err(ModelIoError::Corrupted(
            "checksum mismatch: file truncated before payload end".into(),
        ));
    }
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| ModelIoError::Corrupted(format!("unreadable header: {e}")))?;
    let weight_count = header.weight_count as usize;
    let expected_len = header_end + weight_count * 8 + CHECKSUM_LEN;
    if bytes.len() != expected_len {
        return Err(ModelIoError::Corrupted(format!(
            "checksum mismatch: expected {expected_len} bytes, found {}",
            bytes.len()
        )));
    }
    let payload_end = bytes.len() - CHECKSUM_LEN;
    let digest = sha256_hex(&bytes[..payload_end]);
    if hex::decode(&digest).expect("valid hex") != bytes[payload_end..] {
        return Err(ModelIoError::Corrupted("checksum mismatch".into()));
    }

    let mut weights = Vec::with_capacity(weight_count);
    for chunk in bytes[header_end..payload_end].chunks_exact(8) {
        weights.push(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
    }
    let model = GuardModel {
        feature_config: header.feature_config,
        weights,
        bias: header.bias,
        threshold: header.threshold,
        training_fingerprint: header.training_fingerprint,
    };
    model.validate().map_err(ModelIoError::Invalid)?;
    Ok(model)
}

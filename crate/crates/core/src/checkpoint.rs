//! Binary parameter container.
//!
//! Layout: the 8-byte magic `ARCECKPT`, a little-endian `u64` header length,
//! a JSON header, then every tensor as little-endian `f32` values in the
//! order listed by the header.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crf::DecodeMode;
use crate::data::{TokenizationMode, Vocab};
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 8] = b"ARCECKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Encoder,
    NerModel,
}

/// One seeded stage that contributed to the parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub stage: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub kind: CheckpointKind,
    pub config: EncoderConfig,
    pub seed_lineage: Vec<SeedRecord>,
    pub tokenization: TokenizationMode,
    pub vocab: Vocab,
    pub vocab_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode_mode: Option<DecodeMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crf_boundary: Option<bool>,
    pub tensors: Vec<TensorMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    /// Removes and returns the named tensor.
    pub fn take(&mut self, name: &str) -> Result<Matrix> {
        let i = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))?;
        Ok(self.tensors.remove(i).1)
    }
}

pub fn to_bytes(header: &CheckpointHeader, tensors: &[(&str, &Matrix)]) -> Result<Vec<u8>> {
    if header.tensors.len() != tensors.len()
        || header
            .tensors
            .iter()
            .zip(tensors)
            .any(|(m, (n, t))| m.name != *n || (m.rows, m.cols) != t.shape())
    {
        return Err(Error::Checkpoint(
            "header tensor list does not match the tensors".into(),
        ));
    }
    let json = serde_json::to_vec(header)?;
    let payload: usize = tensors.iter().map(|(_, t)| t.as_slice().len() * 4).sum();
    let mut out = Vec::with_capacity(16 + json.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (name, t) in tensors {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("tensor {name}")));
        }
        for &x in t.as_slice() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save(
    path: impl AsRef<Path>,
    header: &CheckpointHeader,
    tensors: &[(&str, &Matrix)],
) -> Result<()> {
    let bytes = to_bytes(header, tensors)?;
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

fn corrupt(what: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!(
        "corrupt header (expected format version {FORMAT_VERSION}): {what}"
    ))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing magic bytes"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let end = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(16))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("header length exceeds file size"))?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes[16..end]).map_err(corrupt)?;
    let found = raw
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| corrupt("no format_version field"))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::FormatVersion {
            expected: FORMAT_VERSION,
            found: found.min(u32::MAX as u64) as u32,
        });
    }
    let header: CheckpointHeader = serde_json::from_value(raw).map_err(corrupt)?;
    if header.vocab.hash() != header.vocab_hash {
        return Err(Error::Checkpoint(
            "vocabulary does not match its recorded hash".into(),
        ));
    }

    let mut rest = &bytes[end..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for meta in &header.tensors {
        let count = meta.rows * meta.cols;
        let mut buf = vec![0u8; count * 4];
        rest.read_exact(&mut buf)
            .map_err(|_| Error::Checkpoint(format!("truncated data for tensor {}", meta.name)))?;
        let data: Vec<f64> = buf
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        tensors.push((
            meta.name.clone(),
            Matrix::from_vec(meta.rows, meta.cols, data)?,
        ));
    }
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(Checkpoint { header, tensors })
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes =
        fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    from_bytes(&bytes)
}

pub fn tensor_meta(tensors: &[(&str, &Matrix)]) -> Vec<TensorMeta> {
    tensors
        .iter()
        .map(|(n, t)| TensorMeta {
            name: n.to_string(),
            rows: t.rows(),
            cols: t.cols(),
        })
        .collect()
}

/// A pretrained encoder together with the vocabulary it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderCheckpoint {
    pub params: EncoderParams,
    pub vocab: Vocab,
    pub tokenization: TokenizationMode,
    pub seed_lineage: Vec<SeedRecord>,
}

impl EncoderCheckpoint {
    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            format_version: FORMAT_VERSION,
            kind: CheckpointKind::Encoder,
            config: self.params.config.clone(),
            seed_lineage: self.seed_lineage.clone(),
            tokenization: self.tokenization,
            vocab: self.vocab.clone(),
            vocab_hash: self.vocab.hash(),
            scheme: None,
            decode_mode: None,
            crf_boundary: None,
            tensors: tensor_meta(&self.params.tensors()),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save(path, &self.header(), &self.params.tensors())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut ck = load(path)?;
        if ck.header.kind != CheckpointKind::Encoder {
            return Err(Error::Checkpoint(
                "expected an encoder checkpoint, found a NER model".into(),
            ));
        }
        let params = encoder_from(&mut ck)?;
        let h = ck.header;
        Ok(EncoderCheckpoint {
            params,
            vocab: h.vocab,
            tokenization: h.tokenization,
            seed_lineage: h.seed_lineage,
        })
    }
}

/// Pulls the encoder tensors named in the header config out of `ck`.
pub fn encoder_from(ck: &mut Checkpoint) -> Result<EncoderParams> {
    let config = ck.header.config.clone();
    config.validate()?;
    if config.vocab_size != ck.header.vocab.len() {
        return Err(Error::Checkpoint(format!(
            "config vocab_size {} but {} vocabulary entries",
            config.vocab_size,
            ck.header.vocab.len()
        )));
    }
    let mut p = EncoderParams::zeros(&config);
    for (name, slot) in p.tensors_mut() {
        *slot = ck.take(name)?;
    }
    p.check_shapes()?;
    Ok(p)
}

//! Named tensor checkpoints.
//!
//! A [`Checkpoint`] is an ordered map from dot-separated parameter names to
//! dense `f32`/`f64` tensors. On disk it uses the common single-file layout:
//!
//! ```text
//! [u64 LE header length H][H bytes of JSON header][little-endian data]
//! ```
//!
//! Serialization is canonical: tensors are laid out in lexicographic name
//! order and the header is padded with spaces to a multiple of 8 bytes, so a
//! given checkpoint always produces the same bytes.

mod compat;
mod format;
mod selector;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use compat::{validate_compat, CompatReport};
pub use format::{load_checkpoint, save_checkpoint};
pub use selector::{select, Selector, SelectorError};

/// Metadata key holding the toolkit's format version, when present.
pub const FORMAT_VERSION_KEY: &str = "format_version";
/// Version string written by checkpoints this crate creates.
pub const FORMAT_VERSION: &str = "1";
/// Reserved header key for free-form string metadata.
pub const METADATA_KEY: &str = "__metadata__";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header length: {0}")]
    HeaderLength(String),
    #[error("header is not valid JSON (file bytes 8..{end}): {reason}")]
    HeaderJson { end: u64, reason: String },
    #[error("unknown dtype {dtype:?} for tensor {name:?}")]
    UnknownDtype { name: String, dtype: String },
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error(
        "out-of-bounds data: tensor {name:?} declares data bytes {start}..{end} \
         (file offsets {file_start}..{file_end}) but the data section holds {available} bytes"
    )]
    OutOfBounds {
        name: String,
        start: u64,
        end: u64,
        file_start: u64,
        file_end: u64,
        available: u64,
    },
    #[error(
        "overlapping byte ranges: tensor {first:?} ({first_start}..{first_end}) \
         overlaps tensor {second:?} ({second_start}..{second_end})"
    )]
    Overlap {
        first: String,
        first_start: u64,
        first_end: u64,
        second: String,
        second_start: u64,
        second_end: u64,
    },
    #[error("size mismatch: tensor {name:?} ({dtype}, shape {shape:?}) needs {expected} bytes, found {actual}")]
    SizeMismatch {
        name: String,
        dtype: DType,
        shape: Vec<usize>,
        expected: u64,
        actual: u64,
    },
    #[error("invalid header entry {name:?}: {reason}")]
    InvalidEntry { name: String, reason: String },
    #[error("invalid tensor name {0:?}")]
    InvalidName(String),
}

impl StoreError {
    /// Short identifier of the invariant a load or save rejected.
    pub fn invariant(&self) -> &'static str {
        match self {
            StoreError::Io { .. } => "io",
            StoreError::HeaderLength(_) => "header-length",
            StoreError::HeaderJson { .. } => "header-json",
            StoreError::UnknownDtype { .. } => "dtype",
            StoreError::DuplicateName(_) => "unique-names",
            StoreError::OutOfBounds { .. } => "out-of-bounds",
            StoreError::Overlap { .. } => "disjoint-ranges",
            StoreError::SizeMismatch { .. } => "size-matches-shape",
            StoreError::InvalidEntry { .. } => "header-entry",
            StoreError::InvalidName(_) => "tensor-name",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "F32",
            DType::F64 => "F64",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "F32" => Some(DType::F32),
            "F64" => Some(DType::F64),
            _ => None,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Header view of one tensor: where its bytes live in the data section.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TensorMeta {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// `(start, end)` relative to the start of the data section.
    pub byte_range: (u64, u64),
}

/// Dense element buffer. Equality is bitwise, so `NaN == NaN` when the
/// payloads match and `0.0 != -0.0`.
#[derive(Clone, Debug)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn from_le(dtype: DType, bytes: &[u8]) -> Self {
        match dtype {
            DType::F32 => TensorData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                    .collect(),
            ),
        }
    }
}

impl PartialEq for TensorData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::F64(a), TensorData::F64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(shape: Vec<usize>, values: Vec<f32>) -> Self {
        Tensor { shape, data: TensorData::F32(values) }
    }

    pub fn f64(shape: Vec<usize>, values: Vec<f64>) -> Self {
        Tensor { shape, data: TensorData::F64(values) }
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    /// Element count implied by the shape, `None` on overflow.
    pub fn numel(&self) -> Option<usize> {
        self.shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
    }

    pub fn byte_len(&self) -> usize {
        self.data.len() * self.dtype().size()
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.data {
            TensorData::F64(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::F64(_) => None,
        }
    }

    /// Values widened to `f64`.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        self.data.write_le(&mut out);
        out
    }

    /// Hex SHA-256 of the little-endian element bytes.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_le_bytes()))
    }

    fn check(&self, name: &str) -> Result<(), StoreError> {
        let mismatch = || StoreError::SizeMismatch {
            name: name.to_string(),
            dtype: self.dtype(),
            shape: self.shape.clone(),
            expected: self
                .numel()
                .map_or(u64::MAX, |n| (n as u64).saturating_mul(self.dtype().size() as u64)),
            actual: self.byte_len() as u64,
        };
        match self.numel() {
            Some(n) if n == self.data.len() => Ok(()),
            _ => Err(mismatch()),
        }
    }
}

/// Ordered collection of named tensors plus string metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    tensors: BTreeMap<String, Tensor>,
    metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Empty checkpoint tagged with this crate's format version.
    pub fn versioned() -> Self {
        let mut ckpt = Self::new();
        ckpt.metadata
            .insert(FORMAT_VERSION_KEY.to_string(), FORMAT_VERSION.to_string());
        ckpt
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Names in lexicographic order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    pub fn format_version(&self) -> Option<&str> {
        self.metadata.get(FORMAT_VERSION_KEY).map(String::as_str)
    }

    /// Checks every tensor's buffer against its shape and every name against
    /// the reserved header key.
    pub fn validate(&self) -> Result<(), StoreError> {
        for (name, tensor) in &self.tensors {
            if name.is_empty() || name == METADATA_KEY {
                return Err(StoreError::InvalidName(name.clone()));
            }
            tensor.check(name)?;
        }
        Ok(())
    }

    /// Tensor metadata in canonical layout order.
    pub fn metas(&self) -> Vec<TensorMeta> {
        let mut offset = 0u64;
        self.tensors
            .iter()
            .map(|(name, t)| {
                let start = offset;
                offset += t.byte_len() as u64;
                TensorMeta {
                    name: name.clone(),
                    dtype: t.dtype(),
                    shape: t.shape.clone(),
                    byte_range: (start, offset),
                }
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, StoreError> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        format::decode(bytes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        load_checkpoint(path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        save_checkpoint(self, path)
    }
}

impl FromIterator<(String, Tensor)> for Checkpoint {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Checkpoint { tensors: iter.into_iter().collect(), metadata: BTreeMap::new() }
    }
}

//! Versioned container of named tensors plus JSON metadata.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "FRTLCKPT"
//! version  u32
//! hdr_len  u32
//! header   hdr_len bytes of UTF-8 JSON
//! payload  concatenated tensor data
//! ```
//!
//! The header holds `tag`, `metadata` and a `tensors` table of
//! `{name, dtype, shape, offset, len}` entries pointing into the payload.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const MAGIC: &[u8; 8] = b"FRTLCKPT";
pub const VERSION: u32 = 1;
const MAX_HEADER: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl NamedTensor {
    pub fn from_tensor(name: &str, t: &Tensor) -> Result<Self> {
        let flat = t.flatten_all()?;
        let data = match t.dtype() {
            DType::F64 => TensorData::F64(flat.to_vec1::<f64>()?),
            _ => TensorData::F32(flat.to_dtype(DType::F32)?.to_vec1::<f32>()?),
        };
        Ok(Self {
            name: name.to_string(),
            shape: t.dims().to_vec(),
            data,
        })
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Ok(match &self.data {
            TensorData::F32(v) => Tensor::from_slice(v, self.shape.as_slice(), &Device::Cpu)?,
            TensorData::F64(v) => Tensor::from_slice(v, self.shape.as_slice(), &Device::Cpu)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tag: String,
    pub metadata: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    tag: String,
    metadata: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(tag: &str, metadata: serde_json::Value) -> Self {
        Self {
            tag: tag.to_string(),
            metadata,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, t: &Tensor) -> Result<()> {
        self.tensors.push(NamedTensor::from_tensor(name, t)?);
        Ok(())
    }

    /// Every parameter (trainable or buffer) of `store`, under an optional prefix.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) -> Result<()> {
        for p in store.iter() {
            self.push(&format!("{prefix}{}", p.name), p.var.as_tensor())?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Loads every parameter of `store` from `{prefix}{name}`; all must be present.
    pub fn load_into(&self, prefix: &str, store: &ParamStore) -> Result<()> {
        for p in store.iter() {
            let key = format!("{prefix}{}", p.name);
            let t = self
                .get(&key)
                .ok_or_else(|| corrupt(format!("checkpoint lacks `{key}`")))?;
            store.assign(&p.name, &t.to_tensor()?)?;
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            let offset = payload.len();
            let dtype = match &t.data {
                TensorData::F32(v) => {
                    v.iter()
                        .for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
                    "f32"
                }
                TensorData::F64(v) => {
                    v.iter()
                        .for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
                    "f64"
                }
            };
            entries.push(Entry {
                name: t.name.clone(),
                dtype: dtype.into(),
                shape: t.shape.clone(),
                offset,
                len: payload.len() - offset,
            });
        }
        let header = Header {
            tag: self.tag.clone(),
            metadata: self.metadata.clone(),
            tensors: entries,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint (bad magic)"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = u32_at(8);
        if version != VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {version}")));
        }
        let hdr_len = u32_at(12) as usize;
        if hdr_len > MAX_HEADER || 16 + hdr_len > bytes.len() {
            return Err(corrupt("header length exceeds file"));
        }
        let header: Header = serde_json::from_slice(&bytes[16..16 + hdr_len])
            .map_err(|e| corrupt(format!("bad header: {e}")))?;
        let payload = &bytes[16 + hdr_len..];
        let mut tensors = Vec::with_capacity(header.tensors.len().min(4096));
        for e in header.tensors {
            let elems = e
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| corrupt(format!("`{}`: shape overflows", e.name)))?;
            let width = match e.dtype.as_str() {
                "f32" => 4,
                "f64" => 8,
                other => return Err(corrupt(format!("`{}`: unsupported dtype {other}", e.name))),
            };
            let end = e
                .offset
                .checked_add(e.len)
                .filter(|&end| end <= payload.len());
            let Some(end) = end else {
                return Err(corrupt(format!("`{}`: data range outside payload", e.name)));
            };
            if elems.checked_mul(width) != Some(e.len) {
                return Err(corrupt(format!(
                    "`{}`: length does not match shape",
                    e.name
                )));
            }
            let raw = &payload[e.offset..end];
            let data = if width == 4 {
                TensorData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                )
            } else {
                TensorData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                )
            };
            debug_assert_eq!(data.len(), elems);
            tensors.push(NamedTensor {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        Ok(Self {
            tag: header.tag,
            metadata: header.metadata,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn expect_tag(self, tag: &str) -> Result<Self> {
        if self.tag != tag {
            return Err(corrupt(format!(
                "expected a `{tag}` checkpoint, found `{}`",
                self.tag
            )));
        }
        Ok(self)
    }
}

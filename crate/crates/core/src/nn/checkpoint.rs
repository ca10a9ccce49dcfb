//! Binary checkpoint container.
//!
//! Layout: the 6 magic bytes `AMTTS1`, a little-endian `u32` byte length,
//! that many bytes of UTF-8 JSON header, then every tensor as little-endian
//! `f32` values, concatenated in header order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

pub const MAGIC: &[u8; 6] = b"AMTTS1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
    /// Model configuration, owned by whoever wrote the file.
    #[serde(default)]
    pub meta: serde_json::Value,
    /// Optimizer schedule state (step count, learning-rate schedule).
    #[serde(default)]
    pub schedule: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub schedule: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NnError> {
        let header = CheckpointHeader {
            dtype: "f32".into(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape().to_vec() })
                .collect(),
            meta: self.meta.clone(),
            schedule: self.schedule.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let len = u32::try_from(json.len()).map_err(|_| NnError::Checkpoint("header too large".into()))?;
        let payload: usize = self.tensors.iter().map(|(_, t)| t.len() * 4).sum();
        let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let bad = |m: &str| NnError::Checkpoint(m.to_string());
        if bytes.len() < 10 || &bytes[..6] != MAGIC {
            return Err(bad("missing AMTTS1 magic"));
        }
        let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let body = &bytes[10..];
        if body.len() < len {
            return Err(bad("truncated header"));
        }
        let header: CheckpointHeader =
            serde_json::from_slice(&body[..len]).map_err(|e| NnError::Checkpoint(format!("header: {e}")))?;
        if header.dtype != "f32" {
            return Err(NnError::Checkpoint(format!("unsupported dtype {}", header.dtype)));
        }
        let mut cursor = &body[len..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            if cursor.len() < n * 4 {
                return Err(NnError::Checkpoint(format!("truncated data for {}", entry.name)));
            }
            let data = cursor[..n * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            cursor = &cursor[n * 4..];
            tensors.push((entry.name, Tensor::new(entry.shape, data)?));
        }
        if !cursor.is_empty() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Self { meta: header.meta, schedule: header.schedule, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_starts_with_magic_and_header_length() {
        let ck = Checkpoint {
            meta: serde_json::json!({"kind": "test"}),
            schedule: serde_json::Value::Null,
            tensors: vec![("w".into(), Tensor::vector(vec![1.5, -2.0]))],
        };
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..6], b"AMTTS1");
        let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[10..10 + len]).unwrap();
        assert_eq!(header["tensors"][0]["name"], "w");
        assert_eq!(header["dtype"], "f32");
        assert_eq!(&bytes[10 + len..10 + len + 4], &1.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 10 + len + 8);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"NOTACHECKPOINT").is_err());
        let mut bytes = Checkpoint {
            meta: serde_json::Value::Null,
            schedule: serde_json::Value::Null,
            tensors: vec![("w".into(), Tensor::vector(vec![1.0; 4]))],
        }
        .to_bytes()
        .unwrap();
        bytes.pop();
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn f32_values_survive_round_trip(values in proptest::collection::vec(-1e6f32..1e6, 1..64)) {
            let t = Tensor::vector(values.iter().map(|&v| v as f64).collect());
            let ck = Checkpoint {
                meta: serde_json::json!({"n": values.len()}),
                schedule: serde_json::json!({"step": 3}),
                tensors: vec![("a".into(), t.clone()), ("b".into(), Tensor::zeros(&[2, 3]))],
            };
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back, ck);
        }
    }
}

//! Model file: `u64` LE header length, a JSON header, then each tensor as
//! contiguous little-endian `f32` in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Header length sanity bound; real headers are a few KiB.
const MAX_HEADER_BYTES: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    /// Model family, e.g. `"snn"` or `"cnn"`.
    pub kind: String,
    /// Architecture and hyperparameters, opaque to this module.
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub info: TensorInfo,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let info = TensorInfo { name: name.into(), shape };
        if info.len() != data.len() {
            return Err(Error::DimensionMismatch { expected: info.len(), got: data.len() });
        }
        Ok(Self { info, data })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.info.name == name)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|t| t.info.clone()).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for t in &self.tensors {
            let mut buf = Vec::with_capacity(t.data.len() * 4);
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `path` is only used in error messages.
    pub fn read_from<R: Read>(mut r: R, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|e| bad(format!("missing header length: {e}")))?;
        let len = u64::from_le_bytes(len);
        if len > MAX_HEADER_BYTES {
            return Err(bad(format!("header length {len} exceeds limit")));
        }
        let mut json = vec![0u8; len as usize];
        r.read_exact(&mut json).map_err(|e| bad(format!("truncated header: {e}")))?;
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| bad(format!("invalid header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", header.format_version)));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for info in header.tensors {
            let mut bytes = vec![0u8; info.len() * 4];
            r.read_exact(&mut bytes)
                .map_err(|e| bad(format!("truncated tensor {}: {e}", info.name)))?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor { info, data });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after last tensor".into()));
        }
        Ok(Self { kind: header.kind, meta: header.meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?), path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            kind: "snn".into(),
            meta: serde_json::json!({"layers": [4, 3, 2]}),
            tensors: vec![
                Tensor::new("w0", vec![3, 4], (0..12).map(|i| i as f32 * 0.5 - 2.0).collect()).unwrap(),
                Tensor::new("w1", vec![2, 3], vec![f32::MIN_POSITIVE, -0.0, 1e30, 7.0, 8.0, 9.0]).unwrap(),
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, ck);
        let bits = |c: &Checkpoint| -> Vec<u32> {
            c.tensors.iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&back), bits(&ck));
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(
            Checkpoint::read_from(truncated, Path::new("x")),
            Err(Error::Format { .. })
        ));
        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(matches!(Checkpoint::read_from(trailing.as_slice(), Path::new("x")), Err(Error::Format { .. })));
        let mut garbage = buf.clone();
        garbage[10] = b'#';
        assert!(matches!(Checkpoint::read_from(garbage.as_slice(), Path::new("x")), Err(Error::Format { .. })));
        assert!(Tensor::new("t", vec![2, 2], vec![0.0; 3]).is_err());
    }
}

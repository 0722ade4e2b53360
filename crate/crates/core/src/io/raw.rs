//! Single-tensor container used for fixtures.
//!
//! Layout (little endian): 8-byte magic `MOTENSR1`, dtype byte (1 = f32, 2 = f64),
//! rank byte, two zero bytes, `rank` u64 dimensions, then the row-major values.

use std::path::Path;

use super::{read_file, write_file};
use crate::{Error, Result};

pub const RAW_MAGIC: &[u8; 8] = b"MOTENSR1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RawDType {
    F32 = 1,
    F64 = 2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawTensor {
    pub dtype: RawDType,
    pub shape: Vec<usize>,
    /// Values widened to f64 regardless of the stored dtype.
    pub values: Vec<f64>,
}

impl RawTensor {
    pub fn f64(shape: Vec<usize>, values: Vec<f64>) -> Self {
        Self {
            dtype: RawDType::F64,
            shape,
            values,
        }
    }

    pub fn f32(shape: Vec<usize>, values: &[f32]) -> Self {
        Self {
            dtype: RawDType::F32,
            shape,
            values: values.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.shape.len() + 8 * self.values.len());
        out.extend_from_slice(RAW_MAGIC);
        out.push(self.dtype as u8);
        out.push(self.shape.len() as u8);
        out.extend_from_slice(&[0, 0]);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.values {
            match self.dtype {
                RawDType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                RawDType::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: &str| Error::Container {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        if bytes.len() < 12 || &bytes[..8] != RAW_MAGIC {
            return Err(bad("missing MOTENSR1 magic"));
        }
        let dtype = match bytes[8] {
            1 => RawDType::F32,
            2 => RawDType::F64,
            _ => return Err(bad("unknown dtype")),
        };
        let rank = bytes[9] as usize;
        let mut pos = 12;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let chunk = bytes
                .get(pos..pos + 8)
                .ok_or_else(|| bad("truncated header"))?;
            shape.push(u64::from_le_bytes(chunk.try_into().unwrap()) as usize);
            pos += 8;
        }
        let n: usize = shape.iter().product();
        let width = match dtype {
            RawDType::F32 => 4,
            RawDType::F64 => 8,
        };
        let body = &bytes[pos..];
        if body.len() != n * width {
            return Err(bad("body length does not match shape"));
        }
        let values = body
            .chunks_exact(width)
            .map(|c| match dtype {
                RawDType::F32 => f32::from_le_bytes(c.try_into().unwrap()) as f64,
                RawDType::F64 => f64::from_le_bytes(c.try_into().unwrap()),
            })
            .collect();
        Ok(Self {
            dtype,
            shape,
            values,
        })
    }
}

pub fn write_raw_tensor(path: &Path, tensor: &RawTensor) -> Result<()> {
    write_file(path, &tensor.to_bytes())
}

pub fn read_raw_tensor(path: &Path) -> Result<RawTensor> {
    RawTensor::from_bytes(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_stable() {
        let t = RawTensor::f64(vec![2], vec![1.0, -0.5]);
        let b = t.to_bytes();
        assert_eq!(&b[..8], b"MOTENSR1");
        assert_eq!(&b[8..12], &[2, 1, 0, 0]);
        assert_eq!(u64::from_le_bytes(b[12..20].try_into().unwrap()), 2);
        assert_eq!(b.len(), 20 + 16);
        assert_eq!(RawTensor::from_bytes(&b, Path::new("x")).unwrap(), t);
    }

    #[test]
    fn rejects_truncated_body() {
        let mut b = RawTensor::f32(vec![3], &[1.0, 2.0, 3.0]).to_bytes();
        b.pop();
        assert!(RawTensor::from_bytes(&b, Path::new("x")).is_err());
    }
}

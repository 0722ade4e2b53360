//! Named-tensor archive with a JSON header, used for checkpoints.
//!
//! Layout: 8-byte magic `MOTARCH1`, u64 little-endian header length, UTF-8 JSON
//! header, then the f32 little-endian bodies of every tensor in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, write_file};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MOTARCH1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    schema: String,
    metadata: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub schema: String,
    pub metadata: serde_json::Value,
    pub tensors: Vec<ArchiveTensor>,
}

impl Archive {
    pub fn get(&self, name: &str) -> Option<&ArchiveTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

pub fn write_archive(path: &Path, archive: &Archive) -> Result<()> {
    let header = Header {
        schema: archive.schema.clone(),
        metadata: archive.metadata.clone(),
        tensors: archive
            .tensors
            .iter()
            .map(|t| Entry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let body: usize = archive.tensors.iter().map(|t| t.data.len() * 4).sum();
    let mut out = Vec::with_capacity(16 + json.len() + body);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &archive.tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    // Write-then-rename so an interrupted save never clobbers a good file.
    let tmp = path.with_extension("tmp");
    write_file(&tmp, &out)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_archive(path: &Path) -> Result<Archive> {
    let bytes = read_file(path)?;
    let bad = |message: String| Error::Container {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing MOTARCH1 magic".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let hbytes = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(hbytes).map_err(|e| bad(e.to_string()))?;
    let mut pos = 16 + hlen;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in header.tensors {
        let n: usize = e.shape.iter().product();
        let chunk = bytes
            .get(pos..pos + 4 * n)
            .ok_or_else(|| bad(format!("truncated tensor {}", e.name)))?;
        let data = chunk
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        pos += 4 * n;
        tensors.push(ArchiveTensor {
            name: e.name,
            shape: e.shape,
            data,
        });
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after last tensor".into()));
    }
    Ok(Archive {
        schema: header.schema,
        metadata: header.metadata,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let a = Archive {
            schema: "test/1".into(),
            metadata: serde_json::json!({"step": 3}),
            tensors: vec![
                ArchiveTensor {
                    name: "w".into(),
                    shape: vec![2, 2],
                    data: vec![1.0, 2.0, 3.0, 4.5],
                },
                ArchiveTensor {
                    name: "b".into(),
                    shape: vec![1],
                    data: vec![-1.0],
                },
            ],
        };
        write_archive(&path, &a).unwrap();
        assert_eq!(read_archive(&path).unwrap(), a);
        assert!(!path.with_extension("tmp").exists());
    }
}

//! On-disk formats: frame directories, the raw tensor container, and named-tensor archives.

mod archive;
mod frames;
mod raw;

pub use archive::{read_archive, write_archive, Archive, ArchiveTensor};
pub use frames::{read_video, write_video, VideoMeta, FRAME_META_FILE};
pub use raw::{read_raw_tensor, write_raw_tensor, RawDType, RawTensor, RAW_MAGIC};

use std::path::Path;

use crate::{Error, Result};

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes one JSON value per line.
pub fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Schema {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

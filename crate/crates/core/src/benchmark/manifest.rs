use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::io::{read_file, read_json, write_json, write_jsonl};
use crate::pipeline::EditType;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetName {
    #[serde(rename = "LOVEU-TGVE")]
    LoveuTgve,
    Dreamix,
    Custom,
    Synthetic,
}

impl DatasetName {
    pub const ALL: [DatasetName; 4] = [
        DatasetName::LoveuTgve,
        DatasetName::Dreamix,
        DatasetName::Custom,
        DatasetName::Synthetic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetName::LoveuTgve => "LOVEU-TGVE",
            DatasetName::Dreamix => "Dreamix",
            DatasetName::Custom => "Custom",
            DatasetName::Synthetic => "Synthetic",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        DatasetName::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown dataset {s:?}"))
    }
}

/// One `(source video, edit prompt)` task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditTaskRecord {
    pub id: String,
    pub dataset: DatasetName,
    /// Frame directory, relative to the manifest's directory unless absolute.
    pub video: String,
    pub source_prompt: String,
    pub edit_prompt: String,
    pub edit_type: EditType,
}

impl EditTaskRecord {
    pub fn video_path(&self, manifest_dir: &Path) -> PathBuf {
        manifest_dir.join(&self.video)
    }
}

/// Manifest-level facts that are recorded rather than enforced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMeta {
    pub schema: String,
    /// Source videos showing human faces or hands were removed upstream.
    pub faces_filtered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub const MANIFEST_SCHEMA: &str = "motionedit-manifest/1";

const FIELDS: [&str; 6] = [
    "id",
    "dataset",
    "video",
    "source_prompt",
    "edit_prompt",
    "edit_type",
];

/// Sidecar path `foo.meta.json` next to `foo.jsonl`.
pub fn meta_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("meta.json")
}

fn field<T: serde::de::DeserializeOwned>(
    obj: &serde_json::Map<String, Value>,
    name: &str,
) -> std::result::Result<T, String> {
    let v = obj
        .get(name)
        .ok_or_else(|| format!("missing field `{name}`"))?;
    serde_json::from_value(v.clone()).map_err(|e| format!("field `{name}`: {e}"))
}

fn parse_record(line: &str) -> std::result::Result<EditTaskRecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("record is not a JSON object")?;
    if let Some(extra) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(format!("unknown field `{extra}`"));
    }
    let edit_type: String = field(obj, "edit_type")?;
    let dataset: String = field(obj, "dataset")?;
    Ok(EditTaskRecord {
        id: field(obj, "id")?,
        dataset: dataset
            .parse()
            .map_err(|e| format!("field `dataset`: {e}"))?,
        video: field(obj, "video")?,
        source_prompt: field(obj, "source_prompt")?,
        edit_prompt: field(obj, "edit_prompt")?,
        edit_type: edit_type
            .parse()
            .map_err(|e| format!("field `edit_type`: {e}"))?,
    })
}

/// Reads a JSONL manifest. Blank lines are skipped; ids must be unique.
pub fn load_manifest(path: &Path) -> Result<Vec<EditTaskRecord>> {
    let text = String::from_utf8(read_file(path)?).map_err(|e| Error::Schema {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(line).map_err(|message| Error::Schema {
            path: path.display().to_string(),
            line: i + 1,
            message,
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId {
                id: rec.id,
                line: i + 1,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, records: &[EditTaskRecord], meta: &ManifestMeta) -> Result<()> {
    write_jsonl(path, records)?;
    write_json(&meta_path(path), meta)
}

pub fn load_manifest_meta(path: &Path) -> Result<ManifestMeta> {
    read_json(&meta_path(path))
}

/// Checks that every record's video directory exists.
pub fn check_video_paths(records: &[EditTaskRecord], manifest_dir: &Path) -> Result<()> {
    for r in records {
        let p = r.video_path(manifest_dir);
        if !p.is_dir() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "video directory not found"),
            ));
        }
    }
    Ok(())
}

//! Run configuration file: one TOML document holding every tunable default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::CodecConfig;
use crate::denoiser::DenoiserConfig;
use crate::guidance::GuidanceScales;
use crate::pipeline::TrainConfig;
use crate::scene::Canvas;
use crate::schedule::SamplerConfig;
use crate::{Error, Result};

pub const RUN_CONFIG_SCHEMA: &str = "motionedit-run/1";
/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "MOTIONEDIT_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub scenes: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            scenes: 512,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EditConfig {
    pub scales: GuidanceScales,
    pub candidates: usize,
    pub seed: u64,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            scales: GuidanceScales {
                image: 1.5,
                text: 1.5,
                motion: 2.0,
            },
            candidates: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema: String,
    pub canvas: Canvas,
    pub codec: CodecConfig,
    pub model: DenoiserConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub edit: EditConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: RUN_CONFIG_SCHEMA.to_string(),
            canvas: Canvas::default(),
            codec: CodecConfig::default(),
            model: DenoiserConfig::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            sampler: SamplerConfig::default(),
            edit: EditConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Schema {
            path: origin.to_string(),
            line: e.span().map_or(0, |s| {
                text[..s.start.min(text.len())].lines().count().max(1)
            }),
            message: e.message().to_string(),
        })?;
        if cfg.schema != RUN_CONFIG_SCHEMA {
            return Err(Error::Schema {
                path: origin.to_string(),
                line: 1,
                message: format!("schema {:?}, expected {RUN_CONFIG_SCHEMA:?}", cfg.schema),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// The explicit path if given, else the file named by [`CONFIG_ENV`], else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.edit.scales.validate()?;
        let shape = self.model.latent_shape();
        let f = self.codec.factor;
        if self.codec.channels != shape.channels
            || self.canvas.height != shape.height * f
            || self.canvas.width != shape.width * f
            || self.canvas.frames != shape.frames
        {
            return Err(Error::InvalidConfig(format!(
                "canvas {}x{}x{} with codec factor {f} and {} channels does not match model latent {:?}",
                self.canvas.frames, self.canvas.height, self.canvas.width, self.codec.channels, shape
            )));
        }
        Ok(())
    }
}

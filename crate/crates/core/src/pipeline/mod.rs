//! Training of the animation model and the first-frame-edit-then-animate pipeline.

mod edit;
mod editors;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use edit::{animate_edit, EditOutcome, EditRequest, EditSession};
pub use editors::{recolor_oracle_editor, FirstFrameEditor, IdentityEditor, RecolorOracleEditor};
pub use train::{
    load_checkpoint, save_checkpoint, train_step, Checkpoint, LossRecord, TrainConfig, Trainer,
    TrainingCorpus, TrainingExample, CHECKPOINT_SCHEMA,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditType {
    Style,
    Background,
    Object,
    Motion,
    MultiSpatial,
    MultiMotion,
}

impl EditType {
    pub const ALL: [EditType; 6] = [
        EditType::Style,
        EditType::Background,
        EditType::Object,
        EditType::Motion,
        EditType::MultiSpatial,
        EditType::MultiMotion,
    ];

    /// Motion-changing edits run without motion conditioning.
    pub fn is_motion(self) -> bool {
        matches!(self, EditType::Motion | EditType::MultiMotion)
    }

    pub fn name(self) -> &'static str {
        match self {
            EditType::Style => "style",
            EditType::Background => "background",
            EditType::Object => "object",
            EditType::Motion => "motion",
            EditType::MultiSpatial => "multi-spatial",
            EditType::MultiMotion => "multi-motion",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            EditType::Style => "Style",
            EditType::Background => "Background",
            EditType::Object => "Object",
            EditType::Motion => "Motion",
            EditType::MultiSpatial => "Multi-Spatial",
            EditType::MultiMotion => "Multi-Motion",
        }
    }
}

impl fmt::Display for EditType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EditType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        EditType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown edit type {s:?}"))
    }
}

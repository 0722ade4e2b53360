use ndarray::Array3;

use crate::pipeline::EditType;
use crate::scene::{segment_foreground, ScenePrompt};
use crate::Result;

/// Produces the edited first frame that the animation model will bring to life.
pub trait FirstFrameEditor: Send + Sync {
    fn edit_first_frame(
        &self,
        frame: &Array3<f32>,
        source_prompt: &str,
        edit_prompt: &str,
        edit_type: EditType,
    ) -> Result<Array3<f32>>;
}

/// Returns the source frame unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityEditor;

impl FirstFrameEditor for IdentityEditor {
    fn edit_first_frame(
        &self,
        frame: &Array3<f32>,
        _source_prompt: &str,
        _edit_prompt: &str,
        _edit_type: EditType,
    ) -> Result<Array3<f32>> {
        Ok(frame.clone())
    }
}

/// Repaints a flat-background frame from the edit prompt: foreground pixels take the
/// edited shape color, the rest the edited background, both under the edited style.
///
/// Motion-only edits keep the frame as it is.
#[derive(Clone, Copy, Debug, Default)]
pub struct RecolorOracleEditor;

pub fn recolor_oracle_editor() -> RecolorOracleEditor {
    RecolorOracleEditor
}

impl FirstFrameEditor for RecolorOracleEditor {
    fn edit_first_frame(
        &self,
        frame: &Array3<f32>,
        source_prompt: &str,
        edit_prompt: &str,
        edit_type: EditType,
    ) -> Result<Array3<f32>> {
        ScenePrompt::parse(source_prompt)?;
        let target = ScenePrompt::parse(edit_prompt)?;
        if edit_type == EditType::Motion {
            return Ok(frame.clone());
        }
        let fg = target.shape_color.styled(target.style);
        let bg = target.background.styled(target.style);
        let mask = segment_foreground(frame);
        let mut out = frame.clone();
        for ((y, x), &m) in mask.indexed_iter() {
            let px = if m { fg } else { bg };
            for c in 0..3 {
                out[[c, y, x]] = px[c];
            }
        }
        Ok(out)
    }
}

use super::EmbeddingBackend;
use crate::video::VideoTensor;
use crate::{Error, Result};

/// Norm below which a change vector counts as no change.
pub const DEGENERATE_NORM: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Cosine of `(a1 - a0, b1 - b0)`, or 0 when either difference is degenerate.
pub fn direction_cosine(a0: &[f64], a1: &[f64], b0: &[f64], b1: &[f64]) -> Result<f64> {
    for other in [a1, b0, b1] {
        if other.len() != a0.len() {
            return Err(Error::DimensionMismatch(a0.len(), other.len()));
        }
    }
    let da: Vec<f64> = a1.iter().zip(a0).map(|(x, y)| x - y).collect();
    let db: Vec<f64> = b1.iter().zip(b0).map(|(x, y)| x - y).collect();
    let na = dot(&da, &da)?.sqrt();
    let nb = dot(&db, &db)?.sqrt();
    if na < DEGENERATE_NORM || nb < DEGENERATE_NORM {
        return Ok(0.0);
    }
    Ok((dot(&da, &db)? / (na * nb)).clamp(-1.0, 1.0))
}

/// Source/edit faithfulness.
pub fn m_sim(
    source: &VideoTensor,
    edit: &VideoTensor,
    backend: &dyn EmbeddingBackend,
) -> Result<f64> {
    backend.video_similarity(source, edit)
}

/// Agreement between the change in the video and the change in the prompt.
pub fn m_dir(
    source: &VideoTensor,
    edit: &VideoTensor,
    source_prompt: &str,
    edit_prompt: &str,
    backend: &dyn EmbeddingBackend,
) -> Result<f64> {
    direction_cosine(
        &backend.embed_video(source)?,
        &backend.embed_video(edit)?,
        &backend.embed_text(source_prompt)?,
        &backend.embed_text(edit_prompt)?,
    )
}

/// `sqrt(max(0, sim * dir))`.
pub fn m_geo(sim: f64, dir: f64) -> f64 {
    (sim * dir).max(0.0).sqrt()
}

/// All three scores for one edit.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EditScores {
    pub m_sim: f64,
    pub m_dir: f64,
    pub m_geo: f64,
}

pub fn score_edit(
    source: &VideoTensor,
    edit: &VideoTensor,
    source_prompt: &str,
    edit_prompt: &str,
    backend: &dyn EmbeddingBackend,
) -> Result<EditScores> {
    let sim = m_sim(source, edit, backend)?;
    let dir = m_dir(source, edit, source_prompt, edit_prompt, backend)?;
    Ok(EditScores {
        m_sim: sim,
        m_dir: dir,
        m_geo: m_geo(sim, dir),
    })
}

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::benchmark::{classify_colors, extract_attributes};
use crate::scene::{
    background_color, Canvas, Direction, PaletteColor, ScenePrompt, SceneSpec, ShapeKind, Style,
};
use crate::video::VideoTensor;
use crate::{Error, Result};

/// Shared video/text embedding space. Both embedders return unit vectors.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn embed_video(&self, video: &VideoTensor) -> Result<Vec<f64>>;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;

    /// Source/edit similarity. Defaults to the dot product of the video embeddings.
    fn video_similarity(&self, a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
        super::dot(&self.embed_video(a)?, &self.embed_video(b)?)
    }
}

pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Below this speed (pixels per frame) a clip reads as static.
pub const STATIC_SPEED: f32 = 0.5;

/// One-hot blocks for shape color, background, shape, style and direction, read from
/// the attribute oracle for videos and from the scene grammar for prompts.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleEmbedder;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OracleCode {
    pub shape_color: Option<PaletteColor>,
    pub background: Option<PaletteColor>,
    pub shape: Option<ShapeKind>,
    pub style: Option<Style>,
    pub direction: Option<Direction>,
}

fn one_hot<T: PartialEq + Copy>(all: &[T], v: Option<T>, out: &mut Vec<f64>) {
    out.extend(all.iter().map(|&x| if Some(x) == v { 1.0 } else { 0.0 }));
}

impl OracleCode {
    pub const DIM: usize = 8 + 8 + 3 + 3 + 4;

    /// Unnormalized concatenation of the one-hot blocks.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::DIM);
        one_hot(PaletteColor::ALL, self.shape_color, &mut v);
        one_hot(PaletteColor::ALL, self.background, &mut v);
        one_hot(ShapeKind::ALL, self.shape, &mut v);
        one_hot(Style::ALL, self.style, &mut v);
        one_hot(Direction::ALL, self.direction, &mut v);
        v
    }

    pub fn of_prompt(prompt: &str) -> Result<Self> {
        let p = ScenePrompt::parse(prompt)?;
        Ok(Self {
            shape_color: Some(p.shape_color),
            background: Some(p.background),
            shape: Some(p.shape),
            style: Some(p.style),
            direction: p.direction,
        })
    }

    /// Reads a clip through the attribute oracle. A clip with no foreground keeps
    /// only its background block.
    pub fn of_video(video: &VideoTensor) -> Result<Self> {
        match extract_attributes(video) {
            Ok(a) => {
                let speed = a.velocity[0].hypot(a.velocity[1]);
                Ok(Self {
                    shape_color: Some(a.shape_color),
                    background: Some(a.background),
                    shape: Some(a.shape),
                    style: Some(a.style),
                    direction: if speed < STATIC_SPEED {
                        None
                    } else {
                        Direction::from_velocity(a.velocity)
                    },
                })
            }
            Err(Error::NoForeground) => {
                let t = video.num_frames().max(1) as f32;
                let mut bg = [0f32; 3];
                for i in 0..video.num_frames() {
                    let b = background_color(&video.frame(i).to_owned());
                    (0..3).for_each(|c| bg[c] += b[c] / t);
                }
                Ok(Self {
                    background: Some(classify_colors(bg, bg).1),
                    ..Self::default()
                })
            }
            Err(e) => Err(e),
        }
    }
}

impl EmbeddingBackend for OracleEmbedder {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn dim(&self) -> usize {
        OracleCode::DIM
    }

    fn embed_video(&self, video: &VideoTensor) -> Result<Vec<f64>> {
        Ok(normalize(OracleCode::of_video(video)?.to_vec()))
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        Ok(normalize(OracleCode::of_prompt(text)?.to_vec()))
    }
}

/// How the frame embedder turns per-frame similarities into a clip similarity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FramePooling {
    /// Similarity of the averaged frame embeddings.
    #[default]
    AverageEmbeddings,
    /// Average of per-frame similarities; the change directions still use averaged
    /// embeddings.
    AverageScores,
}

/// Image-style toy encoder: each frame becomes a 4x4 grid of mean colors plus a
/// coarse color histogram. Prompts are embedded by rendering a static canonical frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameAverageEmbedder {
    pub pooling: FramePooling,
    pub canvas: Canvas,
}

const GRID: usize = 4;
const LEVELS: usize = 3;

impl FrameAverageEmbedder {
    pub fn new(pooling: FramePooling) -> Self {
        Self {
            pooling,
            canvas: Canvas::default(),
        }
    }

    /// Unit-norm embedding of one `3 x H x W` frame.
    pub fn embed_frame(&self, frame: &Array3<f32>) -> Vec<f64> {
        let (_, h, w) = frame.dim();
        let mut grid = vec![0f64; GRID * GRID * 3];
        let mut counts = [0usize; GRID * GRID];
        let mut hist = vec![0f64; LEVELS * LEVELS * LEVELS];
        let level = |v: f32| ((v.clamp(0.0, 1.0) * (LEVELS - 1) as f32).round()) as usize;
        for y in 0..h {
            for x in 0..w {
                let cell = (y * GRID / h) * GRID + x * GRID / w;
                counts[cell] += 1;
                for c in 0..3 {
                    grid[cell * 3 + c] += frame[[c, y, x]] as f64 - 0.5;
                }
                let px = [frame[[0, y, x]], frame[[1, y, x]], frame[[2, y, x]]];
                hist[level(px[0]) * LEVELS * LEVELS + level(px[1]) * LEVELS + level(px[2])] += 1.0;
            }
        }
        for (i, g) in grid.iter_mut().enumerate() {
            *g /= counts[i / 3].max(1) as f64;
        }
        let total = (h * w).max(1) as f64;
        grid.extend(hist.iter().map(|v| v / total));
        normalize(grid)
    }

    fn frame_embeddings(&self, video: &VideoTensor) -> Vec<Vec<f64>> {
        (0..video.num_frames())
            .map(|i| self.embed_frame(&video.frame(i).to_owned()))
            .collect()
    }

    fn pooled(frames: &[Vec<f64>]) -> Vec<f64> {
        let dim = frames.first().map_or(0, Vec::len);
        let mut acc = vec![0.0; dim];
        for f in frames {
            acc.iter_mut().zip(f).for_each(|(a, b)| *a += b);
        }
        normalize(acc)
    }
}

impl EmbeddingBackend for FrameAverageEmbedder {
    fn name(&self) -> &'static str {
        match self.pooling {
            FramePooling::AverageEmbeddings => "frame-average",
            FramePooling::AverageScores => "frame-scores",
        }
    }

    fn dim(&self) -> usize {
        GRID * GRID * 3 + LEVELS * LEVELS * LEVELS
    }

    fn embed_video(&self, video: &VideoTensor) -> Result<Vec<f64>> {
        Ok(Self::pooled(&self.frame_embeddings(video)))
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let p = ScenePrompt::parse(text)?;
        let scene = SceneSpec {
            shape: p.shape,
            shape_color: p.shape_color,
            background: p.background,
            size: 14,
            start: [
                self.canvas.width as f32 / 2.0,
                self.canvas.height as f32 / 2.0,
            ],
            velocity: [0.0, 0.0],
            style: p.style,
        };
        let fg = p.shape_color.styled(p.style);
        let bg = p.background.styled(p.style);
        let mask = scene.mask(&self.canvas, 0);
        let frame =
            Array3::from_shape_fn((3, self.canvas.height, self.canvas.width), |(c, y, x)| {
                if mask[[y, x]] {
                    fg[c]
                } else {
                    bg[c]
                }
            });
        Ok(self.embed_frame(&frame))
    }

    fn video_similarity(&self, a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
        match self.pooling {
            FramePooling::AverageEmbeddings => {
                super::dot(&self.embed_video(a)?, &self.embed_video(b)?)
            }
            FramePooling::AverageScores => {
                let (fa, fb) = (self.frame_embeddings(a), self.frame_embeddings(b));
                if fa.len() != fb.len() {
                    return Err(Error::LengthMismatch(fa.len(), fb.len()));
                }
                if fa.is_empty() {
                    return Ok(0.0);
                }
                let mut s = 0.0;
                for (x, y) in fa.iter().zip(&fb) {
                    s += super::dot(x, y)?;
                }
                Ok(s / fa.len() as f64)
            }
        }
    }
}

/// Backend by CLI name.
pub fn backend_by_name(name: &str) -> Result<Box<dyn EmbeddingBackend>> {
    match name {
        "oracle" => Ok(Box::new(OracleEmbedder)),
        "frame-average" => Ok(Box::new(FrameAverageEmbedder::new(
            FramePooling::AverageEmbeddings,
        ))),
        "frame-scores" => Ok(Box::new(FrameAverageEmbedder::new(
            FramePooling::AverageScores,
        ))),
        other => Err(Error::InvalidConfig(format!(
            "unknown embedding backend {other:?} (expected oracle, frame-average or frame-scores)"
        ))),
    }
}

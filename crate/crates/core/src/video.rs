//! Pixel-space clips and their latent encodings.

use ndarray::{s, Array3, Array4, ArrayView3, Axis};

use crate::{Error, Result};

/// A clip of `T x 3 x H x W` frames with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTensor {
    frames: Array4<f32>,
    fps: f32,
}

impl VideoTensor {
    pub fn new(frames: Array4<f32>, fps: f32) -> Result<Self> {
        let (t, c, _, _) = frames.dim();
        if t == 0 {
            return Err(Error::InvalidConfig(
                "video needs at least one frame".into(),
            ));
        }
        if c != 3 {
            return Err(Error::shape("video channels", &[3], &[c]));
        }
        if let Some(bad) = frames
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidConfig(format!(
                "video value {bad} outside [0, 1]"
            )));
        }
        Ok(Self { frames, fps })
    }

    /// Clamps into `[0, 1]` (non-finite values become 0) instead of rejecting.
    pub fn from_clamped(mut frames: Array4<f32>, fps: f32) -> Result<Self> {
        frames.mapv_inplace(|v| {
            if v.is_finite() {
                v.clamp(0.0, 1.0)
            } else {
                0.0
            }
        });
        Self::new(frames, fps)
    }

    pub fn frames(&self) -> &Array4<f32> {
        &self.frames
    }

    pub fn into_frames(self) -> Array4<f32> {
        self.frames
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn num_frames(&self) -> usize {
        self.frames.dim().0
    }

    pub fn height(&self) -> usize {
        self.frames.dim().2
    }

    pub fn width(&self) -> usize {
        self.frames.dim().3
    }

    pub fn frame(&self, i: usize) -> ArrayView3<'_, f32> {
        self.frames.index_axis(Axis(0), i)
    }

    /// A copy of this clip with frame `i` replaced.
    pub fn with_frame(&self, i: usize, frame: &Array3<f32>) -> Result<Self> {
        let mut frames = self.frames.clone();
        if frame.dim() != (3, self.height(), self.width()) {
            return Err(Error::shape(
                "replacement frame",
                &[3, self.height(), self.width()],
                frame.shape(),
            ));
        }
        frames.slice_mut(s![i, .., .., ..]).assign(frame);
        Self::new(frames, self.fps)
    }

    /// Mean absolute difference to another clip of the same shape.
    pub fn mean_abs_diff(&self, other: &VideoTensor) -> Result<f64> {
        if self.frames.dim() != other.frames.dim() {
            return Err(Error::shape(
                "video comparison",
                self.frames.shape(),
                other.frames.shape(),
            ));
        }
        let sum: f64 = self
            .frames
            .iter()
            .zip(other.frames.iter())
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        Ok(sum / self.frames.len() as f64)
    }
}

/// Per-frame latents, `T x C x H' x W'`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVideo {
    latents: Array4<f32>,
}

impl LatentVideo {
    pub fn new(latents: Array4<f32>) -> Result<Self> {
        if latents.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "latent contains non-finite values".into(),
            ));
        }
        Ok(Self { latents })
    }

    pub fn zeros(shape: LatentShape) -> Self {
        Self {
            latents: Array4::zeros(shape.dims()),
        }
    }

    pub fn latents(&self) -> &Array4<f32> {
        &self.latents
    }

    pub fn into_latents(self) -> Array4<f32> {
        self.latents
    }

    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            latents: &self.latents * factor,
        }
    }

    pub fn shape(&self) -> LatentShape {
        let (frames, channels, height, width) = self.latents.dim();
        LatentShape {
            frames,
            channels,
            height,
            width,
        }
    }

    pub fn frame(&self, i: usize) -> Array3<f32> {
        self.latents.index_axis(Axis(0), i).to_owned()
    }

    pub fn max_abs_diff(&self, other: &LatentVideo) -> f64 {
        self.latents
            .iter()
            .zip(other.latents.iter())
            .map(|(a, b)| (a - b).abs() as f64)
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LatentShape {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl LatentShape {
    pub fn dims(self) -> (usize, usize, usize, usize) {
        (self.frames, self.channels, self.height, self.width)
    }

    pub fn dims_vec(self) -> Vec<usize> {
        vec![self.frames, self.channels, self.height, self.width]
    }

    pub fn numel(self) -> usize {
        self.frames * self.channels * self.height * self.width
    }
}

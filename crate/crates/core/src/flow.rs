//! Optical flow fields, their color-wheel rendering and the estimator seam.

use ndarray::{s, Array4};

use crate::scene::{mask_centroid, segment_foreground, Canvas, SceneSpec};
use crate::video::VideoTensor;
use crate::{Error, Result};

/// Per-frame flow `T x 2 x H x W` in pixels per frame, channel 0 = u (x), 1 = v (y).
///
/// Entry `i` holds the motion from frame `i` to `i + 1`; the last entry repeats the
/// one before it so the field has one slice per video frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    vectors: Array4<f32>,
}

impl FlowField {
    pub fn new(vectors: Array4<f32>) -> Result<Self> {
        if vectors.dim().1 != 2 {
            return Err(Error::shape("flow channels", &[2], &[vectors.dim().1]));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "flow contains non-finite values".into(),
            ));
        }
        Ok(Self { vectors })
    }

    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        Self {
            vectors: Array4::zeros((frames, 2, height, width)),
        }
    }

    pub fn vectors(&self) -> &Array4<f32> {
        &self.vectors
    }

    pub fn num_frames(&self) -> usize {
        self.vectors.dim().0
    }

    pub fn scaled(&self, k: f32) -> Self {
        Self {
            vectors: &self.vectors * k,
        }
    }

    fn magnitudes(&self) -> impl Iterator<Item = f32> + '_ {
        let (t, _, h, w) = self.vectors.dim();
        (0..t).flat_map(move |i| {
            (0..h).flat_map(move |y| {
                (0..w).map(move |x| self.vectors[[i, 0, y, x]].hypot(self.vectors[[i, 1, y, x]]))
            })
        })
    }
}

/// Anything that turns a clip into a flow field of matching size.
pub trait FlowEstimator: Send + Sync {
    fn estimate(&self, video: &VideoTensor) -> Result<FlowField>;
}

/// Mean of `sqrt(u^2 + v^2)` over every frame and pixel.
pub fn avg_flow_magnitude(flow: &FlowField) -> f64 {
    let n = flow.vectors.len() / 2;
    if n == 0 {
        return 0.0;
    }
    flow.magnitudes().map(f64::from).sum::<f64>() / n as f64
}

/// Color-wheel rendering: hue from the flow angle, saturation from the magnitude
/// relative to the clip maximum, value 1. A clip with no motion is all white.
pub fn flow_to_rgb(flow: &FlowField, fps: f32) -> Result<VideoTensor> {
    let (t, _, h, w) = flow.vectors.dim();
    let max = flow.magnitudes().fold(0f32, f32::max);
    let mut out = Array4::<f32>::ones((t, 3, h, w));
    if max > 0.0 {
        for i in 0..t {
            for y in 0..h {
                for x in 0..w {
                    let (u, v) = (flow.vectors[[i, 0, y, x]], flow.vectors[[i, 1, y, x]]);
                    let sat = u.hypot(v) / max;
                    let hue = v.atan2(u).to_degrees().rem_euclid(360.0);
                    let rgb = hsv_to_rgb(hue, sat, 1.0);
                    for c in 0..3 {
                        out[[i, c, y, x]] = rgb[c];
                    }
                }
            }
        }
    }
    VideoTensor::from_clamped(out, fps)
}

/// `h` in degrees, `s` and `v` in `[0, 1]`.
pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Analytic flow of a scene: its velocity on the shape's support, zero elsewhere.
pub fn synthetic_flow(scene: &SceneSpec, canvas: &Canvas) -> FlowField {
    let t = canvas.frames;
    let mut vectors = Array4::<f32>::zeros((t, 2, canvas.height, canvas.width));
    for i in 0..t.saturating_sub(1) {
        let mask = scene.mask(canvas, i);
        for ((y, x), &inside) in mask.indexed_iter() {
            if inside {
                vectors[[i, 0, y, x]] = scene.velocity[0];
                vectors[[i, 1, y, x]] = scene.velocity[1];
            }
        }
    }
    duplicate_last(&mut vectors);
    FlowField { vectors }
}

fn duplicate_last(vectors: &mut Array4<f32>) {
    let t = vectors.dim().0;
    if t >= 2 {
        let prev = vectors.slice(s![t - 2, .., .., ..]).to_owned();
        vectors.slice_mut(s![t - 1, .., .., ..]).assign(&prev);
    }
}

/// Rigid-motion estimator for flat-background clips: segments the foreground of each
/// frame and assigns the centroid displacement to the foreground of the earlier frame.
#[derive(Clone, Copy, Debug, Default)]
pub struct CentroidFlowEstimator;

impl FlowEstimator for CentroidFlowEstimator {
    fn estimate(&self, video: &VideoTensor) -> Result<FlowField> {
        let (t, h, w) = (video.num_frames(), video.height(), video.width());
        let masks: Vec<_> = (0..t)
            .map(|i| segment_foreground(&video.frame(i).to_owned()))
            .collect();
        let mut vectors = Array4::<f32>::zeros((t, 2, h, w));
        for i in 0..t.saturating_sub(1) {
            let (Some(a), Some(b)) = (mask_centroid(&masks[i]), mask_centroid(&masks[i + 1]))
            else {
                continue;
            };
            let d = [b[0] - a[0], b[1] - a[1]];
            for ((y, x), &m) in masks[i].indexed_iter() {
                if m {
                    vectors[[i, 0, y, x]] = d[0];
                    vectors[[i, 1, y, x]] = d[1];
                }
            }
        }
        duplicate_last(&mut vectors);
        FlowField::new(vectors)
    }
}

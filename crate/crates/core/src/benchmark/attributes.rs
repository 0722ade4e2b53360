use ndarray::Array3;
use serde::Serialize;

use crate::scene::{
    background_color, mask_centroid, segment_foreground, PaletteColor, ShapeKind, Style,
};
use crate::video::VideoTensor;
use crate::{Error, Result};

/// What the attribute oracle reads back from a flat-background clip.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VideoAttributes {
    pub shape: ShapeKind,
    pub shape_color: PaletteColor,
    pub background: PaletteColor,
    pub style: Style,
    /// Mean centroid displacement per frame.
    pub velocity: [f32; 2],
    /// Foreground centroid per frame; `None` where nothing was segmented.
    pub trajectory: Vec<Option<[f32; 2]>>,
}

fn dist(a: [f32; 3], b: [f32; 3]) -> f32 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f32>().sqrt()
}

fn nearest(rgb: [f32; 3], style: Style) -> (PaletteColor, f32) {
    PaletteColor::ALL
        .iter()
        .map(|&c| (c, dist(rgb, c.styled(style))))
        .fold((PaletteColor::ALL[0], f32::INFINITY), |best, cur| {
            if cur.1 < best.1 {
                cur
            } else {
                best
            }
        })
}

/// Joint nearest styled-palette match for the two region colors; earlier styles
/// win ties, so achromatic pairs read as plain.
pub fn classify_colors(fg: [f32; 3], bg: [f32; 3]) -> (PaletteColor, PaletteColor, Style) {
    let mut best = (
        PaletteColor::Black,
        PaletteColor::Black,
        Style::Plain,
        f32::INFINITY,
    );
    for &style in Style::ALL {
        let (a, da) = nearest(fg, style);
        let (b, db) = nearest(bg, style);
        if da + db < best.3 - 1e-6 {
            best = (a, b, style, da + db);
        }
    }
    (best.0, best.1, best.2)
}

fn classify_shape(fill_ratio: f32) -> ShapeKind {
    if fill_ratio >= 0.9 {
        ShapeKind::Square
    } else if fill_ratio >= 0.65 {
        ShapeKind::Circle
    } else {
        ShapeKind::Triangle
    }
}

fn fill_ratio(mask: &ndarray::Array2<bool>) -> Option<f32> {
    let (mut x0, mut x1, mut y0, mut y1, mut n) = (usize::MAX, 0, usize::MAX, 0, 0usize);
    for ((y, x), &m) in mask.indexed_iter() {
        if m {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
            n += 1;
        }
    }
    (n > 0).then(|| n as f32 / ((x1 - x0 + 1) * (y1 - y0 + 1)) as f32)
}

pub fn extract_attributes(video: &VideoTensor) -> Result<VideoAttributes> {
    let t = video.num_frames();
    let mut fg_sum = [0f64; 3];
    let mut fg_n = 0usize;
    let mut bg_sum = [0f64; 3];
    let mut ratios = Vec::new();
    let mut trajectory = Vec::with_capacity(t);
    for i in 0..t {
        let frame: Array3<f32> = video.frame(i).to_owned();
        let bg = background_color(&frame);
        for c in 0..3 {
            bg_sum[c] += bg[c] as f64;
        }
        let mask = segment_foreground(&frame);
        for ((y, x), &m) in mask.indexed_iter() {
            if m {
                for c in 0..3 {
                    fg_sum[c] += frame[[c, y, x]] as f64;
                }
                fg_n += 1;
            }
        }
        ratios.extend(fill_ratio(&mask));
        trajectory.push(mask_centroid(&mask));
    }
    if fg_n == 0 {
        return Err(Error::NoForeground);
    }
    let fg = fg_sum.map(|s| (s / fg_n as f64) as f32);
    let bg = bg_sum.map(|s| (s / t as f64) as f32);
    let (shape_color, background, style) = classify_colors(fg, bg);
    ratios.sort_by(f32::total_cmp);
    let shape = classify_shape(ratios[ratios.len() / 2]);

    let steps: Vec<[f32; 2]> = trajectory
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some([b[0] - a[0], b[1] - a[1]]),
            _ => None,
        })
        .collect();
    let velocity = if steps.is_empty() {
        [0.0, 0.0]
    } else {
        let n = steps.len() as f32;
        [
            steps.iter().map(|s| s[0]).sum::<f32>() / n,
            steps.iter().map(|s| s[1]).sum::<f32>() / n,
        ]
    };
    Ok(VideoAttributes {
        shape,
        shape_color,
        background,
        style,
        velocity,
        trajectory,
    })
}

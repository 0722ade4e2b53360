//! Moving-shape scenes: parameters, rendering, prompt grammar and foreground segmentation.
//!
//! Pixel `(x, y)` has its center at `(x + 0.5, y + 0.5)`. A shape's position is the
//! centroid of its support, so a 16 px square centered at `(10, 10)` covers pixel
//! columns and rows `2..18`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, Array4};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::video::VideoTensor;
use crate::{Error, Result};

macro_rules! word_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn word(self) -> &'static str {
                match self { $($name::$variant => $word),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.word())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s { $($word => Ok($name::$variant),)+ _ => Err(s.to_string()) }
            }
        }
    };
}

word_enum!(ShapeKind {
    Square => "square",
    Circle => "circle",
    Triangle => "triangle",
});

word_enum!(
    /// The eight saturated palette colors.
    PaletteColor {
        Red => "red",
        Green => "green",
        Blue => "blue",
        Yellow => "yellow",
        Cyan => "cyan",
        Magenta => "magenta",
        White => "white",
        Black => "black",
    }
);

word_enum!(Style {
    Plain => "plain",
    Grayscale => "grayscale",
    Sepia => "sepia",
});

word_enum!(Direction {
    Right => "right",
    Left => "left",
    Up => "up",
    Down => "down",
});

impl PaletteColor {
    pub fn rgb(self) -> [f32; 3] {
        match self {
            PaletteColor::Red => [1.0, 0.0, 0.0],
            PaletteColor::Green => [0.0, 1.0, 0.0],
            PaletteColor::Blue => [0.0, 0.0, 1.0],
            PaletteColor::Yellow => [1.0, 1.0, 0.0],
            PaletteColor::Cyan => [0.0, 1.0, 1.0],
            PaletteColor::Magenta => [1.0, 0.0, 1.0],
            PaletteColor::White => [1.0, 1.0, 1.0],
            PaletteColor::Black => [0.0, 0.0, 0.0],
        }
    }

    /// Palette color as it appears after `style` is applied.
    pub fn styled(self, style: Style) -> [f32; 3] {
        style.apply(self.rgb())
    }
}

impl Style {
    pub fn apply(self, [r, g, b]: [f32; 3]) -> [f32; 3] {
        match self {
            Style::Plain => [r, g, b],
            Style::Grayscale => {
                let y = 0.299 * r + 0.587 * g + 0.114 * b;
                [y, y, y]
            }
            Style::Sepia => [
                (0.393 * r + 0.769 * g + 0.189 * b).min(1.0),
                (0.349 * r + 0.686 * g + 0.168 * b).min(1.0),
                (0.272 * r + 0.534 * g + 0.131 * b).min(1.0),
            ],
        }
    }

    /// Applies the style to every pixel of a `3 x H x W` frame.
    pub fn apply_frame(self, frame: &mut Array3<f32>) {
        if self == Style::Plain {
            return;
        }
        let (_, h, w) = frame.dim();
        for y in 0..h {
            for x in 0..w {
                let px = self.apply([frame[[0, y, x]], frame[[1, y, x]], frame[[2, y, x]]]);
                for c in 0..3 {
                    frame[[c, y, x]] = px[c];
                }
            }
        }
    }
}

impl Direction {
    /// Unit vector in image coordinates (y grows downward).
    pub fn unit(self) -> [f32; 2] {
        match self {
            Direction::Right => [1.0, 0.0],
            Direction::Left => [-1.0, 0.0],
            Direction::Up => [0.0, -1.0],
            Direction::Down => [0.0, 1.0],
        }
    }

    /// The direction closest to a velocity, or `None` for a (near) static one.
    pub fn from_velocity(v: [f32; 2]) -> Option<Self> {
        if v[0].hypot(v[1]) < 1e-3 {
            return None;
        }
        Some(if v[0].abs() >= v[1].abs() {
            if v[0] > 0.0 {
                Direction::Right
            } else {
                Direction::Left
            }
        } else if v[1] > 0.0 {
            Direction::Down
        } else {
            Direction::Up
        })
    }
}

/// Frame geometry shared by every clip of a corpus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Canvas {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub fps: f32,
}

impl Default for Canvas {
    fn default() -> Self {
        Self {
            frames: 8,
            height: 64,
            width: 64,
            fps: 8.0,
        }
    }
}

pub const SPEED: f32 = 2.0;
pub const SIZES: [u32; 3] = [12, 14, 16];
/// Minimum L2 distance between the styled shape and background colors.
pub const MIN_CONTRAST: f32 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub shape: ShapeKind,
    pub shape_color: PaletteColor,
    pub background: PaletteColor,
    pub size: u32,
    /// Centroid at frame 0, in pixels.
    pub start: [f32; 2],
    /// Pixels per frame.
    pub velocity: [f32; 2],
    pub style: Style,
}

impl SceneSpec {
    pub fn center(&self, frame: usize) -> [f32; 2] {
        let k = frame as f32;
        [
            self.start[0] + k * self.velocity[0],
            self.start[1] + k * self.velocity[1],
        ]
    }

    pub fn direction(&self) -> Option<Direction> {
        Direction::from_velocity(self.velocity)
    }

    pub fn with_direction(&self, dir: Direction) -> Self {
        let speed = self.velocity[0].hypot(self.velocity[1]).max(SPEED);
        let u = dir.unit();
        Self {
            velocity: [u[0] * speed, u[1] * speed],
            ..self.clone()
        }
    }

    /// Half extents `(left, right, top, bottom)` of the shape around its centroid.
    fn extents(&self) -> [f32; 4] {
        let s = self.size as f32;
        match self.shape {
            ShapeKind::Square | ShapeKind::Circle => [s / 2.0; 4],
            ShapeKind::Triangle => [s / 2.0, s / 2.0, 2.0 * s / 3.0, s / 3.0],
        }
    }

    pub fn contrast(&self) -> f32 {
        let a = self.shape_color.styled(self.style);
        let b = self.background.styled(self.style);
        (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f32>().sqrt()
    }

    pub fn validate(&self, canvas: &Canvas) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidConfig("shape size must be positive".into()));
        }
        if self.contrast() < MIN_CONTRAST {
            return Err(Error::InvalidConfig(format!(
                "{} on {} under {} has contrast {:.3} < {MIN_CONTRAST}",
                self.shape_color,
                self.background,
                self.style,
                self.contrast()
            )));
        }
        let [l, r, t, b] = self.extents();
        for i in 0..canvas.frames {
            let [cx, cy] = self.center(i);
            if cx - l < 0.0
                || cy - t < 0.0
                || cx + r > canvas.width as f32
                || cy + b > canvas.height as f32
            {
                return Err(Error::SceneOutOfBounds(format!(
                    "{} of size {} at ({cx}, {cy}) in frame {i}",
                    self.shape, self.size
                )));
            }
        }
        Ok(())
    }

    /// Whether the pixel with center `(px, py)` lies inside the shape centered at `(cx, cy)`.
    fn covers(&self, px: f32, py: f32, cx: f32, cy: f32) -> bool {
        let h = self.size as f32 / 2.0;
        let (dx, dy) = (px - cx, py - cy);
        match self.shape {
            ShapeKind::Square => dx >= -h && dx < h && dy >= -h && dy < h,
            ShapeKind::Circle => dx * dx + dy * dy <= h * h,
            ShapeKind::Triangle => {
                // apex up; base at dy = s/3, apex at dy = -2s/3
                let s = self.size as f32;
                let top = -2.0 * s / 3.0;
                let bottom = s / 3.0;
                if dy < top || dy >= bottom {
                    return false;
                }
                let half_width = h * (dy - top) / s;
                dx.abs() <= half_width
            }
        }
    }

    pub fn mask(&self, canvas: &Canvas, frame: usize) -> Array2<bool> {
        let [cx, cy] = self.center(frame);
        Array2::from_shape_fn((canvas.height, canvas.width), |(y, x)| {
            self.covers(x as f32 + 0.5, y as f32 + 0.5, cx, cy)
        })
    }

    pub fn render(&self, canvas: &Canvas) -> Result<VideoTensor> {
        self.validate(canvas)?;
        let fg = self.shape_color.styled(self.style);
        let bg = self.background.styled(self.style);
        let mut data = Array4::<f32>::zeros((canvas.frames, 3, canvas.height, canvas.width));
        for i in 0..canvas.frames {
            let mask = self.mask(canvas, i);
            for ((y, x), &inside) in mask.indexed_iter() {
                let px = if inside { fg } else { bg };
                for c in 0..3 {
                    data[[i, c, y, x]] = px[c];
                }
            }
        }
        VideoTensor::new(data, canvas.fps)
    }

    pub fn prompt(&self) -> ScenePrompt {
        ScenePrompt {
            shape_color: self.shape_color,
            shape: self.shape,
            direction: self.direction(),
            background: self.background,
            style: self.style,
        }
    }

    /// A random in-frame scene with a constant-speed cardinal velocity.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, canvas: &Canvas, style: Option<Style>) -> Self {
        let travel = SPEED * (canvas.frames.saturating_sub(1)) as f32;
        loop {
            let size = *SIZES.choose(rng).expect("non-empty");
            let shape = *ShapeKind::ALL.choose(rng).expect("non-empty");
            let style = style.unwrap_or_else(|| *Style::ALL.choose(rng).expect("non-empty"));
            let shape_color = *PaletteColor::ALL.choose(rng).expect("non-empty");
            let background = *PaletteColor::ALL.choose(rng).expect("non-empty");
            let dir = *Direction::ALL.choose(rng).expect("non-empty");
            let margin = size as f32 / 2.0 + travel;
            let lo_x = margin.ceil() as i64;
            let hi_x = (canvas.width as f32 - margin).floor() as i64;
            let lo_y = margin.ceil() as i64;
            let hi_y = (canvas.height as f32 - margin).floor() as i64;
            if lo_x > hi_x || lo_y > hi_y {
                continue;
            }
            let u = dir.unit();
            let spec = SceneSpec {
                shape,
                shape_color,
                background,
                size,
                start: [
                    rng.random_range(lo_x..=hi_x) as f32,
                    rng.random_range(lo_y..=hi_y) as f32,
                ],
                velocity: [u[0] * SPEED, u[1] * SPEED],
                style,
            };
            if spec.validate(canvas).is_ok() {
                return spec;
            }
        }
    }
}

/// Parsed form of the scene prompt grammar
/// `a <color> <shape> [moving <direction>] on a <color> background[, <style>]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenePrompt {
    pub shape_color: PaletteColor,
    pub shape: ShapeKind,
    pub direction: Option<Direction>,
    pub background: PaletteColor,
    pub style: Style,
}

impl fmt::Display for ScenePrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a {} {}", self.shape_color, self.shape)?;
        if let Some(d) = self.direction {
            write!(f, " moving {d}")?;
        }
        write!(f, " on a {} background", self.background)?;
        if self.style != Style::Plain {
            write!(f, ", {}", self.style)?;
        }
        Ok(())
    }
}

/// Splits a prompt into lowercase tokens on whitespace and commas.
pub fn prompt_tokens(prompt: &str) -> Vec<String> {
    prompt
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl ScenePrompt {
    pub fn parse(prompt: &str) -> Result<Self> {
        let toks = prompt_tokens(prompt);
        let mut cur = Cursor {
            toks: &toks,
            pos: 0,
            prompt,
        };
        cur.literal("a")?;
        let shape_color = cur.word("color")?;
        let shape = cur.word("shape")?;
        let direction = if cur.peek() == Some("moving") {
            cur.pos += 1;
            Some(cur.word("direction")?)
        } else {
            None
        };
        cur.literal("on")?;
        cur.literal("a")?;
        let background = cur.word("color")?;
        cur.literal("background")?;
        let style = match cur.peek() {
            None => Style::Plain,
            Some(_) => cur.word("style")?,
        };
        if let Some(extra) = cur.peek() {
            return Err(cur.fail(format!("unexpected trailing word {extra:?}")));
        }
        Ok(Self {
            shape_color,
            shape,
            direction,
            background,
            style,
        })
    }
}

struct Cursor<'a> {
    toks: &'a [String],
    pos: usize,
    prompt: &'a str,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn fail(&self, reason: String) -> Error {
        Error::Grammar {
            prompt: self.prompt.to_string(),
            reason,
        }
    }

    fn next(&mut self, what: &str) -> Result<&str> {
        let w = self
            .toks
            .get(self.pos)
            .ok_or_else(|| self.fail(format!("expected {what}, found end of prompt")))?;
        self.pos += 1;
        Ok(w)
    }

    fn literal(&mut self, word: &str) -> Result<()> {
        let w = self.next(&format!("{word:?}"))?;
        if w == word {
            Ok(())
        } else {
            let msg = format!("expected {word:?}, found {w:?}");
            Err(self.fail(msg))
        }
    }

    fn word<T: FromStr>(&mut self, what: &str) -> Result<T> {
        let w = self.next(what)?.to_string();
        w.parse()
            .map_err(|_| self.fail(format!("{w:?} is not a {what}")))
    }
}

/// Colors closer than this (L2 in RGB) to the background count as background.
pub const FOREGROUND_THRESHOLD: f32 = 0.15;

/// Background color estimate: the mean of the most populated cell of an 8-level RGB histogram.
pub fn background_color(frame: &Array3<f32>) -> [f32; 3] {
    let (_, h, w) = frame.dim();
    let bin = |v: f32| ((v.clamp(0.0, 1.0) * 7.0).round()) as usize;
    let mut counts = vec![0usize; 512];
    let mut sums = vec![[0f64; 3]; 512];
    for y in 0..h {
        for x in 0..w {
            let px = [frame[[0, y, x]], frame[[1, y, x]], frame[[2, y, x]]];
            let k = bin(px[0]) * 64 + bin(px[1]) * 8 + bin(px[2]);
            counts[k] += 1;
            for c in 0..3 {
                sums[k][c] += px[c] as f64;
            }
        }
    }
    let (k, &n) = counts
        .iter()
        .enumerate()
        .max_by_key(|&(i, &n)| (n, std::cmp::Reverse(i)))
        .expect("512 bins");
    let n = n.max(1) as f64;
    [
        (sums[k][0] / n) as f32,
        (sums[k][1] / n) as f32,
        (sums[k][2] / n) as f32,
    ]
}

/// Foreground mask of one `3 x H x W` frame by distance from the modal background color.
pub fn segment_foreground(frame: &Array3<f32>) -> Array2<bool> {
    let bg = background_color(frame);
    let (_, h, w) = frame.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let d: f32 = (0..3).map(|c| (frame[[c, y, x]] - bg[c]).powi(2)).sum();
        d.sqrt() > FOREGROUND_THRESHOLD
    })
}

/// Centroid of a mask in pixel-center coordinates, or `None` when empty.
pub fn mask_centroid(mask: &Array2<bool>) -> Option<[f32; 2]> {
    let (mut sx, mut sy, mut n) = (0f64, 0f64, 0usize);
    for ((y, x), &m) in mask.indexed_iter() {
        if m {
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            n += 1;
        }
    }
    (n > 0).then(|| [(sx / n as f64) as f32, (sy / n as f64) as f32])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square() -> SceneSpec {
        SceneSpec {
            shape: ShapeKind::Square,
            shape_color: PaletteColor::Red,
            background: PaletteColor::Blue,
            size: 16,
            start: [10.0, 10.0],
            velocity: [2.0, 0.0],
            style: Style::Plain,
        }
    }

    #[test]
    fn square_centroid_moves_linearly() {
        let canvas = Canvas::default();
        let s = square();
        let m = s.mask(&canvas, 7);
        assert_eq!(m.iter().filter(|&&v| v).count(), 256);
        assert_eq!(mask_centroid(&m), Some([24.0, 10.0]));
        assert_eq!(s.center(7), [24.0, 10.0]);
    }

    #[test]
    fn out_of_frame_is_rejected() {
        let mut s = square();
        s.velocity = [-2.0, 0.0];
        assert!(matches!(
            s.render(&Canvas::default()),
            Err(Error::SceneOutOfBounds(_))
        ));
    }

    #[test]
    fn prompt_roundtrip() {
        let p = "a red square moving right on a blue background, sepia";
        let parsed = ScenePrompt::parse(p).unwrap();
        assert_eq!(parsed.style, Style::Sepia);
        assert_eq!(parsed.to_string(), p);
        let q = ScenePrompt::parse("a red square on a blue background").unwrap();
        assert_eq!(q.direction, None);
    }

    #[test]
    fn prompt_grammar_errors_name_the_word() {
        let e = ScenePrompt::parse("a red blob moving right on a blue background").unwrap_err();
        assert!(e.to_string().contains("blob"));
        assert!(ScenePrompt::parse("a red square moving right on a blue").is_err());
    }

    #[test]
    fn styled_palettes_stay_distinct() {
        for style in Style::ALL {
            for (i, a) in PaletteColor::ALL.iter().enumerate() {
                for b in &PaletteColor::ALL[i + 1..] {
                    let (x, y) = (a.styled(*style), b.styled(*style));
                    let d: f32 = (0..3).map(|c| (x[c] - y[c]).powi(2)).sum::<f32>().sqrt();
                    assert!(d > 0.1, "{a} vs {b} under {style}: {d}");
                }
            }
        }
    }

    #[test]
    fn random_scenes_are_valid_and_segmentable() {
        let canvas = Canvas::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let s = SceneSpec::random(&mut rng, &canvas, None);
            let v = s.render(&canvas).unwrap();
            for i in 0..canvas.frames {
                let frame = v.frame(i).to_owned();
                assert_eq!(segment_foreground(&frame), s.mask(&canvas, i), "{s:?}");
            }
        }
    }
}

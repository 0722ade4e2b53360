use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use super::{read_json, write_json};
use crate::video::VideoTensor;
use crate::{Error, Result};

pub const FRAME_META_FILE: &str = "metadata.json";

/// Sidecar describing a frame directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoMeta {
    pub fps: f32,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

fn frame_name(i: usize) -> String {
    format!("frame_{i:04}.png")
}

/// Writes `frame_0000.png`, ... as 8-bit RGB plus the `metadata.json` sidecar.
pub fn write_video(dir: &Path, video: &VideoTensor) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (t, _, h, w) = video.frames().dim();
    for i in 0..t {
        let mut buf = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let v = video.frames()[[i, c, y, x]];
                    buf.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        let path = dir.join(frame_name(i));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(&buf)
            .map_err(|e| Error::Png(e.to_string()))?;
    }
    let meta = VideoMeta {
        fps: video.fps(),
        frames: t,
        height: h,
        width: w,
    };
    write_json(&dir.join(FRAME_META_FILE), &meta)
}

pub fn read_video(dir: &Path) -> Result<VideoTensor> {
    let meta: VideoMeta = read_json(&dir.join(FRAME_META_FILE))?;
    let mut data = Array4::<f32>::zeros((meta.frames, 3, meta.height, meta.width));
    for i in 0..meta.frames {
        let path = dir.join(frame_name(i));
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut reader = png::Decoder::new(BufReader::new(file))
            .read_info()
            .map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Png("image too large".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
        if info.width as usize != meta.width
            || info.height as usize != meta.height
            || info.color_type != png::ColorType::Rgb
            || info.bit_depth != png::BitDepth::Eight
        {
            return Err(Error::Png(format!(
                "{}: expected {}x{} 8-bit RGB",
                path.display(),
                meta.width,
                meta.height
            )));
        }
        for y in 0..meta.height {
            for x in 0..meta.width {
                for c in 0..3 {
                    data[[i, c, y, x]] = buf[(y * meta.width + x) * 3 + c] as f32 / 255.0;
                }
            }
        }
    }
    VideoTensor::new(data, meta.fps)
}

//! Frame-wise encoder/decoder between pixel clips and latent clips.
//!
//! The default `IdentityPatch` codec is a pure space-to-channel rearrangement:
//! every `f x f` pixel patch becomes `3 f^2` latent channels, shifted from
//! `[0, 1]` to `[-1, 1]`. It is exactly invertible. `LearnedTiny` is a small
//! per-patch autoencoder trained on synthetic frames.

use ndarray::{Array4, Axis};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Adam, AdamConfig, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::video::{LatentVideo, VideoTensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodecKind {
    IdentityPatch,
    LearnedTiny,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    pub kind: CodecKind,
    pub factor: usize,
    pub channels: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self::identity(4)
    }
}

impl CodecConfig {
    pub fn identity(factor: usize) -> Self {
        Self {
            kind: CodecKind::IdentityPatch,
            factor,
            channels: 3 * factor * factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.factor == 0 {
            return Err(Error::InvalidConfig("codec factor must be positive".into()));
        }
        if self.channels == 0 {
            return Err(Error::InvalidConfig(
                "codec needs at least one channel".into(),
            ));
        }
        if self.kind == CodecKind::IdentityPatch && self.channels != 3 * self.factor * self.factor {
            return Err(Error::InvalidConfig(format!(
                "identity-patch codec with factor {} needs {} channels, got {}",
                self.factor,
                3 * self.factor * self.factor,
                self.channels
            )));
        }
        Ok(())
    }

    fn patch_width(&self) -> usize {
        3 * self.factor * self.factor
    }
}

/// A codec ready to run: configuration plus weights when it has any.
#[derive(Clone, Debug)]
pub struct Codec {
    config: CodecConfig,
    learned: Option<TinyAutoencoder>,
}

impl Default for Codec {
    fn default() -> Self {
        Self::identity(4)
    }
}

impl Codec {
    pub fn identity(factor: usize) -> Self {
        Self {
            config: CodecConfig::identity(factor),
            learned: None,
        }
    }

    pub fn from_config(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        match config.kind {
            CodecKind::IdentityPatch => Ok(Self {
                config,
                learned: None,
            }),
            CodecKind::LearnedTiny => Err(Error::InvalidConfig(
                "learned-tiny codec needs trained weights; use Codec::learned".into(),
            )),
        }
    }

    pub fn learned(model: TinyAutoencoder) -> Self {
        Self {
            config: model.config,
            learned: Some(model),
        }
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn encode(&self, video: &VideoTensor) -> Result<LatentVideo> {
        encode_video(video, self)
    }

    pub fn decode(&self, latent: &LatentVideo) -> Result<VideoTensor> {
        decode_video(latent, self)
    }
}

/// Rows of `[-1, 1]` patch vectors, one per latent cell, frame-major.
fn patchify(video: &VideoTensor, f: usize) -> Result<(Vec<f32>, usize, usize)> {
    let (t, _, h, w) = video.frames().dim();
    if h % f != 0 {
        return Err(Error::NotDivisible {
            dim: "height",
            size: h,
            factor: f,
        });
    }
    if w % f != 0 {
        return Err(Error::NotDivisible {
            dim: "width",
            size: w,
            factor: f,
        });
    }
    let (hl, wl) = (h / f, w / f);
    let pw = 3 * f * f;
    let x = video.frames();
    let mut rows = vec![0f32; t * hl * wl * pw];
    for ti in 0..t {
        for i in 0..hl {
            for j in 0..wl {
                let base = ((ti * hl + i) * wl + j) * pw;
                for c in 0..3 {
                    for dy in 0..f {
                        for dx in 0..f {
                            rows[base + c * f * f + dy * f + dx] =
                                2.0 * x[[ti, c, i * f + dy, j * f + dx]] - 1.0;
                        }
                    }
                }
            }
        }
    }
    Ok((rows, hl, wl))
}

fn unpatchify(
    rows: &[f32],
    t: usize,
    hl: usize,
    wl: usize,
    f: usize,
    fps: f32,
) -> Result<VideoTensor> {
    let pw = 3 * f * f;
    let mut x = Array4::<f32>::zeros((t, 3, hl * f, wl * f));
    for ti in 0..t {
        for i in 0..hl {
            for j in 0..wl {
                let base = ((ti * hl + i) * wl + j) * pw;
                for c in 0..3 {
                    for dy in 0..f {
                        for dx in 0..f {
                            x[[ti, c, i * f + dy, j * f + dx]] =
                                (rows[base + c * f * f + dy * f + dx] + 1.0) * 0.5;
                        }
                    }
                }
            }
        }
    }
    VideoTensor::from_clamped(x, fps)
}

/// `[t, hl, wl, c]` rows into a `T x C x H' x W'` latent.
fn rows_to_latent(rows: Vec<f32>, t: usize, hl: usize, wl: usize, c: usize) -> Result<LatentVideo> {
    let a = Array4::from_shape_vec((t, hl, wl, c), rows)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    LatentVideo::new(
        a.permuted_axes([0, 3, 1, 2])
            .as_standard_layout()
            .to_owned(),
    )
}

fn latent_to_rows(latent: &LatentVideo) -> Vec<f32> {
    latent
        .latents()
        .view()
        .permuted_axes([0, 2, 3, 1])
        .iter()
        .copied()
        .collect()
}

pub fn encode_video(video: &VideoTensor, codec: &Codec) -> Result<LatentVideo> {
    let f = codec.config.factor;
    let (rows, hl, wl) = patchify(video, f)?;
    let t = video.num_frames();
    match &codec.learned {
        None => rows_to_latent(rows, t, hl, wl, codec.config.channels),
        Some(model) => {
            let lat = model.encode_rows(&rows)?;
            rows_to_latent(lat, t, hl, wl, codec.config.channels)
        }
    }
}

pub fn decode_video(latent: &LatentVideo, codec: &Codec) -> Result<VideoTensor> {
    let shape = latent.shape();
    if shape.channels != codec.config.channels {
        return Err(Error::ChannelMismatch {
            expected: codec.config.channels,
            actual: shape.channels,
        });
    }
    let rows = latent_to_rows(latent);
    let f = codec.config.factor;
    let rows = match &codec.learned {
        None => rows,
        Some(model) => model.decode_rows(&rows)?,
    };
    unpatchify(&rows, shape.frames, shape.height, shape.width, f, 4.0)
}

/// Per-patch MLP autoencoder: `3f^2 -> hidden -> C -> hidden -> 3f^2`.
#[derive(Clone, Debug)]
pub struct TinyAutoencoder {
    config: CodecConfig,
    hidden: usize,
    params: ParamStore<f32>,
    ids: [ParamId; 8],
}

impl TinyAutoencoder {
    pub fn new(config: CodecConfig, hidden: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pw = config.patch_width();
        let c = config.channels;
        let mut p = ParamStore::new();
        let ids = [
            p.add_normal("enc1.w", &[pw, hidden], (1.0 / pw as f64).sqrt(), &mut rng),
            p.add_const("enc1.b", &[hidden], 0.0),
            p.add_normal(
                "enc2.w",
                &[hidden, c],
                (1.0 / hidden as f64).sqrt(),
                &mut rng,
            ),
            p.add_const("enc2.b", &[c], 0.0),
            p.add_normal("dec1.w", &[c, hidden], (1.0 / c as f64).sqrt(), &mut rng),
            p.add_const("dec1.b", &[hidden], 0.0),
            p.add_normal(
                "dec2.w",
                &[hidden, pw],
                (1.0 / hidden as f64).sqrt(),
                &mut rng,
            ),
            p.add_const("dec2.b", &[pw], 0.0),
        ];
        Ok(Self {
            config: CodecConfig {
                kind: CodecKind::LearnedTiny,
                ..config
            },
            hidden,
            params: p,
            ids,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    fn mlp(&self, g: &mut Graph<f32>, x: NodeId, first: usize) -> NodeId {
        let w1 = g.param(&self.params, self.ids[first]);
        let b1 = g.param(&self.params, self.ids[first + 1]);
        let w2 = g.param(&self.params, self.ids[first + 2]);
        let b2 = g.param(&self.params, self.ids[first + 3]);
        let h = g.linear(x, w1, Some(b1));
        let h = g.silu(h);
        g.linear(h, w2, Some(b2))
    }

    fn run(&self, rows: &[f32], width: usize, first: usize) -> Vec<f32> {
        let n = rows.len() / width;
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![n, width], rows.to_vec()));
        let y = self.mlp(&mut g, x, first);
        g.value(y).data().to_vec()
    }

    fn encode_rows(&self, rows: &[f32]) -> Result<Vec<f32>> {
        Ok(self.run(rows, self.config.patch_width(), 0))
    }

    fn decode_rows(&self, rows: &[f32]) -> Result<Vec<f32>> {
        Ok(self.run(rows, self.config.channels, 4))
    }

    /// Trains on random patches drawn from `clips`; returns the model and per-step losses.
    pub fn fit(
        config: CodecConfig,
        clips: &[VideoTensor],
        steps: usize,
        learning_rate: f64,
        seed: u64,
    ) -> Result<(Self, Vec<f64>)> {
        let mut model = Self::new(config, 64, seed)?;
        let pw = config.patch_width();
        let mut all = Vec::new();
        for clip in clips {
            let (rows, _, _) = patchify(clip, config.factor)?;
            all.extend(rows.chunks_exact(pw).map(<[f32]>::to_vec));
        }
        if all.is_empty() {
            return Err(Error::InvalidConfig("no training patches".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut opt = Adam::new(
            AdamConfig {
                learning_rate,
                clip_grad_norm: None,
                ..AdamConfig::default()
            },
            &model.params,
        );
        let batch = 256;
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let mut data = Vec::with_capacity(batch * pw);
            for _ in 0..batch {
                data.extend_from_slice(all.choose(&mut rng).expect("non-empty"));
            }
            let target = Tensor::new(vec![batch, pw], data.clone());
            let mut g = Graph::new();
            let x = g.input(Tensor::new(vec![batch, pw], data));
            let z = model.mlp(&mut g, x, 0);
            let y = model.mlp(&mut g, z, 4);
            let loss = g.mse(y, target);
            let lv = g.value(loss).data()[0] as f64;
            if !lv.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: losses.len() as u64,
                    loss: lv,
                });
            }
            let grads = g.backward(loss, model.params.len());
            opt.step(&mut model.params, &grads);
            losses.push(lv);
        }
        Ok((model, losses))
    }
}

/// Convenience: the first frame of a clip as its own one-frame clip.
pub fn first_frame_clip(video: &VideoTensor) -> Result<VideoTensor> {
    let f = video
        .frames()
        .index_axis(Axis(0), 0)
        .to_owned()
        .insert_axis(Axis(0));
    VideoTensor::new(f, video.fps())
}

#[cfg(test)]
mod tests {
    use ndarray::Array4;
    use rand::Rng;

    use super::*;

    fn random_video(t: usize, h: usize, w: usize, seed: u64) -> VideoTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array4::from_shape_fn((t, 3, h, w), |_| rng.random::<f32>());
        VideoTensor::new(data, 4.0).unwrap()
    }

    #[test]
    fn identity_patch_shape() {
        let v = random_video(8, 64, 64, 1);
        let z = encode_video(&v, &Codec::identity(4)).unwrap();
        assert_eq!(z.latents().dim(), (8, 48, 16, 16));
        let back = decode_video(&z, &Codec::identity(4)).unwrap();
        assert_eq!(back.frames().dim(), (8, 3, 64, 64));
    }

    #[test]
    fn zero_video_maps_to_minus_one() {
        let v = VideoTensor::new(Array4::zeros((2, 3, 8, 8)), 4.0).unwrap();
        let z = encode_video(&v, &Codec::identity(4)).unwrap();
        assert!(z.latents().iter().all(|&x| x == -1.0));
        assert_eq!(decode_video(&z, &Codec::identity(4)).unwrap(), v);
    }

    #[test]
    fn identity_roundtrip_is_exact() {
        for seed in 0..5 {
            let v = random_video(3, 16, 12, seed);
            let codec = Codec::identity(4);
            let back = decode_video(&encode_video(&v, &codec).unwrap(), &codec).unwrap();
            let err = v
                .frames()
                .iter()
                .zip(back.frames().iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0f32, f32::max);
            assert!(err < 1e-6, "roundtrip error {err}");
        }
    }

    #[test]
    fn rejects_indivisible_dimensions() {
        let v = random_video(1, 10, 8, 0);
        match encode_video(&v, &Codec::identity(4)) {
            Err(Error::NotDivisible { dim: "height", .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decode_rejects_wrong_channel_count() {
        let z = LatentVideo::new(Array4::zeros((1, 12, 2, 2))).unwrap();
        assert!(matches!(
            decode_video(&z, &Codec::identity(4)),
            Err(Error::ChannelMismatch {
                expected: 48,
                actual: 12
            })
        ));
    }

    #[test]
    fn encoding_is_framewise() {
        let v = random_video(4, 16, 16, 3);
        let codec = Codec::identity(4);
        let z = encode_video(&v, &codec).unwrap();
        let mut frames = v.frames().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        frames
            .index_axis_mut(Axis(0), 2)
            .mapv_inplace(|_| rng.random::<f32>());
        let z2 = encode_video(&VideoTensor::new(frames, 4.0).unwrap(), &codec).unwrap();
        for t in [0, 1, 3] {
            assert_eq!(z.frame(t), z2.frame(t));
        }
        assert_ne!(z.frame(2), z2.frame(2));
    }

    #[test]
    fn identity_config_invariant() {
        let bad = CodecConfig {
            kind: CodecKind::IdentityPatch,
            factor: 4,
            channels: 16,
        };
        assert!(bad.validate().is_err());
        assert!(Codec::from_config(CodecConfig::identity(2)).is_ok());
    }
}

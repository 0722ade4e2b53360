//! The spatiotemporal v-prediction network and its conditioning inputs.
//!
//! Frames are processed channels-last as `[N, h, w, c]` with `N = clips * frames`
//! and the frames of a clip stored consecutively. Spatial layers treat each frame
//! independently; temporal convolution and temporal attention are the only layers
//! that mix frames.

mod layers;

use ndarray::{Array2, Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use self::layers::{
    depth_to_space, space_to_depth, CrossAttn, Ctx, Init, Linear, Norm, ResBlock, SpatialAttn,
    TemporalAttn, TemporalConv, TextCtx,
};
use crate::nn::{Graph, NodeId, ParamId, ParamStore, Real, Tensor};
use crate::text::{Vocabulary, MAX_TOKENS};
use crate::video::{LatentShape, LatentVideo};
use crate::{Error, Result};

/// Magnitudes are multiplied by this before sinusoidal featurization, so the
/// typical range of a few tenths of a pixel per frame spans many periods.
pub const MAGNITUDE_SCALE: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    pub latent_channels: usize,
    pub frames: usize,
    /// Latent height and width.
    pub latent_size: usize,
    pub base_width: usize,
    /// Temporal conv + temporal attention pairs at the low resolution; 0 removes
    /// every temporal layer.
    pub temporal_depth: usize,
    pub vocab_size: usize,
    pub embed_width: usize,
    pub text_width: usize,
    pub heads: usize,
    pub groups: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            latent_channels: 48,
            frames: 8,
            latent_size: 16,
            base_width: 32,
            temporal_depth: 1,
            vocab_size: Vocabulary::toy().len(),
            embed_width: 64,
            text_width: 64,
            heads: 4,
            groups: 8,
        }
    }
}

impl DenoiserConfig {
    /// Noisy latent, repeated image latent and motion latent, concatenated.
    pub fn input_channels(&self) -> usize {
        3 * self.latent_channels
    }

    pub fn latent_shape(&self) -> LatentShape {
        LatentShape {
            frames: self.frames,
            channels: self.latent_channels,
            height: self.latent_size,
            width: self.latent_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let w1 = self.base_width;
        if !self.latent_size.is_multiple_of(2) || self.latent_size == 0 {
            return bad(format!("latent_size {} must be even", self.latent_size));
        }
        if self.frames == 0 || self.latent_channels == 0 {
            return bad("frames and latent_channels must be positive".into());
        }
        for (what, c) in [("base_width", w1), ("2 * base_width", 2 * w1)] {
            if c == 0 || c % self.groups != 0 || c % self.heads != 0 {
                return bad(format!(
                    "{what} = {c} must be divisible by groups {} and heads {}",
                    self.groups, self.heads
                ));
            }
        }
        if !self.embed_width.is_multiple_of(2) {
            return bad("embed_width must be even".into());
        }
        Ok(())
    }
}

/// Which conditionings are forced to null; `true` means dropped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DropMask {
    pub image: bool,
    pub text: bool,
    pub motion: bool,
}

impl DropMask {
    pub const NONE: DropMask = DropMask {
        image: false,
        text: false,
        motion: false,
    };
    pub const ALL: DropMask = DropMask {
        image: true,
        text: true,
        motion: true,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionConditioning {
    /// Encoded color-wheel flow video, `T x C x H' x W'`.
    pub latent: LatentVideo,
    /// Average flow magnitude in pixels per frame.
    pub magnitude: f32,
}

/// Text, first-frame and motion conditionings, each independently nullable.
///
/// A slot is null when it is `None` or when the drop mask flags it; a dropped
/// tensor is never read.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConditioningBundle {
    /// Token ids from the model vocabulary; an empty list is null text.
    pub text: Option<Vec<u32>>,
    /// First-frame latent, `C x H' x W'`.
    pub image: Option<Array3<f32>>,
    pub motion: Option<MotionConditioning>,
    pub drop: DropMask,
}

impl ConditioningBundle {
    pub fn null() -> Self {
        Self::default()
    }

    pub fn text(&self) -> Option<&[u32]> {
        match &self.text {
            Some(ids) if !self.drop.text && !ids.is_empty() => Some(ids),
            _ => None,
        }
    }

    pub fn image(&self) -> Option<&Array3<f32>> {
        self.image.as_ref().filter(|_| !self.drop.image)
    }

    pub fn motion(&self) -> Option<&MotionConditioning> {
        self.motion.as_ref().filter(|_| !self.drop.motion)
    }

    pub fn with_drop(&self, drop: DropMask) -> Self {
        Self {
            drop,
            ..self.clone()
        }
    }
}

/// One denoiser evaluation.
#[derive(Clone, Copy, Debug)]
pub struct DenoiseInput<'a> {
    pub z: &'a LatentVideo,
    pub t: usize,
    pub cond: &'a ConditioningBundle,
}

/// A batched v-prediction function.
pub trait VelocityModel: Sync {
    fn latent_shape(&self) -> LatentShape;

    /// One v-prediction per input, each shaped like its `z`.
    fn predict(&self, inputs: &[DenoiseInput<'_>]) -> Result<Vec<Array4<f32>>>;
}

struct Layout {
    mag_proj: Linear,
    mag_null: ParamId,
    mlp1: Linear,
    mlp2: Linear,
    frame_pos: ParamId,
    tokens: ParamId,
    token_pos: ParamId,
    text_null: ParamId,
    input: Linear,
    res_a: ResBlock,
    tconv_a: Option<TemporalConv>,
    cross_a: CrossAttn,
    down: Linear,
    res_mid: ResBlock,
    attn_mid: SpatialAttn,
    cross_mid: CrossAttn,
    temporal_mid: Vec<(TemporalConv, TemporalAttn)>,
    up: Linear,
    res_up: ResBlock,
    tconv_up: Option<TemporalConv>,
    cross_up: CrossAttn,
    out_norm: Norm,
    out: Linear,
}

impl Layout {
    fn build(cfg: &DenoiserConfig, store: &mut ParamStore<f32>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            store,
            rng: &mut rng,
        };
        let (w1, w2) = (cfg.base_width, 2 * cfg.base_width);
        let (e, d) = (cfg.embed_width, cfg.text_width);
        let temporal = cfg.temporal_depth > 0;
        Self {
            mag_proj: init.linear("embed.magnitude", e, e, 1.0),
            mag_null: init.table("embed.magnitude_null", 1, e, 1.0),
            mlp1: init.linear("embed.mlp1", e, e, 1.0),
            mlp2: init.linear("embed.mlp2", e, e, 1.0),
            frame_pos: init.table("embed.frame_pos", cfg.frames, e, 0.0),
            tokens: init.table("text.tokens", cfg.vocab_size, d, 1.0),
            token_pos: init.table("text.pos", MAX_TOKENS, d, 0.1),
            text_null: init.table("text.null", 2, d, 1.0),
            input: init.linear("input", cfg.input_channels(), w1, 1.0),
            res_a: ResBlock::new(&mut init, "hi.res", w1, w1, e),
            tconv_a: temporal.then(|| TemporalConv::new(&mut init, "hi.tconv", w1)),
            cross_a: CrossAttn::new(&mut init, "hi.cross", w1, d),
            down: init.linear("down", 4 * w1, w2, 1.0),
            res_mid: ResBlock::new(&mut init, "lo.res", w2, w2, e),
            attn_mid: SpatialAttn::new(&mut init, "lo.attn", w2),
            cross_mid: CrossAttn::new(&mut init, "lo.cross", w2, d),
            temporal_mid: (0..cfg.temporal_depth)
                .map(|i| {
                    (
                        TemporalConv::new(&mut init, &format!("lo.t{i}.conv"), w2),
                        TemporalAttn::new(&mut init, &format!("lo.t{i}.attn"), w2, cfg.frames),
                    )
                })
                .collect(),
            up: init.linear("up", w2, 4 * w1, 1.0),
            res_up: ResBlock::new(&mut init, "up.res", 2 * w1, w1, e),
            tconv_up: temporal.then(|| TemporalConv::new(&mut init, "up.tconv", w1)),
            cross_up: CrossAttn::new(&mut init, "up.cross", w1, d),
            out_norm: init.norm("out.norm", w1),
            out: init.linear("out", w1, cfg.latent_channels, 0.05),
        }
    }
}

/// Constant inputs of one forward pass, independent of the parameter precision.
pub(crate) struct Prepared {
    b: usize,
    /// `[N, h, w, 3C]` channels-last concat of noisy, image and motion latents.
    x: Vec<f32>,
    t_feat: Vec<f32>,
    mag_feat: Vec<f32>,
    motion_keep: Vec<bool>,
    text: Vec<Option<Vec<u32>>>,
}

/// `[cos(x f_k)..., sin(x f_k)...]` with `f_k = 10000^(-k / (dim / 2))`.
pub fn sinusoidal(x: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|k| (-(10000f64.ln()) * k as f64 / half as f64).exp())
        .collect();
    let mut out: Vec<f64> = freqs.iter().map(|f| (x * f).cos()).collect();
    out.extend(freqs.iter().map(|f| (x * f).sin()));
    out
}

/// Sinusoidal features of a flow magnitude, before the learned projection.
pub fn magnitude_features(m: f64, dim: usize) -> Result<Vec<f64>> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::NegativeMagnitude(m));
    }
    Ok(sinusoidal(m * MAGNITUDE_SCALE, dim))
}

/// Appends a `T x C x H x W` array to `out` in `[T, H, W, C]` order.
pub(crate) fn push_channels_last(a: &Array4<f32>, out: &mut Vec<f32>) {
    let (t, c, h, w) = a.dim();
    out.reserve(t * c * h * w);
    for i in 0..t {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out.push(a[[i, ch, y, x]]);
                }
            }
        }
    }
}

#[derive(Clone)]
pub struct Denoiser {
    config: DenoiserConfig,
    vocab: Vocabulary,
    params: ParamStore<f32>,
    layout: std::sync::Arc<Layout>,
}

impl std::fmt::Debug for Denoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Denoiser")
            .field("config", &self.config)
            .field("params", &self.params.num_scalars())
            .finish()
    }
}

impl Denoiser {
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let vocab = Vocabulary::toy();
        if vocab.len() != config.vocab_size {
            return Err(Error::InvalidConfig(format!(
                "vocab_size {} does not match the toy vocabulary ({})",
                config.vocab_size,
                vocab.len()
            )));
        }
        let mut params = ParamStore::new();
        let layout = Layout::build(&config, &mut params, seed);
        Ok(Self {
            config,
            vocab,
            params,
            layout: std::sync::Arc::new(layout),
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub fn tokenize(&self, prompt: &str) -> Result<Vec<u32>> {
        self.vocab.tokenize(prompt)
    }

    /// Token embeddings plus positions, `[L, D]`; the empty prompt gives the
    /// learned null sequence.
    pub fn embed_text(&self, prompt: &str) -> Result<Array2<f32>> {
        let ids = self.tokenize(prompt)?;
        let d = self.config.text_width;
        if ids.is_empty() {
            let null = self.params.get(self.layout.text_null);
            return Ok(Array2::from_shape_vec((2, d), null.data().to_vec()).expect("null shape"));
        }
        let tok = self.params.get(self.layout.tokens).data();
        let pos = self.params.get(self.layout.token_pos).data();
        Ok(Array2::from_shape_fn((ids.len(), d), |(i, j)| {
            tok[ids[i] as usize * d + j] + pos[i * d + j]
        }))
    }

    /// Learned projection of the sinusoidal magnitude features.
    pub fn embed_magnitude(&self, m: f64) -> Result<Vec<f32>> {
        let feat = magnitude_features(m, self.config.embed_width)?;
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::new(
            vec![1, feat.len()],
            feat.iter().map(|&v| v as f32).collect(),
        ));
        let y = self.layout.mag_proj.apply(&mut g, &self.params, x);
        Ok(g.value(y).data().to_vec())
    }

    pub(crate) fn prepare(&self, inputs: &[DenoiseInput<'_>]) -> Result<Prepared> {
        let shape = self.config.latent_shape();
        let (t, c, h, w) = shape.dims();
        let e = self.config.embed_width;
        let mut x = Vec::with_capacity(inputs.len() * shape.numel() * 3);
        let mut t_feat = Vec::with_capacity(inputs.len() * e);
        let mut mag_feat = Vec::with_capacity(inputs.len() * e);
        let mut motion_keep = Vec::with_capacity(inputs.len());
        let mut text = Vec::with_capacity(inputs.len());
        let zero_frame = Array3::<f32>::zeros((c, h, w));
        for inp in inputs {
            if inp.z.shape() != shape {
                return Err(Error::shape(
                    "denoiser input",
                    &[t, c, h, w],
                    inp.z.latents().shape(),
                ));
            }
            let image = inp.cond.image().unwrap_or(&zero_frame);
            if image.dim() != (c, h, w) {
                return Err(Error::shape(
                    "image conditioning",
                    &[c, h, w],
                    image.shape(),
                ));
            }
            let motion = inp.cond.motion();
            if let Some(m) = motion {
                if m.latent.shape() != shape {
                    return Err(Error::shape(
                        "motion conditioning",
                        &[t, c, h, w],
                        m.latent.latents().shape(),
                    ));
                }
            }
            let z = inp.z.latents();
            for i in 0..t {
                for y in 0..h {
                    for xx in 0..w {
                        for ch in 0..c {
                            x.push(z[[i, ch, y, xx]]);
                        }
                        for ch in 0..c {
                            x.push(image[[ch, y, xx]]);
                        }
                        match motion {
                            Some(m) => {
                                let ml = m.latent.latents();
                                for ch in 0..c {
                                    x.push(ml[[i, ch, y, xx]]);
                                }
                            }
                            None => x.extend(std::iter::repeat_n(0.0, c)),
                        }
                    }
                }
            }
            t_feat.extend(sinusoidal(inp.t as f64, e).into_iter().map(|v| v as f32));
            match motion {
                Some(m) => {
                    let f = magnitude_features(m.magnitude as f64, e)?;
                    mag_feat.extend(f.into_iter().map(|v| v as f32));
                    motion_keep.push(true);
                }
                None => {
                    mag_feat.extend(std::iter::repeat_n(0.0, e));
                    motion_keep.push(false);
                }
            }
            if let Some(ids) = inp.cond.text() {
                if ids.len() > MAX_TOKENS {
                    return Err(Error::InvalidConfig(format!(
                        "{} text tokens exceeds {MAX_TOKENS}",
                        ids.len()
                    )));
                }
                if let Some(&bad) = ids
                    .iter()
                    .find(|&&id| id as usize >= self.config.vocab_size)
                {
                    return Err(Error::UnknownToken {
                        token: format!("#{bad}"),
                        prompt: String::new(),
                    });
                }
            }
            text.push(inp.cond.text().map(<[u32]>::to_vec));
        }
        Ok(Prepared {
            b: inputs.len(),
            x,
            t_feat,
            mag_feat,
            motion_keep,
            text,
        })
    }

    /// Builds the forward pass on `g`; returns the `[N, h, w, C]` output node.
    pub(crate) fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        prep: &Prepared,
    ) -> NodeId {
        let cfg = &self.config;
        let l = &*self.layout;
        let ctx = Ctx {
            b: prep.b,
            t: cfg.frames,
            groups: cfg.groups,
            heads: cfg.heads,
        };
        let (s, e) = (cfg.latent_size, cfg.embed_width);

        let t_feat = g.input(Tensor::from_f32(vec![prep.b, e], &prep.t_feat));
        let m_feat = g.input(Tensor::from_f32(vec![prep.b, e], &prep.mag_feat));
        let m = l.mag_proj.apply(g, p, m_feat);
        let null = g.param(p, l.mag_null);
        let m = g.select_rows(m, null, &prep.motion_keep);
        let emb = g.add(t_feat, m);
        let emb = l.mlp1.apply(g, p, emb);
        let emb = g.silu(emb);
        let emb = l.mlp2.apply(g, p, emb);
        let emb = g.repeat_rows(emb, cfg.frames);
        let fp = g.param(p, l.frame_pos);
        let frame_ids: Vec<usize> = (0..ctx.n()).map(|i| i % cfg.frames).collect();
        let fp = g.gather(fp, &frame_ids);
        let emb = g.add(emb, fp);
        let emb = g.silu(emb);

        let tok = g.param(p, l.tokens);
        let tpos = g.param(p, l.token_pos);
        let tnull = g.param(p, l.text_null);
        let seqs: Vec<NodeId> = prep
            .text
            .iter()
            .map(|ids| match ids {
                Some(ids) => {
                    let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
                    let a = g.gather(tok, &idx);
                    let pos: Vec<usize> = (0..ids.len()).collect();
                    let b = g.gather(tpos, &pos);
                    g.add(a, b)
                }
                None => tnull,
            })
            .collect();
        let (seq, lens) = g.stack_seq(&seqs);
        let text = TextCtx { seq, lens };

        let x = g.input(Tensor::from_f32(
            vec![ctx.n(), s, s, cfg.input_channels()],
            &prep.x,
        ));
        let h = l.input.apply(g, p, x);
        let h = l.res_a.apply(g, p, &ctx, h, emb);
        let h = match &l.tconv_a {
            Some(tc) => tc.apply(g, p, &ctx, h),
            None => h,
        };
        let skip = l.cross_a.apply(g, p, &ctx, h, &text);

        let d = space_to_depth(g, skip);
        let d = l.down.apply(g, p, d);
        let d = l.res_mid.apply(g, p, &ctx, d, emb);
        let d = l.attn_mid.apply(g, p, &ctx, d);
        let mut d = l.cross_mid.apply(g, p, &ctx, d, &text);
        for (tc, ta) in &l.temporal_mid {
            d = tc.apply(g, p, &ctx, d);
            d = ta.apply(g, p, &ctx, d);
        }

        let u = l.up.apply(g, p, d);
        let u = depth_to_space(g, u);
        let u = g.concat(&[u, skip]);
        let u = l.res_up.apply(g, p, &ctx, u, emb);
        let u = match &l.tconv_up {
            Some(tc) => tc.apply(g, p, &ctx, u),
            None => u,
        };
        let u = l.cross_up.apply(g, p, &ctx, u, &text);
        let u = l.out_norm.act(g, p, u, ctx.n(), cfg.groups);
        l.out.apply(g, p, u)
    }

    /// Splits a channels-last `[N, h, w, C]` buffer into per-clip `T x C x H x W` arrays.
    pub(crate) fn unpack(&self, data: &[f32], b: usize) -> Vec<Array4<f32>> {
        let (t, c, h, w) = self.config.latent_shape().dims();
        let per = t * c * h * w;
        (0..b)
            .map(|k| {
                let src = &data[k * per..(k + 1) * per];
                Array4::from_shape_fn((t, c, h, w), |(i, ch, y, x)| {
                    src[((i * h + y) * w + x) * c + ch]
                })
            })
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Scalar MSE loss against `targets` evaluated with parameters of precision `T`;
    /// returns the loss and the gradients.
    pub fn loss_and_grads<T: Real>(
        &self,
        params: &ParamStore<T>,
        inputs: &[DenoiseInput<'_>],
        targets: &[Array4<f32>],
    ) -> Result<(f64, crate::nn::Gradients<T>)> {
        let prep = self.prepare(inputs)?;
        let mut target = Vec::with_capacity(prep.x.len() / 3);
        for tg in targets {
            if tg.dim() != self.config.latent_shape().dims() {
                return Err(Error::shape(
                    "v target",
                    &self.config.latent_shape().dims_vec(),
                    tg.shape(),
                ));
            }
            push_channels_last(tg, &mut target);
        }
        let mut g = Graph::<T>::new();
        let out = self.forward(&mut g, params, &prep);
        let loss = g.mse(out, Tensor::from_f32(g.shape(out).to_vec(), &target));
        let value = g.value(loss).data()[0].to_f64().unwrap_or(f64::NAN);
        let grads = g.backward(loss, params.len());
        Ok((value, grads))
    }
}

impl VelocityModel for Denoiser {
    fn latent_shape(&self) -> LatentShape {
        self.config.latent_shape()
    }

    fn predict(&self, inputs: &[DenoiseInput<'_>]) -> Result<Vec<Array4<f32>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let prep = self.prepare(inputs)?;
        let mut g = Graph::<f32>::new();
        let out = self.forward(&mut g, &self.params, &prep);
        Ok(self.unpack(g.value(out).data(), inputs.len()))
    }
}

use rand::Rng;

use crate::nn::{Graph, NodeId, ParamId, ParamStore, Real};

pub(crate) struct Init<'a, R: Rng> {
    pub store: &'a mut ParamStore<f32>,
    pub rng: &'a mut R,
}

impl<R: Rng> Init<'_, R> {
    pub fn linear(&mut self, name: &str, k: usize, n: usize, gain: f64) -> Linear {
        let std = gain / (k as f64).sqrt();
        Linear {
            w: self
                .store
                .add_normal(format!("{name}.w"), &[k, n], std, self.rng),
            b: self.store.add_const(format!("{name}.b"), &[n], 0.0),
        }
    }

    pub fn norm(&mut self, name: &str, c: usize) -> Norm {
        Norm {
            gamma: self.store.add_const(format!("{name}.gamma"), &[c], 1.0),
            beta: self.store.add_const(format!("{name}.beta"), &[c], 0.0),
        }
    }

    pub fn table(&mut self, name: &str, rows: usize, d: usize, std: f64) -> ParamId {
        if std == 0.0 {
            self.store.add_const(name, &[rows, d], 0.0)
        } else {
            self.store.add_normal(name, &[rows, d], std, self.rng)
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn apply<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, x: NodeId) -> NodeId {
        let w = g.param(p, self.w);
        let b = g.param(p, self.b);
        g.linear(x, w, Some(b))
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    /// Group norm with statistics per leading block of `n`.
    pub fn apply<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        x: NodeId,
        n: usize,
        groups: usize,
    ) -> NodeId {
        let gamma = g.param(p, self.gamma);
        let beta = g.param(p, self.beta);
        g.norm(x, gamma, beta, n, groups)
    }

    pub fn act<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        x: NodeId,
        n: usize,
        groups: usize,
    ) -> NodeId {
        let h = self.apply(g, p, x, n, groups);
        g.silu(h)
    }
}

/// Shared per-forward context.
pub(crate) struct Ctx {
    /// Number of clips.
    pub b: usize,
    /// Frames per clip.
    pub t: usize,
    pub groups: usize,
    pub heads: usize,
}

impl Ctx {
    pub fn n(&self) -> usize {
        self.b * self.t
    }
}

/// Two 3x3 convolutions with a per-frame embedding shift in between.
pub(crate) struct ResBlock {
    pub norm1: Norm,
    pub conv1: Linear,
    pub emb: Linear,
    pub norm2: Norm,
    pub conv2: Linear,
    pub skip: Option<Linear>,
}

impl ResBlock {
    pub fn new<R: Rng>(
        init: &mut Init<R>,
        name: &str,
        cin: usize,
        cout: usize,
        emb: usize,
    ) -> Self {
        Self {
            norm1: init.norm(&format!("{name}.norm1"), cin),
            conv1: init.linear(&format!("{name}.conv1"), 9 * cin, cout, 1.0),
            emb: init.linear(&format!("{name}.emb"), emb, cout, 1.0),
            norm2: init.norm(&format!("{name}.norm2"), cout),
            conv2: init.linear(&format!("{name}.conv2"), 9 * cout, cout, 0.5),
            skip: (cin != cout).then(|| init.linear(&format!("{name}.skip"), cin, cout, 1.0)),
        }
    }

    /// `x` is `[N, h, w, cin]`, `e` is the activated frame embedding `[N, emb]`.
    pub fn apply<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        ctx: &Ctx,
        x: NodeId,
        e: NodeId,
    ) -> NodeId {
        let n = ctx.n();
        let h = self.norm1.act(g, p, x, n, ctx.groups);
        let h = g.im2col3x3(h);
        let h = self.conv1.apply(g, p, h);
        let shift = self.emb.apply(g, p, e);
        let h = g.broadcast_rows(h, shift);
        let h = self.norm2.act(g, p, h, n, ctx.groups);
        let h = g.im2col3x3(h);
        let h = self.conv2.apply(g, p, h);
        let skip = match &self.skip {
            Some(s) => s.apply(g, p, x),
            None => x,
        };
        g.add(h, skip)
    }
}

/// Kernel-3 convolution along time, residual.
pub(crate) struct TemporalConv {
    pub norm: Norm,
    pub conv: Linear,
}

impl TemporalConv {
    pub fn new<R: Rng>(init: &mut Init<R>, name: &str, c: usize) -> Self {
        Self {
            norm: init.norm(&format!("{name}.norm"), c),
            conv: init.linear(&format!("{name}.conv"), 3 * c, c, 0.5),
        }
    }

    pub fn apply<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        ctx: &Ctx,
        x: NodeId,
    ) -> NodeId {
        let shape = g.shape(x).to_vec();
        let c = shape[3];
        let s = shape[1] * shape[2];
        let h = self.norm.act(g, p, x, ctx.b, ctx.groups);
        let h = g.reshape(h, &[ctx.b, ctx.t, s, c]);
        let h = g.im2col_time3(h);
        let h = self.conv.apply(g, p, h);
        let h = g.reshape(h, &shape);
        g.add(x, h)
    }
}

/// Self-attention across the frames of each spatial location, residual.
pub(crate) struct TemporalAttn {
    pub pos: ParamId,
    pub norm: Norm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
}

impl TemporalAttn {
    pub fn new<R: Rng>(init: &mut Init<R>, name: &str, c: usize, frames: usize) -> Self {
        Self {
            pos: init.table(&format!("{name}.pos"), frames, c, 0.0),
            norm: init.norm(&format!("{name}.norm"), c),
            q: init.linear(&format!("{name}.q"), c, c, 1.0),
            k: init.linear(&format!("{name}.k"), c, c, 1.0),
            v: init.linear(&format!("{name}.v"), c, c, 1.0),
            out: init.linear(&format!("{name}.out"), c, c, 0.5),
        }
    }

    pub fn apply<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        ctx: &Ctx,
        x: NodeId,
    ) -> NodeId {
        let shape = g.shape(x).to_vec();
        let c = shape[3];
        let s = shape[1] * shape[2];
        let h = self.norm.apply(g, p, x, ctx.b, ctx.groups);
        let table = g.param(p, self.pos);
        let ids: Vec<usize> = (0..ctx.n()).map(|i| i % ctx.t).collect();
        let pos = g.gather(table, &ids);
        let h = g.broadcast_rows(h, pos);
        let h = g.reshape(h, &[ctx.b, ctx.t, s, c]);
        let h = g.permute(h, &[0, 2, 1, 3]);
        let h = g.reshape(h, &[ctx.b * s, ctx.t, c]);
        let q = self.q.apply(g, p, h);
        let k = self.k.apply(g, p, h);
        let v = self.v.apply(g, p, h);
        let a = g.attention(q, k, v, ctx.heads, None);
        let a = self.out.apply(g, p, a);
        let a = g.reshape(a, &[ctx.b, s, ctx.t, c]);
        let a = g.permute(a, &[0, 2, 1, 3]);
        let a = g.reshape(a, &shape);
        g.add(x, a)
    }
}

/// Self-attention over the pixels of each frame, residual.
pub(crate) struct SpatialAttn {
    pub norm: Norm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
}

impl SpatialAttn {
    pub fn new<R: Rng>(init: &mut Init<R>, name: &str, c: usize) -> Self {
        Self {
            norm: init.norm(&format!("{name}.norm"), c),
            q: init.linear(&format!("{name}.q"), c, c, 1.0),
            k: init.linear(&format!("{name}.k"), c, c, 1.0),
            v: init.linear(&format!("{name}.v"), c, c, 1.0),
            out: init.linear(&format!("{name}.out"), c, c, 0.5),
        }
    }

    pub fn apply<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        ctx: &Ctx,
        x: NodeId,
    ) -> NodeId {
        let shape = g.shape(x).to_vec();
        let c = shape[3];
        let s = shape[1] * shape[2];
        let h = self.norm.apply(g, p, x, ctx.n(), ctx.groups);
        let h = g.reshape(h, &[ctx.n(), s, c]);
        let q = self.q.apply(g, p, h);
        let k = self.k.apply(g, p, h);
        let v = self.v.apply(g, p, h);
        let a = g.attention(q, k, v, ctx.heads, None);
        let a = self.out.apply(g, p, a);
        let a = g.reshape(a, &shape);
        g.add(x, a)
    }
}

/// Cross-attention from pixels to text tokens, residual.
pub(crate) struct CrossAttn {
    pub norm: Norm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
}

/// Text tokens per clip, `[B, L, D]`, with valid lengths.
pub(crate) struct TextCtx {
    pub seq: NodeId,
    pub lens: Vec<usize>,
}

impl CrossAttn {
    pub fn new<R: Rng>(init: &mut Init<R>, name: &str, c: usize, text: usize) -> Self {
        Self {
            norm: init.norm(&format!("{name}.norm"), c),
            q: init.linear(&format!("{name}.q"), c, c, 1.0),
            k: init.linear(&format!("{name}.k"), text, c, 1.0),
            v: init.linear(&format!("{name}.v"), text, c, 1.0),
            out: init.linear(&format!("{name}.out"), c, c, 0.5),
        }
    }

    pub fn apply<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        ctx: &Ctx,
        x: NodeId,
        text: &TextCtx,
    ) -> NodeId {
        let shape = g.shape(x).to_vec();
        let c = shape[3];
        let s = shape[1] * shape[2];
        let l = g.shape(text.seq)[1];
        let h = self.norm.apply(g, p, x, ctx.n(), ctx.groups);
        let h = g.reshape(h, &[ctx.n(), s, c]);
        let q = self.q.apply(g, p, h);
        let per_frame = |g: &mut Graph<T>, lin: &Linear| {
            let kv = lin.apply(g, p, text.seq);
            let kv = g.reshape(kv, &[ctx.b, l * c]);
            let kv = g.repeat_rows(kv, ctx.t);
            g.reshape(kv, &[ctx.n(), l, c])
        };
        let k = per_frame(g, &self.k);
        let v = per_frame(g, &self.v);
        let lens = text
            .lens
            .iter()
            .flat_map(|&len| std::iter::repeat_n(len, ctx.t))
            .collect();
        let a = g.attention(q, k, v, ctx.heads, Some(lens));
        let a = self.out.apply(g, p, a);
        let a = g.reshape(a, &shape);
        g.add(x, a)
    }
}

/// `[N, h, w, c]` to `[N, h/2, w/2, 4c]`.
pub(crate) fn space_to_depth<T: Real>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let s = g.shape(x).to_vec();
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let y = g.reshape(x, &[n, h / 2, 2, w / 2, 2, c]);
    let y = g.permute(y, &[0, 1, 3, 2, 4, 5]);
    g.reshape(y, &[n, h / 2, w / 2, 4 * c])
}

/// `[N, h, w, 4c]` to `[N, 2h, 2w, c]`.
pub(crate) fn depth_to_space<T: Real>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let s = g.shape(x).to_vec();
    let (n, h, w, c4) = (s[0], s[1], s[2], s[3]);
    let c = c4 / 4;
    let y = g.reshape(x, &[n, h, w, 2, 2, c]);
    let y = g.permute(y, &[0, 1, 3, 2, 4, 5]);
    g.reshape(y, &[n, 2 * h, 2 * w, c])
}

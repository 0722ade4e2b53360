use std::collections::HashMap;

use super::{ParamId, ParamStore, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op<R> {
    Input,
    Param(ParamId),
    /// `x[.., k] @ w[k, n] + b[n]`
    Linear {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Add(NodeId, NodeId),
    Silu(NodeId),
    /// Normalization over `(spatial, channels-in-group)` of an `[n, s, c]` view.
    Norm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        n: usize,
        s: usize,
        groups: usize,
        mean: Vec<R>,
        rstd: Vec<R>,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        key_len: Option<Vec<usize>>,
        probs: Vec<R>,
    },
    Permute {
        x: NodeId,
        perm: Vec<usize>,
    },
    Reshape(NodeId),
    Im2ColSpatial {
        x: NodeId,
    },
    Im2ColTemporal {
        x: NodeId,
    },
    Concat {
        xs: Vec<NodeId>,
    },
    /// `x[g, r, c] + e[g, c]`
    BroadcastRows {
        x: NodeId,
        e: NodeId,
    },
    RepeatRows {
        x: NodeId,
        times: usize,
    },
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    /// Row `i` is `a[i]` where `keep[i]`, else the single row of `b`.
    SelectRows {
        a: NodeId,
        b: NodeId,
        keep: Vec<bool>,
    },
    /// Stack `[l_i, d]` sequences into a zero-padded `[count, l_max, d]` batch.
    StackSeq {
        parts: Vec<NodeId>,
    },
    Mse {
        pred: NodeId,
        target: Tensor<R>,
    },
}

struct Node<R> {
    value: Tensor<R>,
    op: Op<R>,
    requires_grad: bool,
}

/// A single forward pass, recorded for reverse-mode differentiation.
pub struct Graph<R> {
    nodes: Vec<Node<R>>,
    param_nodes: HashMap<ParamId, NodeId>,
}

/// Parameter gradients produced by [`Graph::backward`].
pub struct Gradients<R> {
    by_param: Vec<Option<Tensor<R>>>,
}

impl<R: Real> Gradients<R> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<R>> {
        self.by_param.get(id.index()).and_then(Option::as_ref)
    }

    pub fn global_norm(&self) -> f64 {
        self.by_param
            .iter()
            .flatten()
            .map(Tensor::sum_sq)
            .sum::<f64>()
            .sqrt()
    }
}

impl<R: Real> Default for Graph<R> {
    fn default() -> Self {
        Self::new()
    }
}

fn silu<R: Real>(x: R) -> R {
    x / (R::one() + (-x).exp())
}

fn silu_grad<R: Real>(x: R) -> R {
    let s = R::one() / (R::one() + (-x).exp());
    s * (R::one() + x * (R::one() - s))
}

fn permuted_shape(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    perm.iter().map(|&p| shape[p]).collect()
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Copies `src` (shape `shape`) into a new buffer laid out as `shape` permuted by `perm`.
fn permute_data<R: Real>(src: &[R], shape: &[usize], perm: &[usize]) -> Vec<R> {
    let out_shape = permuted_shape(shape, perm);
    let in_strides = strides(shape);
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(src.len());
    let nd = out_shape.len();
    if src.is_empty() {
        return out;
    }
    // Innermost axis handled as a strided run.
    let inner = out_shape[nd - 1];
    let inner_stride = src_strides[nd - 1];
    let outer: usize = out_shape[..nd - 1].iter().product();
    let mut idx = vec![0usize; nd - 1];
    let mut base = 0usize;
    for _ in 0..outer {
        if inner_stride == 1 {
            out.extend_from_slice(&src[base..base + inner]);
        } else {
            out.extend((0..inner).map(|i| src[base + i * inner_stride]));
        }
        for ax in (0..nd - 1).rev() {
            idx[ax] += 1;
            base += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            base -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

impl<R: Real> Graph<R> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn value(&self, id: NodeId) -> &Tensor<R> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant; no gradient flows into it.
    pub fn input(&mut self, value: Tensor<R>) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// A trainable parameter. Repeated calls with the same id share one node.
    pub fn param(&mut self, store: &ParamStore<R>, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        let n = self.push(store.get(id).clone(), Op::Param(id), true);
        self.param_nodes.insert(id, n);
        n
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> NodeId {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(ws.len(), 2, "linear weight must be 2-D");
        let (k, n) = (ws[0], ws[1]);
        assert_eq!(
            *xs.last().unwrap(),
            k,
            "linear: input width {xs:?} vs weight {ws:?}"
        );
        let m = self.value(x).numel() / k;
        let mut out = vec![R::zero(); m * n];
        if let Some(b) = b {
            let bv = self.value(b).data();
            assert_eq!(bv.len(), n);
            for row in out.chunks_exact_mut(n) {
                row.copy_from_slice(bv);
            }
        }
        R::gemm(
            m,
            k,
            n,
            R::one(),
            (self.value(x).data(), k, 1),
            (self.value(w).data(), n, 1),
            R::one(),
            (&mut out, n, 1),
        );
        let mut shape = xs;
        *shape.last_mut().unwrap() = n;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        self.push(Tensor::new(shape, out), Op::Linear { x, w, b }, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(shape, data), Op::Add(a, b), rg)
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data().iter().map(|&v| silu(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(Tensor::new(shape, data), Op::Silu(x), rg)
    }

    /// Group normalization of `x` viewed as `[n, s, c]`, with per-channel affine.
    pub fn norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        n: usize,
        groups: usize,
    ) -> NodeId {
        let c = self.value(x).last_dim();
        let total = self.value(x).numel();
        assert_eq!(total % (n * c), 0, "norm: bad leading size");
        assert_eq!(c % groups, 0, "norm: channels not divisible by groups");
        let s = total / (n * c);
        let cg = c / groups;
        let count = R::of((s * cg) as f64);
        let eps = R::of(1e-5);
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut mean = vec![R::zero(); n * groups];
        let mut rstd = vec![R::zero(); n * groups];
        for ni in 0..n {
            let block = &xv[ni * s * c..(ni + 1) * s * c];
            for g in 0..groups {
                let mut sum = R::zero();
                for si in 0..s {
                    for &v in &block[si * c + g * cg..si * c + (g + 1) * cg] {
                        sum += v;
                    }
                }
                let mu = sum / count;
                let mut var = R::zero();
                for si in 0..s {
                    for &v in &block[si * c + g * cg..si * c + (g + 1) * cg] {
                        let d = v - mu;
                        var += d * d;
                    }
                }
                mean[ni * groups + g] = mu;
                rstd[ni * groups + g] = R::one() / (var / count + eps).sqrt();
            }
        }
        let mut out = vec![R::zero(); total];
        for ni in 0..n {
            for si in 0..s {
                let base = (ni * s + si) * c;
                for ch in 0..c {
                    let g = ch / cg;
                    let st = ni * groups + g;
                    out[base + ch] = (xv[base + ch] - mean[st]) * rstd[st] * gv[ch] + bv[ch];
                }
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            Tensor::new(shape, out),
            Op::Norm {
                x,
                gamma,
                beta,
                n,
                s,
                groups,
                mean,
                rstd,
            },
            rg,
        )
    }

    /// Multi-head scaled dot-product attention.
    ///
    /// `q` is `[g, lq, d]`, `k` and `v` are `[g, lk, d]` with `d = heads * dh`.
    /// `key_len[g]` restricts group `g` to its first keys.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        key_len: Option<Vec<usize>>,
    ) -> NodeId {
        let qs = self.shape(q).to_vec();
        let ks = self.shape(k).to_vec();
        assert_eq!(qs.len(), 3, "attention q must be [g, l, d]");
        assert_eq!(ks.len(), 3);
        assert_eq!(self.shape(v), &ks[..]);
        let (g, lq, d) = (qs[0], qs[1], qs[2]);
        let lk = ks[1];
        assert_eq!(ks[0], g);
        assert_eq!(ks[2], d);
        assert_eq!(d % heads, 0);
        if let Some(kl) = &key_len {
            assert_eq!(kl.len(), g);
            assert!(kl.iter().all(|&l| l >= 1 && l <= lk));
        }
        let dh = d / heads;
        let scale = R::of(1.0 / (dh as f64).sqrt());
        let qv = self.value(q).data();
        let kv = self.value(k).data();
        let vv = self.value(v).data();
        let mut probs = vec![R::zero(); g * heads * lq * lk];
        let mut out = vec![R::zero(); g * lq * d];
        for gi in 0..g {
            let le = key_len.as_ref().map_or(lk, |kl| kl[gi]);
            for h in 0..heads {
                let qo = gi * lq * d + h * dh;
                let ko = gi * lk * d + h * dh;
                let po = ((gi * heads) + h) * lq * lk;
                let p = &mut probs[po..po + lq * lk];
                R::gemm(
                    lq,
                    dh,
                    le,
                    scale,
                    (&qv[qo..], d, 1),
                    (&kv[ko..], 1, d),
                    R::zero(),
                    (p, lk, 1),
                );
                for row in p.chunks_exact_mut(lk) {
                    let row = &mut row[..le];
                    let mx = row.iter().fold(R::neg_infinity(), |a, &b| a.max(b));
                    let mut sum = R::zero();
                    for x in row.iter_mut() {
                        *x = (*x - mx).exp();
                        sum += *x;
                    }
                    for x in row.iter_mut() {
                        *x = *x / sum;
                    }
                }
                R::gemm(
                    lq,
                    le,
                    dh,
                    R::one(),
                    (&probs[po..], lk, 1),
                    (&vv[ko..], d, 1),
                    R::zero(),
                    (&mut out[qo..], d, 1),
                );
            }
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        self.push(
            Tensor::new(qs, out),
            Op::Attention {
                q,
                k,
                v,
                heads,
                key_len,
                probs,
            },
            rg,
        )
    }

    pub fn permute(&mut self, x: NodeId, perm: &[usize]) -> NodeId {
        let shape = self.shape(x).to_vec();
        assert_eq!(perm.len(), shape.len());
        let data = permute_data(self.value(x).data(), &shape, perm);
        let out_shape = permuted_shape(&shape, perm);
        let rg = self.rg(x);
        self.push(
            Tensor::new(out_shape, data),
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            rg,
        )
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        let value = self.value(x).clone().reshaped(shape.to_vec());
        let rg = self.rg(x);
        self.push(value, Op::Reshape(x), rg)
    }

    /// 3x3 zero-padded patches: `[n, h, w, c]` to `[n, h, w, 9c]`, slot-major.
    pub fn im2col3x3(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x).to_vec();
        assert_eq!(s.len(), 4, "im2col3x3 expects [n, h, w, c]");
        let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
        let xv = self.value(x).data();
        let mut out = vec![R::zero(); n * h * w * 9 * c];
        for ni in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let ob = ((ni * h + y) * w + xx) * 9 * c;
                    for dy in 0..3 {
                        let sy = y as isize + dy as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for dx in 0..3 {
                            let sx = xx as isize + dx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let ib = ((ni * h + sy as usize) * w + sx as usize) * c;
                            let slot = dy * 3 + dx;
                            out[ob + slot * c..ob + (slot + 1) * c]
                                .copy_from_slice(&xv[ib..ib + c]);
                        }
                    }
                }
            }
        }
        let rg = self.rg(x);
        self.push(
            Tensor::new(vec![n, h, w, 9 * c], out),
            Op::Im2ColSpatial { x },
            rg,
        )
    }

    /// Kernel-3 temporal patches: `[b, t, s, c]` to `[b, t, s, 3c]`, zero-padded in time.
    pub fn im2col_time3(&mut self, x: NodeId) -> NodeId {
        let sh = self.shape(x).to_vec();
        assert_eq!(sh.len(), 4, "im2col_time3 expects [b, t, s, c]");
        let (b, t, s, c) = (sh[0], sh[1], sh[2], sh[3]);
        let xv = self.value(x).data();
        let mut out = vec![R::zero(); b * t * s * 3 * c];
        for bi in 0..b {
            for ti in 0..t {
                for k in 0..3 {
                    let st = ti as isize + k as isize - 1;
                    if st < 0 || st >= t as isize {
                        continue;
                    }
                    for si in 0..s {
                        let ob = ((bi * t + ti) * s + si) * 3 * c + k * c;
                        let ib = ((bi * t + st as usize) * s + si) * c;
                        out[ob..ob + c].copy_from_slice(&xv[ib..ib + c]);
                    }
                }
            }
        }
        let rg = self.rg(x);
        self.push(
            Tensor::new(vec![b, t, s, 3 * c], out),
            Op::Im2ColTemporal { x },
            rg,
        )
    }

    /// Concatenate along the last axis; leading shapes must agree.
    pub fn concat(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty());
        let lead = self.shape(xs[0])[..self.shape(xs[0]).len() - 1].to_vec();
        let widths: Vec<usize> = xs.iter().map(|&x| self.value(x).last_dim()).collect();
        for &x in xs {
            assert_eq!(
                &self.shape(x)[..lead.len()],
                &lead[..],
                "concat lead mismatch"
            );
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&x, &wd) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(x).data()[r * wd..(r + 1) * wd]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let rg = xs.iter().any(|&x| self.rg(x));
        self.push(Tensor::new(shape, out), Op::Concat { xs: xs.to_vec() }, rg)
    }

    /// Adds row `e[g]` to every row of block `g` of `x`; `x` has `g * r` rows.
    pub fn broadcast_rows(&mut self, x: NodeId, e: NodeId) -> NodeId {
        let c = self.value(x).last_dim();
        assert_eq!(self.value(e).last_dim(), c);
        let g = self.value(e).numel() / c;
        let total = self.value(x).numel();
        assert_eq!(total % (g * c), 0, "broadcast_rows: bad grouping");
        let r = total / (g * c);
        let mut out = self.value(x).data().to_vec();
        let ev = self.value(e).data();
        for gi in 0..g {
            let erow = &ev[gi * c..(gi + 1) * c];
            for row in out[gi * r * c..(gi + 1) * r * c].chunks_exact_mut(c) {
                for (o, &v) in row.iter_mut().zip(erow) {
                    *o += v;
                }
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x) || self.rg(e);
        self.push(Tensor::new(shape, out), Op::BroadcastRows { x, e }, rg)
    }

    /// `[b, e]` to `[b * times, e]`, each row repeated consecutively.
    pub fn repeat_rows(&mut self, x: NodeId, times: usize) -> NodeId {
        let e = self.value(x).last_dim();
        let b = self.value(x).numel() / e;
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(b * times * e);
        for bi in 0..b {
            for _ in 0..times {
                out.extend_from_slice(&xv[bi * e..(bi + 1) * e]);
            }
        }
        let rg = self.rg(x);
        self.push(
            Tensor::new(vec![b * times, e], out),
            Op::RepeatRows { x, times },
            rg,
        )
    }

    /// Row lookup into a `[v, d]` table.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let d = self.value(table).last_dim();
        let v = self.value(table).numel() / d;
        let tv = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            assert!(i < v, "gather index {i} out of range {v}");
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let rg = self.rg(table);
        self.push(
            Tensor::new(vec![ids.len(), d], out),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    pub fn select_rows(&mut self, a: NodeId, b: NodeId, keep: &[bool]) -> NodeId {
        let e = self.value(a).last_dim();
        let rows = self.value(a).numel() / e;
        assert_eq!(keep.len(), rows);
        assert_eq!(self.value(b).numel(), e, "select_rows: b must be one row");
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = Vec::with_capacity(rows * e);
        for (i, &k) in keep.iter().enumerate() {
            if k {
                out.extend_from_slice(&av[i * e..(i + 1) * e]);
            } else {
                out.extend_from_slice(bv);
            }
        }
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(
            Tensor::new(shape, out),
            Op::SelectRows {
                a,
                b,
                keep: keep.to_vec(),
            },
            rg,
        )
    }

    /// Returns the stacked node and the per-sequence lengths.
    pub fn stack_seq(&mut self, parts: &[NodeId]) -> (NodeId, Vec<usize>) {
        assert!(!parts.is_empty());
        let d = self.value(parts[0]).last_dim();
        let lens: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.value(p).last_dim(), d);
                self.value(p).numel() / d
            })
            .collect();
        let lmax = *lens.iter().max().unwrap();
        let mut out = vec![R::zero(); parts.len() * lmax * d];
        for (i, &p) in parts.iter().enumerate() {
            let src = self.value(p).data();
            out[i * lmax * d..i * lmax * d + src.len()].copy_from_slice(src);
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let id = self.push(
            Tensor::new(vec![parts.len(), lmax, d], out),
            Op::StackSeq {
                parts: parts.to_vec(),
            },
            rg,
        );
        (id, lens)
    }

    /// Mean squared error against a constant target; a scalar node.
    pub fn mse(&mut self, pred: NodeId, target: Tensor<R>) -> NodeId {
        assert_eq!(
            self.value(pred).numel(),
            target.numel(),
            "mse size mismatch"
        );
        let n = R::of(target.numel() as f64);
        let loss = self
            .value(pred)
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum::<R>()
            / n;
        let rg = self.rg(pred);
        self.push(
            Tensor::new(vec![1], vec![loss]),
            Op::Mse { pred, target },
            rg,
        )
    }

    /// Back-propagates from a scalar node.
    pub fn backward(&self, root: NodeId, n_params: usize) -> Gradients<R> {
        assert_eq!(self.value(root).numel(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Vec<R>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![R::one()]);
        let mut by_param: Vec<Option<Tensor<R>>> = (0..n_params).map(|_| None).collect();

        for i in (0..=root.0).rev() {
            let Some(gout) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.backward_node(node, &gout, &mut grads, &mut by_param);
        }
        Gradients { by_param }
    }

    fn acc(&self, grads: &mut [Option<Vec<R>>], id: NodeId, g: Vec<R>) {
        if !self.rg(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => {
                for (a, b) in existing.iter_mut().zip(g) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn zeros_like(&self, id: NodeId) -> Vec<R> {
        vec![R::zero(); self.value(id).numel()]
    }

    fn backward_node(
        &self,
        node: &Node<R>,
        gout: &[R],
        grads: &mut [Option<Vec<R>>],
        by_param: &mut [Option<Tensor<R>>],
    ) {
        match &node.op {
            Op::Input => {}
            Op::Param(pid) => {
                let t = Tensor::new(node.value.shape().to_vec(), gout.to_vec());
                match &mut by_param[pid.index()] {
                    Some(existing) => existing.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
            Op::Linear { x, w, b } => {
                let ws = self.shape(*w);
                let (k, n) = (ws[0], ws[1]);
                let m = gout.len() / n;
                if self.rg(*x) {
                    let mut gx = vec![R::zero(); m * k];
                    R::gemm(
                        m,
                        n,
                        k,
                        R::one(),
                        (gout, n, 1),
                        (self.value(*w).data(), 1, n),
                        R::zero(),
                        (&mut gx, k, 1),
                    );
                    self.acc(grads, *x, gx);
                }
                if self.rg(*w) {
                    let mut gw = vec![R::zero(); k * n];
                    R::gemm(
                        k,
                        m,
                        n,
                        R::one(),
                        (self.value(*x).data(), 1, k),
                        (gout, n, 1),
                        R::zero(),
                        (&mut gw, n, 1),
                    );
                    self.acc(grads, *w, gw);
                }
                if let Some(b) = b {
                    if self.rg(*b) {
                        let mut gb = vec![R::zero(); n];
                        for row in gout.chunks_exact(n) {
                            for (a, &v) in gb.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                        self.acc(grads, *b, gb);
                    }
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, gout.to_vec());
                self.acc(grads, *b, gout.to_vec());
            }
            Op::Silu(x) => {
                let g = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(gout)
                    .map(|(&v, &go)| go * silu_grad(v))
                    .collect();
                self.acc(grads, *x, g);
            }
            Op::Norm {
                x,
                gamma,
                beta,
                n,
                s,
                groups,
                mean,
                rstd,
            } => {
                let (n, s, groups) = (*n, *s, *groups);
                let xv = self.value(*x).data();
                let gv = self.value(*gamma).data();
                let c = gv.len();
                let cg = c / groups;
                let count = R::of((s * cg) as f64);
                let mut ggamma = vec![R::zero(); c];
                let mut gbeta = vec![R::zero(); c];
                let mut gx = vec![R::zero(); xv.len()];
                for ni in 0..n {
                    for g in 0..groups {
                        let st = ni * groups + g;
                        let (mu, rs) = (mean[st], rstd[st]);
                        let mut sum_dxh = R::zero();
                        let mut sum_dxh_xh = R::zero();
                        for si in 0..s {
                            let base = (ni * s + si) * c;
                            for ch in g * cg..(g + 1) * cg {
                                let xh = (xv[base + ch] - mu) * rs;
                                let go = gout[base + ch];
                                ggamma[ch] += go * xh;
                                gbeta[ch] += go;
                                let dxh = go * gv[ch];
                                sum_dxh += dxh;
                                sum_dxh_xh += dxh * xh;
                            }
                        }
                        for si in 0..s {
                            let base = (ni * s + si) * c;
                            for ch in g * cg..(g + 1) * cg {
                                let xh = (xv[base + ch] - mu) * rs;
                                let dxh = gout[base + ch] * gv[ch];
                                gx[base + ch] =
                                    rs * (dxh - sum_dxh / count - xh * sum_dxh_xh / count);
                            }
                        }
                    }
                }
                self.acc(grads, *x, gx);
                self.acc(grads, *gamma, ggamma);
                self.acc(grads, *beta, gbeta);
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                key_len,
                probs,
            } => {
                let qs = self.shape(*q);
                let (g, lq, d) = (qs[0], qs[1], qs[2]);
                let lk = self.shape(*k)[1];
                let heads = *heads;
                let dh = d / heads;
                let scale = R::of(1.0 / (dh as f64).sqrt());
                let qv = self.value(*q).data();
                let kv = self.value(*k).data();
                let vv = self.value(*v).data();
                let mut gq = self.zeros_like(*q);
                let mut gk = self.zeros_like(*k);
                let mut gv = self.zeros_like(*v);
                let mut dp = vec![R::zero(); lq * lk];
                for gi in 0..g {
                    let le = key_len.as_ref().map_or(lk, |kl| kl[gi]);
                    for h in 0..heads {
                        let qo = gi * lq * d + h * dh;
                        let ko = gi * lk * d + h * dh;
                        let po = ((gi * heads) + h) * lq * lk;
                        let p = &probs[po..po + lq * lk];
                        // dP = dO @ V^T
                        R::gemm(
                            lq,
                            dh,
                            le,
                            R::one(),
                            (&gout[qo..], d, 1),
                            (&vv[ko..], 1, d),
                            R::zero(),
                            (&mut dp, lk, 1),
                        );
                        // dV += P^T @ dO
                        R::gemm(
                            le,
                            lq,
                            dh,
                            R::one(),
                            (p, 1, lk),
                            (&gout[qo..], d, 1),
                            R::one(),
                            (&mut gv[ko..], d, 1),
                        );
                        // dS = P * (dP - rowsum(dP * P))
                        for r in 0..lq {
                            let pr = &p[r * lk..r * lk + le];
                            let dr = &mut dp[r * lk..r * lk + le];
                            let dot: R = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                            for (dv, &pv) in dr.iter_mut().zip(pr) {
                                *dv = pv * (*dv - dot);
                            }
                        }
                        // dQ += scale * dS @ K ; dK += scale * dS^T @ Q
                        R::gemm(
                            lq,
                            le,
                            dh,
                            scale,
                            (&dp, lk, 1),
                            (&kv[ko..], d, 1),
                            R::one(),
                            (&mut gq[qo..], d, 1),
                        );
                        R::gemm(
                            le,
                            lq,
                            dh,
                            scale,
                            (&dp, 1, lk),
                            (&qv[qo..], d, 1),
                            R::one(),
                            (&mut gk[ko..], d, 1),
                        );
                    }
                }
                self.acc(grads, *q, gq);
                self.acc(grads, *k, gk);
                self.acc(grads, *v, gv);
            }
            Op::Permute { x, perm } => {
                let inv = inverse_perm(perm);
                let g = permute_data(gout, node.value.shape(), &inv);
                self.acc(grads, *x, g);
            }
            Op::Reshape(x) => self.acc(grads, *x, gout.to_vec()),
            Op::Im2ColSpatial { x } => {
                let s = self.shape(*x);
                let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
                let mut gx = vec![R::zero(); n * h * w * c];
                for ni in 0..n {
                    for y in 0..h {
                        for xx in 0..w {
                            let ob = ((ni * h + y) * w + xx) * 9 * c;
                            for dy in 0..3 {
                                let sy = y as isize + dy as isize - 1;
                                if sy < 0 || sy >= h as isize {
                                    continue;
                                }
                                for dx in 0..3 {
                                    let sx = xx as isize + dx as isize - 1;
                                    if sx < 0 || sx >= w as isize {
                                        continue;
                                    }
                                    let ib = ((ni * h + sy as usize) * w + sx as usize) * c;
                                    let slot = dy * 3 + dx;
                                    for ch in 0..c {
                                        gx[ib + ch] += gout[ob + slot * c + ch];
                                    }
                                }
                            }
                        }
                    }
                }
                self.acc(grads, *x, gx);
            }
            Op::Im2ColTemporal { x } => {
                let sh = self.shape(*x);
                let (b, t, s, c) = (sh[0], sh[1], sh[2], sh[3]);
                let mut gx = vec![R::zero(); b * t * s * c];
                for bi in 0..b {
                    for ti in 0..t {
                        for k in 0..3 {
                            let st = ti as isize + k as isize - 1;
                            if st < 0 || st >= t as isize {
                                continue;
                            }
                            for si in 0..s {
                                let ob = ((bi * t + ti) * s + si) * 3 * c + k * c;
                                let ib = ((bi * t + st as usize) * s + si) * c;
                                for ch in 0..c {
                                    gx[ib + ch] += gout[ob + ch];
                                }
                            }
                        }
                    }
                }
                self.acc(grads, *x, gx);
            }
            Op::Concat { xs } => {
                let widths: Vec<usize> = xs.iter().map(|&x| self.value(x).last_dim()).collect();
                let total: usize = widths.iter().sum();
                let rows = gout.len() / total;
                let mut off = 0;
                for (&x, &wd) in xs.iter().zip(&widths) {
                    if self.rg(x) {
                        let mut g = Vec::with_capacity(rows * wd);
                        for r in 0..rows {
                            g.extend_from_slice(&gout[r * total + off..r * total + off + wd]);
                        }
                        self.acc(grads, x, g);
                    }
                    off += wd;
                }
            }
            Op::BroadcastRows { x, e } => {
                self.acc(grads, *x, gout.to_vec());
                if self.rg(*e) {
                    let c = self.value(*e).last_dim();
                    let g = self.value(*e).numel() / c;
                    let r = gout.len() / (g * c);
                    let mut ge = vec![R::zero(); g * c];
                    for gi in 0..g {
                        for row in gout[gi * r * c..(gi + 1) * r * c].chunks_exact(c) {
                            for (a, &v) in ge[gi * c..(gi + 1) * c].iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                    }
                    self.acc(grads, *e, ge);
                }
            }
            Op::RepeatRows { x, times } => {
                let e = self.value(*x).last_dim();
                let b = self.value(*x).numel() / e;
                let mut g = vec![R::zero(); b * e];
                for bi in 0..b {
                    for tt in 0..*times {
                        let src = &gout[(bi * times + tt) * e..(bi * times + tt + 1) * e];
                        for (a, &v) in g[bi * e..(bi + 1) * e].iter_mut().zip(src) {
                            *a += v;
                        }
                    }
                }
                self.acc(grads, *x, g);
            }
            Op::Gather { table, ids } => {
                let d = self.value(*table).last_dim();
                let mut g = self.zeros_like(*table);
                for (r, &i) in ids.iter().enumerate() {
                    for (a, &v) in g[i * d..(i + 1) * d]
                        .iter_mut()
                        .zip(&gout[r * d..(r + 1) * d])
                    {
                        *a += v;
                    }
                }
                self.acc(grads, *table, g);
            }
            Op::SelectRows { a, b, keep } => {
                let e = self.value(*b).numel();
                let mut ga = vec![R::zero(); gout.len()];
                let mut gb = vec![R::zero(); e];
                for (i, &k) in keep.iter().enumerate() {
                    let src = &gout[i * e..(i + 1) * e];
                    if k {
                        ga[i * e..(i + 1) * e].copy_from_slice(src);
                    } else {
                        for (acc, &v) in gb.iter_mut().zip(src) {
                            *acc += v;
                        }
                    }
                }
                self.acc(grads, *a, ga);
                self.acc(grads, *b, gb);
            }
            Op::StackSeq { parts } => {
                let s = node.value.shape();
                let (lmax, d) = (s[1], s[2]);
                for (i, &p) in parts.iter().enumerate() {
                    let len = self.value(p).numel();
                    self.acc(grads, p, gout[i * lmax * d..i * lmax * d + len].to_vec());
                }
            }
            Op::Mse { pred, target } => {
                let n = R::of(target.numel() as f64);
                let two = R::of(2.0);
                let go = gout[0];
                let g = self
                    .value(*pred)
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&p, &t)| two * (p - t) / n * go)
                    .collect();
                self.acc(grads, *pred, g);
            }
        }
    }
}

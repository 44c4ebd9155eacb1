//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended to a [`Graph`] in construction order, which is also a
//! topological order, so backward simply walks the tape in reverse.
//!
//! A node can be flagged as a *dynamic factor*: a multiplicative term that
//! depends on the input (cosine scaling, attention matrix, variance scaler).
//! In [`BackwardMode::Training`] such nodes are differentiated like any
//! other. In [`BackwardMode::DynamicLinear`] no gradient enters them, so the
//! gradient of an output with respect to the input is exactly the row of the
//! input-dependent linear map `W(x)` with `f(x) = W(x) x`.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{ReduceKind, Shape, Tensor};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardMode {
    /// True derivatives through every node.
    Training,
    /// Dynamic factors are held constant.
    DynamicLinear,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    graph: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Identity(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f32),
    Reshape(usize),
    Permute(usize, Vec<usize>),
    Sum(usize),
    Mean(usize, Vec<usize>),
    Bmm(usize, usize, bool, bool),
    Im2col {
        x: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Maximum(usize, usize),
    MaxPool2 {
        x: usize,
        argmax: Vec<u32>,
    },
    Softmax(usize),
    ColNorm(usize),
    RsqrtEps(usize),
    CosScale {
        lin: usize,
        norm: usize,
        exponent: f32,
    },
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Identity(a)
            | Op::Scale(a, _)
            | Op::Reshape(a)
            | Op::Permute(a, _)
            | Op::Sum(a)
            | Op::Mean(a, _)
            | Op::Softmax(a)
            | Op::ColNorm(a)
            | Op::RsqrtEps(a) => vec![*a],
            Op::Im2col { x, .. } | Op::MaxPool2 { x, .. } => vec![*x],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::Bmm(a, b, _, _)
            | Op::Maximum(a, b) => vec![*a, *b],
            Op::CosScale { lin, norm, .. } => vec![*lin, *norm],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    dynamic_factor: bool,
}

/// A recorded computation.
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.graph != self.id || v.index >= self.nodes.len() {
            return Err(Error::Graph(format!("variable {v:?} does not belong to this graph")));
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|&p| self.nodes[p].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            dynamic_factor: false,
        });
        Var {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// A leaf that gradients are computed for (inputs, parameters).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            dynamic_factor: false,
        });
        Var {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.check(v).expect("foreign variable")].value
    }

    pub fn is_dynamic_factor(&self, v: Var) -> bool {
        self.nodes[v.index].dynamic_factor
    }

    /// Returns an identity view of `v` flagged as a dynamic factor.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let a = self.check(v)?;
        let value = self.nodes[a].value.clone();
        let out = self.push(value, Op::Identity(a));
        self.nodes[out.index].dynamic_factor = true;
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[ia].value.add(&self.nodes[ib].value)?;
        Ok(self.push(v, Op::Add(ia, ib)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[ia].value.sub(&self.nodes[ib].value)?;
        Ok(self.push(v, Op::Sub(ia, ib)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[ia].value.mul(&self.nodes[ib].value)?;
        Ok(self.push(v, Op::Mul(ia, ib)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[ia].value.div(&self.nodes[ib].value)?;
        Ok(self.push(v, Op::Div(ia, ib)))
    }

    pub fn scale(&mut self, a: Var, factor: f32) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.scale(factor)?;
        Ok(self.push(v, Op::Scale(ia, factor)))
    }

    pub fn reshape(&mut self, a: Var, dims: impl Into<Vec<usize>>) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.reshape(dims)?;
        Ok(self.push(v, Op::Reshape(ia)))
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.permute(perm)?;
        Ok(self.push(v, Op::Permute(ia, perm.to_vec())))
    }

    /// Sum over `dims`, keeping them with extent 1.
    pub fn sum(&mut self, a: Var, dims: &[usize]) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.reduce(dims, ReduceKind::Sum)?;
        Ok(self.push(v, Op::Sum(ia)))
    }

    /// Mean over `dims`, keeping them with extent 1.
    pub fn mean(&mut self, a: Var, dims: &[usize]) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.reduce(dims, ReduceKind::Mean)?;
        Ok(self.push(v, Op::Mean(ia, dims.to_vec())))
    }

    pub fn bmm(&mut self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[ia].value.bmm(&self.nodes[ib].value, trans_a, trans_b)?;
        Ok(self.push(v, Op::Bmm(ia, ib, trans_a, trans_b)))
    }

    /// `[N, C, H, W] -> [N, C*k*k, P]` patch columns.
    pub fn im2col(&mut self, x: Var, kernel: usize, stride: usize, padding: usize) -> Result<Var> {
        let ix = self.check(x)?;
        let v = self.nodes[ix].value.im2col_batch(kernel, stride, padding)?;
        Ok(self.push(
            v,
            Op::Im2col {
                x: ix,
                kernel,
                stride,
                padding,
            },
        ))
    }

    /// Elementwise maximum; ties select `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.shape() != vb.shape() {
            return Err(Error::shape("maximum", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let v = va.zip("maximum", vb, |x, y| if x >= y { x } else { y })?;
        Ok(self.push(v, Op::Maximum(ia, ib)))
    }

    /// 2x2 max pooling with stride 2 over the last two axes of `[N, C, H, W]`.
    /// Ties select the first element in row-major window order.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let ix = self.check(x)?;
        let t = &self.nodes[ix].value;
        if t.rank() != 4 {
            return Err(Error::shape("max_pool2", format!("{:?}", t.shape())));
        }
        let d = t.dims();
        let (n, c, h, w) = (d[0], d[1], d[2], d[3]);
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::shape("max_pool2", format!("{:?} too small", t.shape())));
        }
        let data = t.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + 2 * i * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * i + di) * w + 2 * j + dj;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best as u32);
                }
            }
        }
        let v = Tensor::new(vec![n, c, oh, ow], out)?;
        Ok(self.push(v, Op::MaxPool2 { x: ix, argmax }))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let t = &self.nodes[ia].value;
        let last = *t.dims().last().unwrap();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(last.max(1)) {
            let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let mut s = 0.0f64;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v as f64;
            }
            for v in row.iter_mut() {
                *v = (*v as f64 / s) as f32;
            }
        }
        let v = Tensor::new(t.dims().to_vec(), out)?;
        Ok(self.push(v, Op::Softmax(ia)))
    }

    /// Euclidean norm along `dim` (kept with extent 1). The gradient at a
    /// zero norm is defined as zero.
    pub fn col_norm(&mut self, a: Var, dim: usize) -> Result<Var> {
        let ia = self.check(a)?;
        let t = &self.nodes[ia].value;
        let v = t.mul(t)?.reduce(&[dim], ReduceKind::Sum)?.map("col_norm", f32::sqrt)?;
        Ok(self.push(v, Op::ColNorm(ia)))
    }

    /// `1 / sqrt(a + eps)`.
    pub fn rsqrt_eps(&mut self, a: Var, eps: f32) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.map("rsqrt_eps", |x| 1.0 / (x + eps).sqrt())?;
        Ok(self.push(v, Op::RsqrtEps(ia)))
    }

    /// `|lin / norm|^exponent`, broadcasting `norm` against `lin`, with the
    /// cosine clamped to `[-1, 1]` and defined as 0 where `norm == 0`.
    /// The result is flagged as a dynamic factor.
    pub fn cos_scale(&mut self, lin: Var, norm: Var, exponent: f32) -> Result<Var> {
        let (il, inorm) = (self.check(lin)?, self.check(norm)?);
        if exponent < 0.0 {
            return Err(Error::InvalidArgument(format!("cos_scale exponent {exponent} < 0")));
        }
        let v = self.nodes[il]
            .value
            .zip("cos_scale", &self.nodes[inorm].value, |l, n| {
                cos_pow(cosine(l, n), exponent)
            })?;
        let out = self.push(
            v,
            Op::CosScale {
                lin: il,
                norm: inorm,
                exponent,
            },
        );
        self.nodes[out.index].dynamic_factor = true;
        Ok(out)
    }

    /// Backpropagates from a single-element output.
    pub fn backward(&self, output: Var, mode: BackwardMode) -> Result<Gradients> {
        let io = self.check(output)?;
        if self.nodes[io].value.numel() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar output, got {:?}; use backward_with_seed",
                self.nodes[io].value.shape()
            )));
        }
        let seed = Tensor::ones(self.nodes[io].value.dims().to_vec());
        self.backward_with_seed(output, seed, mode)
    }

    /// Backpropagates `seed` (shaped like `output`), i.e. differentiates the
    /// weighted sum `<seed, output>`.
    pub fn backward_with_seed(&self, output: Var, seed: Tensor, mode: BackwardMode) -> Result<Gradients> {
        let io = self.check(output)?;
        if seed.shape() != self.nodes[io].value.shape() {
            return Err(Error::shape(
                "backward",
                format!("seed {:?} vs output {:?}", seed.shape(), self.nodes[io].value.shape()),
            ));
        }
        let blocked = |i: usize| mode == BackwardMode::DynamicLinear && self.nodes[i].dynamic_factor;

        // nodes on a gradient-carrying path from the output
        let mut live = vec![false; io + 1];
        live[io] = self.nodes[io].requires_grad && !blocked(io);
        for i in (0..=io).rev() {
            if !live[i] {
                continue;
            }
            for p in self.nodes[i].op.parents() {
                if p >= i {
                    return Err(Error::Graph(format!("cycle through node {i}")));
                }
                if self.nodes[p].requires_grad && !blocked(p) {
                    live[p] = true;
                }
            }
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; io + 1];
        if live[io] {
            grads[io] = Some(seed);
        }
        for i in (0..=io).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            for (p, gp) in self.local_grads(i, &g, &live)? {
                grads[p] = Some(match grads[p].take() {
                    Some(acc) => acc.add(&gp)?,
                    None => gp,
                });
            }
        }
        Ok(Gradients {
            graph: self.id,
            live: live.iter().enumerate().filter(|(_, &l)| l).map(|(i, _)| i).collect(),
            grads,
        })
    }

    /// Gradient contributions from node `i` to each live parent.
    fn local_grads(&self, i: usize, g: &Tensor, live: &[bool]) -> Result<Vec<(usize, Tensor)>> {
        let val = |j: usize| &self.nodes[j].value;
        let shape = |j: usize| self.nodes[j].value.shape();
        let mut out = Vec::with_capacity(2);
        let mut emit = |p: usize, f: &mut dyn FnMut() -> Result<Tensor>| -> Result<()> {
            if live[p] {
                out.push((p, f()?));
            }
            Ok(())
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Identity(a) => emit(*a, &mut || Ok(g.clone()))?,
            Op::Add(a, b) => {
                emit(*a, &mut || g.sum_to(shape(*a)))?;
                emit(*b, &mut || g.sum_to(shape(*b)))?;
            }
            Op::Sub(a, b) => {
                emit(*a, &mut || g.sum_to(shape(*a)))?;
                emit(*b, &mut || g.scale(-1.0)?.sum_to(shape(*b)))?;
            }
            Op::Mul(a, b) => {
                emit(*a, &mut || g.mul(val(*b))?.sum_to(shape(*a)))?;
                emit(*b, &mut || g.mul(val(*a))?.sum_to(shape(*b)))?;
            }
            Op::Div(a, b) => {
                emit(*a, &mut || g.div(val(*b))?.sum_to(shape(*a)))?;
                emit(*b, &mut || {
                    let y = &self.nodes[i].value;
                    g.mul(y)?.div(val(*b))?.scale(-1.0)?.sum_to(shape(*b))
                })?;
            }
            Op::Scale(a, f) => emit(*a, &mut || g.scale(*f))?,
            Op::Reshape(a) => emit(*a, &mut || g.reshape(shape(*a).dims().to_vec()))?,
            Op::Permute(a, perm) => {
                let mut inv = vec![0; perm.len()];
                for (k, &p) in perm.iter().enumerate() {
                    inv[p] = k;
                }
                emit(*a, &mut || g.permute(&inv))?;
            }
            Op::Sum(a) => emit(*a, &mut || broadcast_to(g, shape(*a)))?,
            Op::Mean(a, dims) => {
                let count: usize = dims.iter().map(|&d| shape(*a).dims()[d]).product();
                emit(*a, &mut || broadcast_to(g, shape(*a))?.scale(1.0 / count as f32))?;
            }
            Op::Bmm(a, b, ta, tb) => {
                let (ta, tb) = (*ta, *tb);
                emit(*a, &mut || {
                    let d = if ta {
                        val(*b).bmm(g, tb, true)?
                    } else {
                        g.bmm(val(*b), false, !tb)?
                    };
                    d.sum_to(shape(*a))
                })?;
                emit(*b, &mut || {
                    let d = if tb {
                        g.bmm(val(*a), true, ta)?
                    } else {
                        val(*a).bmm(g, !ta, false)?
                    };
                    d.sum_to(shape(*b))
                })?;
            }
            Op::Im2col {
                x,
                kernel,
                stride,
                padding,
            } => {
                let d = shape(*x).dims().to_vec();
                emit(*x, &mut || g.col2im_batch(d[1], d[2], d[3], *kernel, *stride, *padding))?;
            }
            Op::Maximum(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                emit(*a, &mut || select(g, va, vb, true))?;
                emit(*b, &mut || select(g, va, vb, false))?;
            }
            Op::MaxPool2 { x, argmax } => emit(*x, &mut || {
                let mut d = vec![0.0f32; shape(*x).numel()];
                for (gv, &idx) in g.data().iter().zip(argmax) {
                    d[idx as usize] += gv;
                }
                Tensor::new(shape(*x).dims().to_vec(), d)
            })?,
            Op::Softmax(a) => emit(*a, &mut || {
                let y = &self.nodes[i].value;
                let last = *y.dims().last().unwrap();
                let mut d = vec![0.0f32; y.numel()];
                for ((dr, yr), gr) in d
                    .chunks_mut(last)
                    .zip(y.data().chunks(last))
                    .zip(g.data().chunks(last))
                {
                    let s: f64 = yr.iter().zip(gr).map(|(&y, &g)| y as f64 * g as f64).sum();
                    for ((dv, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *dv = (yv as f64 * (gv as f64 - s)) as f32;
                    }
                }
                Tensor::new(y.dims().to_vec(), d)
            })?,
            Op::ColNorm(a) => emit(*a, &mut || {
                let n = &self.nodes[i].value;
                let scaled = g.zip("col_norm_grad", n, |gv, nv| if nv > 0.0 { gv / nv } else { 0.0 })?;
                val(*a).mul(&scaled)
            })?,
            Op::RsqrtEps(a) => emit(*a, &mut || {
                let y = &self.nodes[i].value;
                g.zip("rsqrt_grad", y, |gv, yv| -0.5 * gv * yv * yv * yv)
            })?,
            Op::CosScale {
                lin,
                norm,
                exponent,
            } => {
                let e = *exponent;
                let (vl, vn) = (val(*lin), val(*norm));
                // ds/dc for every output element
                let dsdc = vl.zip("cos_scale_grad", vn, |l, n| {
                    let c = cosine(l, n);
                    if e == 0.0 || c == 0.0 || n == 0.0 {
                        0.0
                    } else {
                        e * c.abs().powf(e - 1.0) * c.signum()
                    }
                })?;
                let gc = g.mul(&dsdc)?;
                emit(*lin, &mut || gc.zip("cos_scale_grad", vn, |gv, n| if n > 0.0 { gv / n } else { 0.0 }))?;
                emit(*norm, &mut || {
                    // dc/dn = -c / n
                    let cn = vl.zip("cos_scale_grad", vn, |l, n| {
                        if n > 0.0 {
                            -cosine(l, n) / n
                        } else {
                            0.0
                        }
                    })?;
                    gc.mul(&cn)?.sum_to(shape(*norm))
                })?;
            }
        }
        Ok(out)
    }
}

fn cosine(lin: f32, norm: f32) -> f32 {
    if norm > 0.0 {
        (lin / norm).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

fn cos_pow(c: f32, exponent: f32) -> f32 {
    if exponent == 0.0 {
        1.0
    } else {
        c.abs().powf(exponent)
    }
}

fn broadcast_to(g: &Tensor, shape: &Shape) -> Result<Tensor> {
    Tensor::zeros(shape.dims().to_vec()).add(g)
}

fn select(g: &Tensor, a: &Tensor, b: &Tensor, first: bool) -> Result<Tensor> {
    let data = g
        .data()
        .iter()
        .zip(a.data().iter().zip(b.data()))
        .map(|(&gv, (&x, &y))| if (x >= y) == first { gv } else { 0.0 })
        .collect();
    Tensor::new(g.dims().to_vec(), data)
}

/// Result of a backward pass: accumulated gradients of the leaves.
pub struct Gradients {
    graph: u64,
    live: Vec<usize>,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf, or `None` if no gradient reached it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.graph != self.graph {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf that must be reachable from the output.
    pub fn wrt(&self, v: Var) -> Result<&Tensor> {
        if v.graph != self.graph {
            return Err(Error::Graph("variable from a different graph".into()));
        }
        self.get(v)
            .ok_or_else(|| Error::Graph(format!("node {} is not reachable from the output", v.index)))
    }

    /// Number of nodes that carried gradient during the pass.
    pub fn live_nodes(&self) -> usize {
        self.live.len()
    }
}

/// Compares a gradient `ad` against central finite differences of `f`.
/// Returns `max_i |ad_i - fd_i| / max(1, |fd_i|)`.
///
/// The realised step `(x + h) - (x - h)` is used as the denominator, which
/// removes the input-side rounding of the perturbation. `f` may evaluate in
/// higher precision than the tensors themselves.
pub fn finite_difference_check<F>(f: F, ad: &Tensor, x: &Tensor, h: f32) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step {h} must be > 0")));
    }
    if ad.shape() != x.shape() {
        return Err(Error::shape("finite_difference_check", format!("{:?} vs {:?}", ad.shape(), x.shape())));
    }
    let mut worst = 0.0f64;
    let mut data = x.data().to_vec();
    for i in 0..data.len() {
        let orig = data[i];
        let (hi, lo) = (orig + h, orig - h);
        data[i] = hi;
        let fp = f(&Tensor::new(x.dims().to_vec(), data.clone())?)?;
        data[i] = lo;
        let fm = f(&Tensor::new(x.dims().to_vec(), data.clone())?)?;
        data[i] = orig;
        let fd = (fp - fm) / (hi as f64 - lo as f64);
        if !fd.is_finite() {
            return Err(Error::NonFinite { op: "finite_difference_check" });
        }
        let err = (ad.data()[i] as f64 - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// [`finite_difference_check`] of a scalar graph function, using its own
/// training-mode gradient and forward values.
pub fn check_graph_gradient<F>(f: F, x: &Tensor, h: f32) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.variable(x.clone());
    let y = f(&mut g, xv)?;
    let grads = g.backward(y, BackwardMode::Training)?;
    let ad = grads.get(xv).cloned().unwrap_or_else(|| Tensor::zeros(x.dims().to_vec()));
    let eval = |t: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(t.clone());
        let y = f(&mut g, v)?;
        Ok(g.value(y).item()? as f64)
    };
    finite_difference_check(eval, &ad, x, h)
}

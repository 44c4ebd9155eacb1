//! Dense row-major `f32` tensors and the kernels the rest of the crate is
//! built on.
//!
//! Every public operation returns a fresh tensor and checks that all
//! produced values are finite. Reductions accumulate in `f64` and always
//! visit elements in the same order, so results are bit-reproducible.

use std::fmt;

use crate::error::{Error, Result};

/// Extents of a tensor, outermost first.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::shape("shape", "rank must be at least 1"));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    /// Trailing-aligned broadcast of two shapes. The shorter shape is
    /// left-padded with ones; each aligned pair must be equal or contain a 1.
    pub fn broadcast(a: &Shape, b: &Shape) -> Result<Shape> {
        let rank = a.rank().max(b.rank());
        let mut out = Vec::with_capacity(rank);
        for i in 0..rank {
            let da = dim_from_back(&a.0, rank - 1 - i);
            let db = dim_from_back(&b.0, rank - 1 - i);
            let d = match (da, db) {
                (x, y) if x == y => x,
                (1, y) => y,
                (x, 1) => x,
                _ => {
                    return Err(Error::shape(
                        "broadcast",
                        format!("{:?} vs {:?}", a.0, b.0),
                    ))
                }
            };
            out.push(d);
        }
        Ok(Shape(out))
    }
}

fn dim_from_back(dims: &[usize], from_back: usize) -> usize {
    if from_back < dims.len() {
        dims[dims.len() - 1 - from_back]
    } else {
        1
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&Shape> for Vec<usize> {
    fn from(s: &Shape) -> Self {
        s.0.clone()
    }
}

/// Reduction kinds supported by [`Tensor::reduce`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    /// Biased (population) variance.
    Var,
    Max,
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?}{:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?}[{} values]", self.shape, self.data.len())
        }
    }
}

fn check_finite(op: &'static str, data: &[f32]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

impl Tensor {
    pub fn new(dims: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, shape.numel(), data.len()),
            ));
        }
        check_finite("tensor", &data)?;
        Ok(Tensor { shape, data })
    }

    /// Internal constructor for kernels that have already established the
    /// element count; still rejects non-finite values.
    fn from_op(op: &'static str, shape: Shape, data: Vec<f32>) -> Result<Self> {
        debug_assert_eq!(shape.numel(), data.len());
        check_finite(op, &data)?;
        Ok(Tensor { shape, data })
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Self {
        Self::full(dims, 0.0)
    }

    pub fn ones(dims: impl Into<Vec<usize>>) -> Self {
        Self::full(dims, 1.0)
    }

    /// Panics if `dims` is empty or `value` is not finite.
    pub fn full(dims: impl Into<Vec<usize>>, value: f32) -> Self {
        let shape = Shape::new(dims).expect("rank >= 1");
        assert!(value.is_finite(), "fill value must be finite");
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self::full(vec![1], value)
    }

    pub fn from_fn(dims: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> f32) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = (0..shape.numel()).map(&mut f).collect();
        Self::from_op("from_fn", shape, data)
    }

    /// Identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> Option<f32> {
        if index.len() != self.rank() {
            return None;
        }
        let mut off = 0;
        for ((&i, &d), s) in index.iter().zip(self.dims()).zip(self.shape.strides()) {
            if i >= d {
                return None;
            }
            off += i * s;
        }
        Some(self.data[off])
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::shape("item", format!("{:?} is not a scalar", self.shape)))
        }
    }

    pub fn reshape(&self, dims: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {:?}", self.shape, shape),
            ));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn map(&self, op: &'static str, f: impl Fn(f32) -> f32) -> Result<Tensor> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Self::from_op(op, self.shape.clone(), data)
    }

    pub fn scale(&self, factor: f32) -> Result<Tensor> {
        self.map("scale", |v| v * factor)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip("sub", other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip("mul", other, |a, b| a * b)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.zip("div", other, |a, b| a / b)
    }

    /// Broadcasting elementwise combination.
    pub fn zip(&self, op: &'static str, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Self::from_op(op, self.shape.clone(), data);
        }
        let out = Shape::broadcast(&self.shape, &other.shape)
            .map_err(|_| Error::shape(op, format!("{:?} vs {:?}", self.shape, other.shape)))?;
        let sa = broadcast_strides(&self.shape, &out);
        let sb = broadcast_strides(&other.shape, &out);
        let mut data = Vec::with_capacity(out.numel());
        for_each_inner(out.dims(), &[&sa, &sb], |offs, len, inner| {
            let (oa, ob) = (offs[0], offs[1]);
            let (ia, ib) = (inner[0], inner[1]);
            for i in 0..len {
                data.push(f(self.data[oa + i * ia], other.data[ob + i * ib]));
            }
        });
        Self::from_op(op, out, data)
    }

    pub fn sum_all(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.numel() != other.numel() {
            return Err(Error::shape(
                "dot",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Index of the largest element (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    /// Standard matrix product of `[m, k] x [k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.dims()[1] != other.dims()[0] {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape, other.shape),
            ));
        }
        let (m, k, n) = (self.dims()[0], self.dims()[1], other.dims()[1]);
        let mut out = vec![0.0f32; m * n];
        gemm(m, k, n, &self.data, (k, 1), &other.data, (n, 1), &mut out);
        Self::from_op("matmul", Shape(vec![m, n]), out)
    }

    /// Batched matrix product of rank-3 tensors. A batch extent of 1 on
    /// either side broadcasts. `trans_a`/`trans_b` transpose the last two
    /// axes of the respective operand.
    pub fn bmm(&self, other: &Tensor, trans_a: bool, trans_b: bool) -> Result<Tensor> {
        let err = || {
            Error::shape(
                "bmm",
                format!(
                    "{:?}{} x {:?}{}",
                    self.shape,
                    if trans_a { "^T" } else { "" },
                    other.shape,
                    if trans_b { "^T" } else { "" }
                ),
            )
        };
        if self.rank() != 3 || other.rank() != 3 {
            return Err(err());
        }
        let (ba, a0, a1) = (self.dims()[0], self.dims()[1], self.dims()[2]);
        let (bb, b0, b1) = (other.dims()[0], other.dims()[1], other.dims()[2]);
        let (m, ka) = if trans_a { (a1, a0) } else { (a0, a1) };
        let (kb, n) = if trans_b { (b1, b0) } else { (b0, b1) };
        if ka != kb || !(ba == bb || ba == 1 || bb == 1) {
            return Err(err());
        }
        let batch = ba.max(bb);
        let sa = if trans_a { (1, a1) } else { (a1, 1) };
        let sb = if trans_b { (1, b1) } else { (b1, 1) };
        let mut out = vec![0.0f32; batch * m * n];
        for i in 0..batch {
            let ai = if ba == 1 { 0 } else { i };
            let bi = if bb == 1 { 0 } else { i };
            gemm(
                m,
                ka,
                n,
                &self.data[ai * a0 * a1..(ai + 1) * a0 * a1],
                sa,
                &other.data[bi * b0 * b1..(bi + 1) * b0 * b1],
                sb,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        Self::from_op("bmm", Shape(vec![batch, m, n]), out)
    }

    /// Unfolds a `[C, H, W]` image into `[C*k*k, P]` patch columns with zero
    /// padding, `P = out_h * out_w`.
    pub fn im2col(&self, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(Error::shape("im2col", format!("expected [C,H,W], got {:?}", self.shape)));
        }
        let batched = self.reshape([&[1], self.dims()].concat())?;
        let cols = batched.im2col_batch(kernel, stride, padding)?;
        let d = cols.dims().to_vec();
        cols.reshape(vec![d[1], d[2]])
    }

    /// Batched [`Tensor::im2col`]: `[N, C, H, W] -> [N, C*k*k, P]`.
    pub fn im2col_batch(&self, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
        if self.rank() != 4 {
            return Err(Error::shape("im2col", format!("expected [N,C,H,W], got {:?}", self.shape)));
        }
        let (n, c, h, w) = (self.dims()[0], self.dims()[1], self.dims()[2], self.dims()[3]);
        let geo = ConvGeometry::new(h, w, kernel, stride, padding)?;
        let k = geo.kernel;
        let rows = c * k * k;
        let p = geo.out_h * geo.out_w;
        let mut out = vec![0.0f32; n * rows * p];
        for b in 0..n {
            let img = &self.data[b * c * h * w..(b + 1) * c * h * w];
            let dst = &mut out[b * rows * p..(b + 1) * rows * p];
            for ch in 0..c {
                for ki in 0..k {
                    for kj in 0..k {
                        let row = (ch * k + ki) * k + kj;
                        let drow = &mut dst[row * p..(row + 1) * p];
                        for oh in 0..geo.out_h {
                            let ih = (oh * stride + ki) as isize - padding as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let src = &img[(ch * h + ih as usize) * w..(ch * h + ih as usize + 1) * w];
                            for ow in 0..geo.out_w {
                                let iw = (ow * stride + kj) as isize - padding as isize;
                                if iw >= 0 && iw < w as isize {
                                    drow[oh * geo.out_w + ow] = src[iw as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        Self::from_op("im2col", Shape(vec![n, rows, p]), out)
    }

    /// Adjoint of [`Tensor::im2col_batch`]: scatters `[N, C*k*k, P]` columns
    /// back into `[N, C, H, W]`, summing overlaps.
    pub fn col2im_batch(
        &self,
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor> {
        let geo = ConvGeometry::new(height, width, kernel, stride, padding)?;
        let k = kernel;
        let rows = channels * k * k;
        let p = geo.out_h * geo.out_w;
        if self.rank() != 3 || self.dims()[1] != rows || self.dims()[2] != p {
            return Err(Error::shape("col2im", format!("{:?}", self.shape)));
        }
        let n = self.dims()[0];
        let (h, w) = (height, width);
        let mut out = vec![0.0f32; n * channels * h * w];
        for b in 0..n {
            let src = &self.data[b * rows * p..(b + 1) * rows * p];
            let img = &mut out[b * channels * h * w..(b + 1) * channels * h * w];
            for ch in 0..channels {
                for ki in 0..k {
                    for kj in 0..k {
                        let row = (ch * k + ki) * k + kj;
                        let srow = &src[row * p..(row + 1) * p];
                        for oh in 0..geo.out_h {
                            let ih = (oh * stride + ki) as isize - padding as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let base = (ch * h + ih as usize) * w;
                            for ow in 0..geo.out_w {
                                let iw = (ow * stride + kj) as isize - padding as isize;
                                if iw >= 0 && iw < w as isize {
                                    img[base + iw as usize] += srow[oh * geo.out_w + ow];
                                }
                            }
                        }
                    }
                }
            }
        }
        Self::from_op("col2im", Shape(vec![n, channels, h, w]), out)
    }

    /// Reduces over `dims`, keeping them with extent 1.
    pub fn reduce(&self, dims: &[usize], kind: ReduceKind) -> Result<Tensor> {
        let mut reduced = vec![false; self.rank()];
        for &d in dims {
            if d >= self.rank() {
                return Err(Error::shape(
                    "reduce",
                    format!("dim {d} out of range for {:?}", self.shape),
                ));
            }
            if self.dims()[d] == 0 {
                return Err(Error::shape("reduce", format!("dim {d} has extent 0")));
            }
            reduced[d] = true;
        }
        let out_dims: Vec<usize> = self
            .dims()
            .iter()
            .zip(&reduced)
            .map(|(&d, &r)| if r { 1 } else { d })
            .collect();
        let out_shape = Shape(out_dims);
        let count: usize = dims.iter().map(|&d| self.dims()[d]).product::<usize>().max(1);
        // strides of the output expressed over the input index space
        let out_strides = out_shape.strides();
        let mapped: Vec<usize> = out_strides
            .iter()
            .zip(&reduced)
            .map(|(&s, &r)| if r { 0 } else { s })
            .collect();
        let in_strides = self.shape.strides();
        let n_out = out_shape.numel();

        let accumulate = |acc: &mut Vec<f64>, f: &dyn Fn(f64, f32, usize) -> f64| {
            for_each_inner(self.dims(), &[&in_strides, &mapped], |offs, len, inner| {
                let (oi, oo) = (offs[0], offs[1]);
                let (ii, io) = (inner[0], inner[1]);
                for i in 0..len {
                    let o = oo + i * io;
                    acc[o] = f(acc[o], self.data[oi + i * ii], o);
                }
            });
        };

        let values: Vec<f64> = match kind {
            ReduceKind::Sum | ReduceKind::Mean => {
                let mut acc = vec![0.0f64; n_out];
                accumulate(&mut acc, &|a, v, _| a + v as f64);
                if kind == ReduceKind::Mean {
                    acc.iter_mut().for_each(|a| *a /= count as f64);
                }
                acc
            }
            ReduceKind::Max => {
                let mut acc = vec![f64::NEG_INFINITY; n_out];
                accumulate(&mut acc, &|a, v, _| a.max(v as f64));
                acc
            }
            ReduceKind::Var => {
                let mut mean = vec![0.0f64; n_out];
                accumulate(&mut mean, &|a, v, _| a + v as f64);
                mean.iter_mut().for_each(|a| *a /= count as f64);
                let mut acc = vec![0.0f64; n_out];
                accumulate(&mut acc, &|a, v, o| {
                    let d = v as f64 - mean[o];
                    a + d * d
                });
                acc.iter_mut().for_each(|a| *a /= count as f64);
                acc
            }
        };
        Self::from_op("reduce", out_shape, values.into_iter().map(|v| v as f32).collect())
    }

    /// Sums a broadcast result back down to `target` (the inverse of
    /// broadcasting, used by backward rules).
    pub fn sum_to(&self, target: &Shape) -> Result<Tensor> {
        if &self.shape == target {
            return Ok(self.clone());
        }
        let rank = self.rank();
        if target.rank() > rank {
            return Err(Error::shape("sum_to", format!("{:?} -> {:?}", self.shape, target)));
        }
        let pad = rank - target.rank();
        let mut dims = Vec::new();
        for i in 0..rank {
            let t = if i < pad { 1 } else { target.dims()[i - pad] };
            if t == 1 && self.dims()[i] != 1 {
                dims.push(i);
            } else if t != self.dims()[i] {
                return Err(Error::shape("sum_to", format!("{:?} -> {:?}", self.shape, target)));
            }
        }
        let r = if dims.is_empty() {
            self.clone()
        } else {
            self.reduce(&dims, ReduceKind::Sum)?
        };
        r.reshape(target.dims().to_vec())
    }

    /// Axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape("permute", format!("{perm:?} for {:?}", self.shape)));
        }
        let in_strides = self.shape.strides();
        let out_dims: Vec<usize> = perm.iter().map(|&p| self.dims()[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let mut data = Vec::with_capacity(self.numel());
        for_each_inner(&out_dims, &[&src_strides], |offs, len, inner| {
            for i in 0..len {
                data.push(self.data[offs[0] + i * inner[0]]);
            }
        });
        Self::from_op("permute", Shape(out_dims), data)
    }
}

/// Output geometry of a 2-D sliding window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(h: usize, w: usize, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel ({kernel}) and stride ({stride}) must be >= 1"
            )));
        }
        let span_h = h + 2 * padding;
        let span_w = w + 2 * padding;
        if span_h < kernel || span_w < kernel {
            return Err(Error::shape(
                "conv",
                format!("kernel {kernel} larger than padded input {span_h}x{span_w}"),
            ));
        }
        let out_h = (span_h - kernel) / stride + 1;
        let out_w = (span_w - kernel) / stride + 1;
        Ok(ConvGeometry {
            kernel,
            stride,
            padding,
            out_h,
            out_w,
        })
    }
}

/// Strides of `shape` when viewed as broadcast to `out` (0 on broadcast axes).
fn broadcast_strides(shape: &Shape, out: &Shape) -> Vec<usize> {
    let strides = shape.strides();
    let pad = out.rank() - shape.rank();
    (0..out.rank())
        .map(|i| {
            if i < pad || shape.dims()[i - pad] == 1 {
                0
            } else {
                strides[i - pad]
            }
        })
        .collect()
}

/// Walks every index of `dims` in row-major order, calling `f` once per
/// run of the innermost axis with the starting offset for each stride set,
/// the run length, and the innermost stride of each set.
fn for_each_inner(dims: &[usize], strides: &[&[usize]], mut f: impl FnMut(&[usize], usize, &[usize])) {
    if dims.contains(&0) {
        return;
    }
    let rank = dims.len();
    let k = strides.len();
    let inner_len = dims[rank - 1];
    let inner: Vec<usize> = strides.iter().map(|s| s[rank - 1]).collect();
    let mut idx = vec![0usize; rank.saturating_sub(1)];
    let mut offs = vec![0usize; k];
    loop {
        f(&offs, inner_len, &inner);
        // odometer over the outer axes
        let mut axis = rank - 1;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            for (o, s) in offs.iter_mut().zip(strides) {
                *o += s[axis];
            }
            if idx[axis] < dims[axis] {
                break;
            }
            for (o, s) in offs.iter_mut().zip(strides) {
                *o -= s[axis] * dims[axis];
            }
            idx[axis] = 0;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index sgemm touches for the
    // given dimensions and strides; `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

//! B-cos units: `out = (w_hat . x) * |cos(x, w_hat)|^(B-1) * gamma`.

use rand_chacha::ChaCha8Rng;

use super::{unit_rows, BuildCtx, ForwardCtx, HeadOrder, Layer, LayerArgs};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{ConvGeometry, Tensor};

/// Weights of a bank of B-cos units. Rows of `weight` are normalised in the
/// forward pass, so the stored scale is irrelevant.
#[derive(Clone, Debug, PartialEq)]
pub struct BcosParams {
    pub weight: Tensor,
    pub b: f32,
    pub gamma: f32,
}

impl BcosParams {
    pub fn new(weight: Tensor, b: f32, gamma: f32) -> Result<Self> {
        check_b(b)?;
        if weight.rank() != 2 {
            return Err(Error::shape("bcos", format!("weight must be [out, in], got {:?}", weight.shape())));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma {gamma} must be positive")));
        }
        Ok(BcosParams { weight, b, gamma })
    }

    pub fn random(out: usize, fan_in: usize, b: f32, gamma: f32, rng: &mut ChaCha8Rng) -> Result<Self> {
        Self::new(unit_rows(rng, out, fan_in), b, gamma)
    }

    pub fn out_units(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn fan_in(&self) -> usize {
        self.weight.dims()[1]
    }
}

fn check_b(b: f32) -> Result<()> {
    if !(b >= 1.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("B = {b} must be >= 1")));
    }
    Ok(())
}

/// Rows of `w` scaled to unit norm, shaped `[1, M, K]` for batched products.
fn unit_weight(g: &mut Graph, w: Var) -> Result<Var> {
    let dims = g.value(w).dims().to_vec();
    let n = g.col_norm(w, 1)?;
    let w_hat = g.div(w, n)?;
    g.reshape(w_hat, vec![1, dims[0], dims[1]])
}

/// `lin * |lin / norm|^(B-1) * gamma`, with the cosine factor a dynamic factor.
fn finish(g: &mut Graph, lin: Var, norm: Var, b: f32, gamma: f32) -> Result<Var> {
    let out = if b == 1.0 {
        lin
    } else {
        let s = g.cos_scale(lin, norm, b - 1.0)?;
        g.mul(lin, s)?
    };
    if gamma == 1.0 {
        Ok(out)
    } else {
        g.scale(out, gamma)
    }
}

/// Channel-major columns `[N, K, P]` to `[N, M, P]`.
pub(crate) fn bcos_columns(g: &mut Graph, w: Var, cols: Var, b: f32, gamma: f32) -> Result<Var> {
    let w_hat = unit_weight(g, w)?;
    let lin = g.bmm(w_hat, cols, false, false)?;
    let norm = if b == 1.0 { lin } else { g.col_norm(cols, 1)? };
    finish(g, lin, norm, b, gamma)
}

/// Token rows `[N, T, K]` to `[N, T, M]`.
pub(crate) fn bcos_tokens(g: &mut Graph, w: Var, x: Var, b: f32, gamma: f32) -> Result<Var> {
    let w_hat = unit_weight(g, w)?;
    let lin = g.bmm(x, w_hat, false, true)?;
    let norm = if b == 1.0 { lin } else { g.col_norm(x, 2)? };
    finish(g, lin, norm, b, gamma)
}

/// Units applied to a vector `[in] -> [out]`.
pub fn bcos_forward(x: &Tensor, p: &BcosParams) -> Result<Tensor> {
    if x.rank() != 1 || x.numel() != p.fan_in() {
        return Err(Error::shape("bcos_forward", format!("x {:?} vs weight {:?}", x.shape(), p.weight.shape())));
    }
    check_b(p.b)?;
    let mut g = Graph::new();
    let xv = g.constant(x.reshape(vec![1, 1, x.numel()])?);
    let w = g.constant(p.weight.clone());
    let y = bcos_tokens(&mut g, w, xv, p.b, p.gamma)?;
    g.value(y).reshape(vec![p.out_units()])
}

/// Convolution `[C, H, W] -> [M, H', W']` with the cosine taken per patch.
pub fn bcos_conv_forward(x: &Tensor, p: &BcosParams, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::shape("bcos_conv_forward", format!("{:?}", x.shape())));
    }
    let d = x.dims();
    let geo = ConvGeometry::new(d[1], d[2], kernel, stride, padding)?;
    let mut g = Graph::new();
    let xv = g.constant(x.reshape(vec![1, d[0], d[1], d[2]])?);
    let w = g.constant(p.weight.clone());
    let y = conv_graph(&mut g, w, xv, p.b, p.gamma, kernel, stride, padding)?;
    g.value(y).reshape(vec![p.out_units(), geo.out_h, geo.out_w])
}

/// Elementwise maximum of two unit banks on a vector; ties take `p1`.
pub fn maxout_bcos(x: &Tensor, p1: &BcosParams, p2: &BcosParams) -> Result<Tensor> {
    if p1.weight.shape() != p2.weight.shape() {
        return Err(Error::shape("maxout_bcos", format!("{:?} vs {:?}", p1.weight.shape(), p2.weight.shape())));
    }
    let a = bcos_forward(x, p1)?;
    let b = bcos_forward(x, p2)?;
    a.zip("maxout_bcos", &b, |u, v| if u >= v { u } else { v })
}

#[allow(clippy::too_many_arguments)]
fn conv_graph(
    g: &mut Graph,
    w: Var,
    x: Var,
    b: f32,
    gamma: f32,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Var> {
    let d = g.value(x).dims().to_vec();
    let (n, c, h, wd) = (d[0], d[1], d[2], d[3]);
    let geo = ConvGeometry::new(h, wd, kernel, stride, padding)?;
    let cols = if kernel == 1 && stride == 1 && padding == 0 {
        g.reshape(x, vec![n, c, h * wd])?
    } else {
        g.im2col(x, kernel, stride, padding)?
    };
    let y = bcos_columns(g, w, cols, b, gamma)?;
    let m = g.value(w).dims()[0];
    g.reshape(y, vec![n, m, geo.out_h, geo.out_w])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Conv {
    kernel: usize,
    stride: usize,
    padding: usize,
}

/// Applies a unit bank to whatever the input layout is: patches of an image,
/// each token of a sequence, or a flat vector.
fn apply(g: &mut Graph, w: Var, x: Var, b: f32, gamma: f32, conv: Option<Conv>) -> Result<Var> {
    let rank = g.value(x).rank();
    match (rank, conv) {
        (4, Some(c)) => conv_graph(g, w, x, b, gamma, c.kernel, c.stride, c.padding),
        (3, _) => bcos_tokens(g, w, x, b, gamma),
        (2, _) => {
            let n = g.value(x).dims()[0];
            let d = g.value(x).dims()[1];
            let x3 = g.reshape(x, vec![n, 1, d])?;
            let y = bcos_tokens(g, w, x3, b, gamma)?;
            let m = g.value(w).dims()[0];
            g.reshape(y, vec![n, m])
        }
        _ => Err(Error::shape("bcos", format!("unsupported input {:?}", g.value(x).shape()))),
    }
}

/// Output shape and fan-in for a unit bank of `out` units on `in_shape`.
fn plan(in_shape: &[usize], out: usize, conv: Option<Conv>) -> std::result::Result<(Vec<usize>, usize), String> {
    match (in_shape.len(), conv) {
        (3, Some(c)) => {
            let geo = ConvGeometry::new(in_shape[1], in_shape[2], c.kernel, c.stride, c.padding)
                .map_err(|e| e.to_string())?;
            Ok((vec![out, geo.out_h, geo.out_w], in_shape[0] * c.kernel * c.kernel))
        }
        (3, None) => Err(format!("image input {in_shape:?} needs a convolution")),
        (2, _) => Ok((vec![in_shape[0], out], in_shape[1])),
        (1, _) => Ok((vec![out], in_shape[0])),
        _ => Err(format!("unsupported input shape {in_shape:?}")),
    }
}

fn read_b(args: &LayerArgs) -> std::result::Result<f32, String> {
    let b = args.f32("b", Some(2.0))?;
    if b < 1.0 {
        return Err(format!("B = {b} must be >= 1"));
    }
    Ok(b)
}

fn read_conv(args: &LayerArgs, default_kernel: usize) -> std::result::Result<Conv, String> {
    let kernel = args.usize("k", Some(default_kernel))?;
    Ok(Conv {
        kernel,
        stride: args.usize("s", Some(1))?,
        padding: args.usize("p", Some(kernel / 2))?,
    })
}

#[derive(Debug)]
pub struct BcosConv {
    pub params: BcosParams,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_shape: Vec<usize>,
}

impl Layer for BcosConv {
    fn kind(&self) -> &'static str {
        "bcos_conv"
    }

    fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var> {
        let w = cx.param("weight", &self.params.weight);
        let (b, gamma) = (self.params.b, self.params.gamma);
        conv_graph(cx.graph, w, x, b, gamma, self.kernel, self.stride, self.padding)
    }

    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("weight", &self.params.weight)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("weight", &mut self.params.weight)]
    }
}

pub(super) fn build_conv(args: &LayerArgs, cx: &mut BuildCtx<'_>) -> std::result::Result<Box<dyn Layer>, String> {
    if cx.in_shape.len() != 3 {
        return Err(format!("expects an image [C, H, W], got {:?}", cx.in_shape));
    }
    let out = args.usize("out", None)?;
    let conv = read_conv(args, 3)?;
    let (b, gamma) = (read_b(args)?, args.gamma()?);
    let (out_shape, fan_in) = plan(cx.in_shape, out, Some(conv))?;
    let params = BcosParams::random(out, fan_in, b, gamma, cx.rng).map_err(|e| e.to_string())?;
    Ok(Box::new(BcosConv {
        params,
        kernel: conv.kernel,
        stride: conv.stride,
        padding: conv.padding,
        out_shape,
    }))
}

/// Dense units on a vector, or on every token of a sequence.
#[derive(Debug)]
pub struct BcosLinear {
    pub params: BcosParams,
    out_shape: Vec<usize>,
}

impl Layer for BcosLinear {
    fn kind(&self) -> &'static str {
        "bcos_linear"
    }

    fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var> {
        let w = cx.param("weight", &self.params.weight);
        apply(cx.graph, w, x, self.params.b, self.params.gamma, None)
    }

    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("weight", &self.params.weight)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("weight", &mut self.params.weight)]
    }
}

pub(super) fn build_linear(args: &LayerArgs, cx: &mut BuildCtx<'_>) -> std::result::Result<Box<dyn Layer>, String> {
    let out = args.usize("out", None)?;
    let (b, gamma) = (read_b(args)?, args.gamma()?);
    if cx.in_shape.len() == 3 {
        return Err(format!("expects a vector or tokens, got image {:?}", cx.in_shape));
    }
    let (out_shape, fan_in) = plan(cx.in_shape, out, None)?;
    let params = BcosParams::random(out, fan_in, b, gamma, cx.rng).map_err(|e| e.to_string())?;
    Ok(Box::new(BcosLinear { params, out_shape }))
}

/// Two unit banks per output; the larger response wins, ties to the first.
#[derive(Debug)]
pub struct MaxOutBcos {
    pub first: BcosParams,
    pub second: BcosParams,
    conv: Option<Conv>,
    out_shape: Vec<usize>,
}

impl Layer for MaxOutBcos {
    fn kind(&self) -> &'static str {
        "maxout_bcos"
    }

    fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var> {
        let w1 = cx.param("weight", &self.first.weight);
        let w2 = cx.param("weight2", &self.second.weight);
        let a = apply(cx.graph, w1, x, self.first.b, self.first.gamma, self.conv)?;
        let b = apply(cx.graph, w2, x, self.second.b, self.second.gamma, self.conv)?;
        cx.graph.maximum(a, b)
    }

    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("weight", &self.first.weight), ("weight2", &self.second.weight)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("weight", &mut self.first.weight), ("weight2", &mut self.second.weight)]
    }
}

pub(super) fn build_maxout(args: &LayerArgs, cx: &mut BuildCtx<'_>) -> std::result::Result<Box<dyn Layer>, String> {
    let out = args.usize("out", None)?;
    let conv = if cx.in_shape.len() == 3 {
        Some(read_conv(args, 3)?)
    } else {
        None
    };
    let (b, gamma) = (read_b(args)?, args.gamma()?);
    let (out_shape, fan_in) = plan(cx.in_shape, out, conv)?;
    let first = BcosParams::random(out, fan_in, b, gamma, cx.rng).map_err(|e| e.to_string())?;
    let second = BcosParams::random(out, fan_in, b, gamma, cx.rng).map_err(|e| e.to_string())?;
    Ok(Box::new(MaxOutBcos {
        first,
        second,
        conv,
        out_shape,
    }))
}

/// Final B-cos classifier with global average pooling on either side.
#[derive(Debug)]
pub struct ClassifierHead {
    pub params: BcosParams,
    order: HeadOrder,
    out_shape: Vec<usize>,
}

impl Layer for ClassifierHead {
    fn kind(&self) -> &'static str {
        "classifier_head"
    }

    fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var> {
        let w = cx.param("weight", &self.params.weight);
        let g = &mut *cx.graph;
        let (b, gamma) = (self.params.b, self.params.gamma);
        let d = g.value(x).dims().to_vec();
        let n = d[0];
        let classes = self.out_shape[0];
        // flatten any spatial layout to [N, positions, features]
        let tokens = match d.len() {
            4 => {
                let cols = g.reshape(x, vec![n, d[1], d[2] * d[3]])?;
                g.permute(cols, &[0, 2, 1])?
            }
            3 => x,
            2 => g.reshape(x, vec![n, 1, d[1]])?,
            _ => return Err(Error::shape("classifier_head", format!("{:?}", d))),
        };
        let pooled = match self.order {
            HeadOrder::ClassifyThenPool => {
                let y = bcos_tokens(g, w, tokens, b, gamma)?;
                g.mean(y, &[1])?
            }
            HeadOrder::PoolThenClassify => {
                let p = g.mean(tokens, &[1])?;
                bcos_tokens(g, w, p, b, gamma)?
            }
        };
        g.reshape(pooled, vec![n, classes])
    }

    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("weight", &self.params.weight)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("weight", &mut self.params.weight)]
    }
}

pub(super) fn build_head(args: &LayerArgs, cx: &mut BuildCtx<'_>) -> std::result::Result<Box<dyn Layer>, String> {
    let classes = args.usize("classes", Some(cx.classes))?;
    if classes != cx.classes {
        return Err(format!("{classes} outputs but the model has {} classes", cx.classes));
    }
    let (b, gamma) = (read_b(args)?, args.gamma()?);
    let features = match cx.in_shape.len() {
        1 => cx.in_shape[0],
        2 => cx.in_shape[1],
        3 => cx.in_shape[0],
        _ => return Err(format!("unsupported input shape {:?}", cx.in_shape)),
    };
    let params = BcosParams::random(classes, features, b, gamma, cx.rng).map_err(|e| e.to_string())?;
    Ok(Box::new(ClassifierHead {
        params,
        order: cx.head,
        out_shape: vec![classes],
    }))
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn params(w: &[f32], rows: usize, b: f32) -> BcosParams {
        BcosParams::new(Tensor::new(vec![rows, w.len() / rows], w.to_vec()).unwrap(), b, 1.0).unwrap()
    }

    fn v(x: &[f32]) -> Tensor {
        Tensor::new(vec![x.len()], x.to_vec()).unwrap()
    }

    /// Direct scalar evaluation of one unit.
    fn oracle(x: &[f32], w: &[f32], b: f64, gamma: f64) -> f64 {
        let wn = w.iter().map(|&a| a as f64 * a as f64).sum::<f64>().sqrt();
        let xn = x.iter().map(|&a| a as f64 * a as f64).sum::<f64>().sqrt();
        let lin: f64 = x.iter().zip(w).map(|(&a, &c)| a as f64 * c as f64 / wn).sum();
        if xn == 0.0 {
            return 0.0;
        }
        lin * (lin / xn).abs().powf(b - 1.0) * gamma
    }

    #[test]
    fn collinear_input_reaches_the_bound() {
        for b in [1.0, 1.5, 2.0, 5.0] {
            let y = bcos_forward(&v(&[3.0, 4.0]), &params(&[3.0, 4.0], 1, b)).unwrap();
            assert!((y.data()[0] - 5.0).abs() < 1e-5, "B={b}: {}", y.data()[0]);
        }
    }

    #[test]
    fn orthogonal_input_gives_zero() {
        let y = bcos_forward(&v(&[0.0, 1.0]), &params(&[1.0, 0.0], 1, 2.0)).unwrap();
        assert_eq!(y.data()[0], 0.0);
    }

    #[test]
    fn diagonal_input_b2() {
        let y = bcos_forward(&v(&[1.0, 1.0]), &params(&[2.0, 0.0], 1, 2.0)).unwrap();
        assert!((y.data()[0] - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn b1_is_normalised_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<f32> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f32> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = bcos_forward(&v(&x), &params(&w, 1, 1.0)).unwrap().data()[0];
            let wn = w.iter().map(|a| a * a).sum::<f32>().sqrt();
            let lin: f32 = x.iter().zip(&w).map(|(a, c)| a * c / wn).sum();
            assert!((y - lin).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_input_gives_zero() {
        let y = bcos_forward(&v(&[0.0, 0.0, 0.0]), &params(&[1.0, 2.0, 3.0], 1, 2.5)).unwrap();
        assert_eq!(y.data()[0], 0.0);
    }

    #[test]
    fn b_below_one_is_rejected() {
        assert!(BcosParams::new(Tensor::ones(vec![1, 2]), 0.5, 1.0).is_err());
    }

    #[test]
    fn gamma_scales_output() {
        let mut p = params(&[1.0, 2.0, 0.5, -1.0], 2, 2.0);
        let x = v(&[0.3, 0.9]);
        let base = bcos_forward(&x, &p).unwrap();
        p.gamma = 10.0;
        let scaled = bcos_forward(&x, &p).unwrap();
        assert!(scaled.max_abs_diff(&base.scale(10.0).unwrap()) < 1e-5);
    }

    #[test]
    fn one_by_one_conv_is_per_pixel_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = BcosParams::random(3, 2, 2.0, 1.0, &mut rng).unwrap();
        let x = Tensor::from_fn(vec![2, 3, 3], |_| rng.random_range(-1.0..1.0)).unwrap();
        let y = bcos_conv_forward(&x, &p, 1, 1, 0).unwrap();
        for i in 0..9 {
            let px = v(&[x.data()[i], x.data()[9 + i]]);
            let r = bcos_forward(&px, &p).unwrap();
            for m in 0..3 {
                assert!((y.data()[m * 9 + i] - r.data()[m]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn conv_kernel_equal_to_patch_returns_patch_norm() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut p = params(&[2.0, 4.0, 6.0, 8.0], 1, 2.0);
        p.gamma = 3.0;
        let y = bcos_conv_forward(&x, &p, 2, 1, 0).unwrap();
        assert!((y.data()[0] - 30f32.sqrt() * 3.0).abs() < 1e-5);
    }

    #[test]
    fn conv_matches_column_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::from_fn(vec![2, 5, 5], |_| rng.random_range(-1.0..1.0)).unwrap();
        let p = BcosParams::random(4, 18, 2.0, 1.0, &mut rng).unwrap();
        let y = bcos_conv_forward(&x, &p, 3, 1, 1).unwrap();
        for m in 0..4 {
            let w = &p.weight.data()[m * 18..(m + 1) * 18];
            for oi in 0..5 {
                for oj in 0..5 {
                    let mut patch = Vec::new();
                    for c in 0..2 {
                        for di in 0..3 {
                            for dj in 0..3 {
                                let (i, j) = (oi as isize + di - 1, oj as isize + dj - 1);
                                let inside = (0..5).contains(&i) && (0..5).contains(&j);
                                patch.push(if inside { x.get(&[c, i as usize, j as usize]).unwrap() } else { 0.0 });
                            }
                        }
                    }
                    let want = oracle(&patch, w, 2.0, 1.0);
                    let got = y.get(&[m, oi, oj]).unwrap() as f64;
                    assert!((want - got).abs() < 1e-6, "{want} vs {got}");
                }
            }
        }
    }

    #[test]
    fn maxout_with_negated_branch_is_absolute_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p1 = BcosParams::random(3, 4, 2.0, 1.0, &mut rng).unwrap();
        let p2 = BcosParams::new(p1.weight.scale(-1.0).unwrap(), 2.0, 1.0).unwrap();
        let x = Tensor::from_fn(vec![4], |_| rng.random_range(-1.0..1.0)).unwrap();
        let y = maxout_bcos(&x, &p1, &p2).unwrap();
        let a = bcos_forward(&x, &p1).unwrap();
        for (u, w) in y.data().iter().zip(a.data()) {
            assert!((u - w.abs()).abs() < 1e-6);
        }
    }

    #[test]
    fn maxout_with_orthogonal_branch_is_other_branch() {
        let x = v(&[1.0, 0.0]);
        let p1 = params(&[0.6, 0.8], 1, 2.0);
        let p2 = params(&[0.0, 1.0], 1, 2.0);
        let y = maxout_bcos(&x, &p1, &p2).unwrap();
        assert!((y.data()[0] - 0.36).abs() < 1e-6);
    }

    #[test]
    fn maxout_matches_scalar_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p1 = BcosParams::random(5, 3, 2.0, 1.0, &mut rng).unwrap();
        let p2 = BcosParams::random(5, 3, 2.0, 1.0, &mut rng).unwrap();
        let x = Tensor::from_fn(vec![3], |_| rng.random_range(-1.0..1.0)).unwrap();
        let y = maxout_bcos(&x, &p1, &p2).unwrap();
        for m in 0..5 {
            let a = oracle(x.data(), &p1.weight.data()[m * 3..m * 3 + 3], 2.0, 1.0);
            let b = oracle(x.data(), &p2.weight.data()[m * 3..m * 3 + 3], 2.0, 1.0);
            assert!((y.data()[m] as f64 - a.max(b)).abs() < 1e-6);
        }
    }
}

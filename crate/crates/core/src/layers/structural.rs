//! Input encoding, pooling and residual links.

use super::{BuildCtx, ForwardCtx, Layer, LayerArgs};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `[r, g, b] -> [r, g, b, 1-r, 1-g, 1-b]` on `[3, H, W]` or `[N, 3, H, W]`.
pub fn encode_image(rgb: &Tensor) -> Result<Tensor> {
    let d = rgb.dims();
    let (n, rest) = match d.len() {
        3 => (1, d),
        4 => (d[0], &d[1..]),
        _ => return Err(Error::shape("encode_image", format!("{:?}", rgb.shape()))),
    };
    if rest[0] != 3 {
        return Err(Error::shape("encode_image", format!("expected 3 channels, got {:?}", rgb.shape())));
    }
    if let Some(v) = rgb.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")));
    }
    let plane = 3 * rest[1] * rest[2];
    let mut out = Vec::with_capacity(2 * rgb.numel());
    for s in rgb.data().chunks(plane) {
        out.extend_from_slice(s);
        out.extend(s.iter().map(|v| 1.0 - v));
    }
    let dims = if d.len() == 3 {
        vec![6, rest[1], rest[2]]
    } else {
        vec![n, 6, rest[1], rest[2]]
    };
    Tensor::new(dims, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    /// Mean over all positions; linear.
    AvgGlobal,
    /// 2x2 windows, stride 2; the selector is input dependent.
    Max2x2,
}

impl PoolKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "avg" | "avg_global" => Ok(PoolKind::AvgGlobal),
            "max2" | "max2x2" => Ok(PoolKind::Max2x2),
            _ => Err(Error::Unknown {
                what: "pool kind",
                name: s.to_string(),
            }),
        }
    }
}

fn pool_graph(g: &mut Graph, x: Var, kind: PoolKind) -> Result<Var> {
    let d = g.value(x).dims().to_vec();
    match (kind, d.len()) {
        (PoolKind::AvgGlobal, 4) => {
            let m = g.mean(x, &[2, 3])?;
            g.reshape(m, vec![d[0], d[1]])
        }
        (PoolKind::AvgGlobal, 3) => {
            let m = g.mean(x, &[1])?;
            g.reshape(m, vec![d[0], d[2]])
        }
        (PoolKind::Max2x2, 4) => g.max_pool2(x),
        _ => Err(Error::shape("pool", format!("{kind:?} on {:?}", d))),
    }
}

/// Pools a single `[C, H, W]` map (or `[T, D]` tokens for the average).
pub fn pool(x: &Tensor, kind: PoolKind) -> Result<Tensor> {
    let mut dims = vec![1];
    dims.extend_from_slice(x.dims());
    let mut g = Graph::new();
    let xv = g.constant(x.reshape(dims)?);
    let y = pool_graph(&mut g, xv, kind)?;
    let out = g.value(y);
    out.reshape(out.dims()[1..].to_vec())
}

/// Marks an RGB model input. The encoding itself is applied by the model
/// before recording the graph, so gradients refer to the encoded input.
#[derive(Debug)]
pub struct EncodeInput {
    out_shape: Vec<usize>,
}

impl Layer for EncodeInput {
    fn kind(&self) -> &'static str {
        "encode_input"
    }

    fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, _cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var> {
        Ok(x)
    }
}

pub(super) fn build_encode(_args: &LayerArgs, cx: &mut BuildCtx<'_>) -> std::result::Result<Box<dyn Layer>, String> {
    match cx.in_shape {
        [3, h, w] => Ok(Box::new(EncodeInput {
            out_shape: vec![6, *h, *w],
        })),
        s => Err(format!("expects an RGB image [3, H, W], got {s:?}")),
    }
}

#[derive(Debug)]
pub struct Pool {
    kind: PoolKind,
    out_shape: Vec<usize>,
}

impl Layer for Pool {
    fn kind(&self) -> &'static str {
        "pool"
    }

    fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var> {
        pool_graph(cx.graph, x, self.kind)
    }
}

pub(super) fn build_pool(args: &LayerArgs, cx: &mut BuildCtx<'_>) -> std::result::Result<Box<dyn Layer>, String> {
    let kind = PoolKind::parse(args.raw("kind").unwrap_or("avg")).map_err(|e| e.to_string())?;
    let out_shape = match (kind, cx.in_shape) {
        (PoolKind::AvgGlobal, [c, _, _]) => vec![*c],
        (PoolKind::AvgGlobal, [_, d]) => vec![*d],
        (PoolKind::Max2x2, [c, h, w]) if *h >= 2 && *w >= 2 => vec![*c, h / 2, w / 2],
        (k, s) => return Err(format!("{k:?} pooling cannot take {s:?}")),
    };
    Ok(Box::new(Pool { kind, out_shape }))
}

/// Saves the current activation for a later [`ResidualAdd`].
#[derive(Debug)]
pub struct ResidualBegin {
    out_shape: Vec<usize>,
}

impl Layer for ResidualBegin {
    fn kind(&self) -> &'static str {
        "residual_begin"
    }

    fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var> {
        cx.push_residual(x);
        Ok(x)
    }
}

pub(super) fn build_residual_begin(
    _args: &LayerArgs,
    cx: &mut BuildCtx<'_>,
) -> std::result::Result<Box<dyn Layer>, String> {
    cx.residual.push(cx.in_shape.to_vec());
    Ok(Box::new(ResidualBegin {
        out_shape: cx.in_shape.to_vec(),
    }))
}

/// Adds the activation saved by the matching [`ResidualBegin`].
#[derive(Debug)]
pub struct ResidualAdd {
    out_shape: Vec<usize>,
}

impl Layer for ResidualAdd {
    fn kind(&self) -> &'static str {
        "residual_add"
    }

    fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var> {
        let skip = cx.pop_residual()?;
        cx.graph.add(x, skip)
    }
}

pub(super) fn build_residual_add(
    _args: &LayerArgs,
    cx: &mut BuildCtx<'_>,
) -> std::result::Result<Box<dyn Layer>, String> {
    let saved = cx.residual.pop().ok_or("no open residual_begin")?;
    if saved != cx.in_shape {
        return Err(format!("branch shape {:?} differs from skip shape {saved:?}", cx.in_shape));
    }
    Ok(Box::new(ResidualAdd {
        out_shape: saved,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixel(rgb: [f32; 3]) -> Vec<f32> {
        let x = Tensor::new(vec![3, 1, 1], rgb.to_vec()).unwrap();
        encode_image(&x).unwrap().into_data()
    }

    #[test]
    fn encoding_examples() {
        assert_eq!(pixel([0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(pixel([1.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(pixel([0.5, 0.5, 0.5]), vec![0.5; 6]);
    }

    #[test]
    fn encoding_sums_to_three_per_pixel() {
        let x = Tensor::from_fn(vec![2, 3, 2, 2], |i| (i as f32 * 0.37) % 1.0).unwrap();
        let e = encode_image(&x).unwrap();
        for n in 0..2 {
            for p in 0..4 {
                let s: f32 = (0..6).map(|c| e.data()[n * 24 + c * 4 + p]).sum();
                assert!((s - 3.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn encoding_rejects_out_of_range() {
        let x = Tensor::new(vec![3, 1, 1], vec![0.0, 1.5, 0.0]).unwrap();
        assert!(encode_image(&x).is_err());
        assert!(encode_image(&Tensor::zeros(vec![4, 1, 1])).is_err());
    }

    #[test]
    fn pooling_examples() {
        let c = pool(&Tensor::full(vec![1, 3, 3], 2.5), PoolKind::AvgGlobal).unwrap();
        assert_eq!(c.data(), &[2.5]);
        let m = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pool(&m, PoolKind::Max2x2).unwrap().data(), &[4.0]);
    }
}

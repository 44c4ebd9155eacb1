//! Normalisation without the additive shift.
//!
//! `y = (x - mean) / sqrt(var + eps) * gamma`, where the inverse standard
//! deviation is a dynamic factor. The statistics are taken over a kind
//! dependent set of axes. Batch norm at inference scales by the running
//! variance and does not centre, which keeps the layer free of any bias.

use super::{BuildCtx, ForwardCtx, Layer, LayerArgs};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NORM_EPS: f32 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    Batch,
    Layer,
    Instance,
    Position,
    All,
}

impl NormKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "batch" => NormKind::Batch,
            "layer" => NormKind::Layer,
            "instance" => NormKind::Instance,
            "position" => NormKind::Position,
            "all" => NormKind::All,
            _ => {
                return Err(Error::Unknown {
                    what: "norm kind",
                    name: s.to_string(),
                })
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NormKind::Batch => "batch",
            NormKind::Layer => "layer",
            NormKind::Instance => "instance",
            NormKind::Position => "position",
            NormKind::All => "all",
        }
    }

    pub const ALL: [NormKind; 5] = [
        NormKind::Batch,
        NormKind::Layer,
        NormKind::Instance,
        NormKind::Position,
        NormKind::All,
    ];

    /// Axes of a batched tensor the statistics are taken over.
    ///
    /// Images are `[N, C, H, W]`, token sequences `[N, T, D]` with `D` as the
    /// channel axis, and flat features `[N, D]`.
    pub fn reduce_dims(&self, rank: usize) -> Result<Vec<usize>> {
        let dims = match (rank, self) {
            (4, NormKind::Batch) => vec![0, 2, 3],
            (4, NormKind::Layer) => vec![1, 2, 3],
            (4, NormKind::Instance) => vec![2, 3],
            (4, NormKind::Position) => vec![1],
            (4, NormKind::All) => vec![0, 1, 2, 3],
            (3, NormKind::Batch) => vec![0, 1],
            (3, NormKind::Layer) => vec![1, 2],
            (3, NormKind::Instance) => vec![1],
            (3, NormKind::Position) => vec![2],
            (3, NormKind::All) => vec![0, 1, 2],
            (2, NormKind::Batch) => vec![0],
            (2, NormKind::Layer | NormKind::Position) => vec![1],
            (2, NormKind::All) => vec![0, 1],
            _ => {
                return Err(Error::shape(
                    "norm",
                    format!("{} norm is undefined for rank {rank}", self.as_str()),
                ))
            }
        };
        Ok(dims)
    }
}

fn channel_axis(rank: usize) -> usize {
    if rank == 3 {
        2
    } else {
        1
    }
}

/// Shape that broadcasts a per-channel vector against a batched input.
fn channel_view(rank: usize, channels: usize) -> Vec<usize> {
    let mut v = vec![1; rank];
    v[channel_axis(rank)] = channels;
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormSpec {
    pub kind: NormKind,
    pub gamma: Tensor,
    /// Batch kind only.
    pub running_var: Option<Tensor>,
    pub momentum: f32,
}

impl NormSpec {
    pub fn new(kind: NormKind, channels: usize) -> Self {
        NormSpec {
            kind,
            gamma: Tensor::ones(vec![channels]),
            running_var: (kind == NormKind::Batch).then(|| Tensor::ones(vec![channels])),
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }
}

/// Records the normalisation of `x` on `g`. Returns the output and, for Batch
/// norm in training mode, the updated running variance.
pub(crate) fn norm_graph(
    g: &mut Graph,
    x: Var,
    spec: &NormSpec,
    gamma: Var,
    training: bool,
) -> Result<(Var, Option<Tensor>)> {
    let rank = g.value(x).rank();
    let channels = g.value(x).dims()[channel_axis(rank)];
    if channels != spec.channels() {
        return Err(Error::shape(
            "norm",
            format!("{} channels, gamma has {}", channels, spec.channels()),
        ));
    }
    let view = channel_view(rank, channels);
    let gamma = g.reshape(gamma, view.clone())?;

    if spec.kind == NormKind::Batch && !training {
        let rv = spec
            .running_var
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("batch norm without running variance".into()))?;
        let inv = rv.map("norm", |v| 1.0 / (v + NORM_EPS).sqrt())?.reshape(view)?;
        let inv = g.constant(inv);
        let y = g.mul(x, inv)?;
        return Ok((g.mul(y, gamma)?, None));
    }

    let dims = spec.kind.reduce_dims(rank)?;
    let mean = g.mean(x, &dims)?;
    let centred = g.sub(x, mean)?;
    let sq = g.mul(centred, centred)?;
    let var = g.mean(sq, &dims)?;
    let inv = g.rsqrt_eps(var, NORM_EPS)?;
    let inv = g.detach(inv)?;
    let y = g.mul(centred, inv)?;
    let y = g.mul(y, gamma)?;

    let update = match (&spec.running_var, spec.kind) {
        (Some(rv), NormKind::Batch) if training => {
            let batch_var = g.value(var).reshape(vec![channels])?;
            let m = spec.momentum;
            Some(rv.zip("norm", &batch_var, |r, b| (1.0 - m) * r + m * b)?)
        }
        _ => None,
    };
    Ok((y, update))
}

/// Normalises a batch. `training` selects batch statistics for Batch norm.
pub fn norm_forward(x: &Tensor, spec: &NormSpec, training: bool) -> Result<Tensor> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let gamma = g.constant(spec.gamma.clone());
    let (y, _) = norm_graph(&mut g, xv, spec, gamma, training)?;
    Ok(g.value(y).clone())
}

#[derive(Debug)]
pub struct Norm {
    pub spec: NormSpec,
    out_shape: Vec<usize>,
}

impl Layer for Norm {
    fn kind(&self) -> &'static str {
        "norm"
    }

    fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var> {
        let gamma = cx.param("gamma", &self.spec.gamma);
        let (y, update) = norm_graph(cx.graph, x, &self.spec, gamma, cx.training)?;
        if let Some(rv) = update {
            cx.update("running_var", rv);
        }
        Ok(y)
    }

    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut v = vec![("gamma", &self.spec.gamma)];
        if let Some(rv) = &self.spec.running_var {
            v.push(("running_var", rv));
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut v = vec![("gamma", &mut self.spec.gamma)];
        if let Some(rv) = &mut self.spec.running_var {
            v.push(("running_var", rv));
        }
        v
    }

    fn buffers(&self) -> &'static [&'static str] {
        &["running_var"]
    }

    fn couples_batch(&self, training: bool) -> bool {
        match self.spec.kind {
            NormKind::All => true,
            NormKind::Batch => training,
            _ => false,
        }
    }
}

pub(super) fn build_norm(args: &LayerArgs, cx: &mut BuildCtx<'_>) -> std::result::Result<Box<dyn Layer>, String> {
    let kind = NormKind::parse(args.raw("kind").ok_or("missing `kind`")?).map_err(|e| e.to_string())?;
    let rank = cx.in_shape.len() + 1;
    kind.reduce_dims(rank).map_err(|e| e.to_string())?;
    let channels = cx.in_shape[channel_axis(rank) - 1];
    let mut spec = NormSpec::new(kind, channels);
    spec.momentum = args.f32("momentum", Some(0.1))?;
    if !(0.0..=1.0).contains(&spec.momentum) {
        return Err(format!("momentum {} outside [0, 1]", spec.momentum));
    }
    Ok(Box::new(Norm {
        spec,
        out_shape: cx.in_shape.to_vec(),
    }))
}

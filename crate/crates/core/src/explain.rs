//! Explanations: the input-dependent linear map of a frozen network,
//! contribution maps, colour rendering, bias diagnostics and gradient
//! baselines.

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{BackwardMode, Graph, Var};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{ReduceKind, Tensor};

/// The part of a network an explanation needs: a differentiable record of
/// one forward pass. Implemented by [`Model`]; wrappers can add terms.
pub trait Explainable {
    fn classes(&self) -> usize;

    /// Input encoding applied before the graph.
    fn encode(&self, x: &Tensor) -> Result<Tensor>;

    /// Records inference on an encoded `[N, ...]` batch. `layer` selects an
    /// intermediate output, `None` the logits.
    fn record(&self, g: &mut Graph, x: &Tensor, layer: Option<usize>) -> Result<Recording>;

    /// Whether samples of one batch can be evaluated together.
    fn batchable(&self) -> bool {
        false
    }
}

/// Graph handles returned by [`Explainable::record`].
pub struct Recording {
    pub input: Var,
    pub output: Var,
    /// Learnt additive terms (e.g. positional embeddings) on the graph.
    pub additive: Vec<Var>,
}

impl Explainable for Model {
    fn classes(&self) -> usize {
        Model::classes(self)
    }

    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        Model::encode(self, x)
    }

    fn record(&self, g: &mut Graph, x: &Tensor, layer: Option<usize>) -> Result<Recording> {
        let t = self.trace(g, x, false, false)?;
        let output = match layer {
            None => t.logits,
            Some(l) => *t.layer_outputs.get(l).ok_or_else(|| {
                Error::InvalidNeuron(format!("layer {l} out of range (model has {})", t.layer_outputs.len()))
            })?,
        };
        Ok(Recording {
            input: t.input,
            output,
            additive: t.additive.into_iter().map(|(_, v)| v).collect(),
        })
    }

    fn batchable(&self) -> bool {
        self.batch_independent(false)
    }
}

/// What a row explains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Class(usize),
    Neuron { layer: usize, index: usize },
}

impl Target {
    fn layer(&self) -> Option<usize> {
        match self {
            Target::Class(_) => None,
            Target::Neuron { layer, .. } => Some(*layer),
        }
    }

    fn index(&self) -> usize {
        match self {
            Target::Class(j) | Target::Neuron { index: j, .. } => *j,
        }
    }
}

/// One row of the input-dependent linear map `W(x)`, with the encoded input
/// it was extracted at.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicLinearRow {
    pub row: Tensor,
    pub input: Tensor,
    pub target: Target,
    /// The explained output `f_j(x)`.
    pub output: f64,
    /// `f_j(x) - <row, x>`.
    pub bias_residual: f64,
    /// Contribution of the learnt additive terms, `<W(x) E>_j`.
    pub additive: f64,
}

impl DynamicLinearRow {
    /// `f_j(x) - <row, x> - <W(x) E>_j`, zero for an exact summary.
    pub fn completeness_residual(&self) -> f64 {
        self.bias_residual - self.additive
    }
}

fn one_row_batch(x: &Tensor) -> Result<Tensor> {
    let mut d = vec![1];
    d.extend_from_slice(x.dims());
    x.reshape(d)
}

/// Extracts `[W(x)]_j` for several output-space seeds sharing one forward
/// pass. Each seed is a per-sample output-shaped tensor.
fn extract_seeded(
    model: &dyn Explainable,
    x_encoded: &Tensor,
    target: Target,
    seeds: &[Tensor],
) -> Result<Vec<DynamicLinearRow>> {
    let mut g = Graph::new();
    let rec = model.record(&mut g, &one_row_batch(x_encoded)?, target.layer())?;
    let out = g.value(rec.output).clone();
    let mut rows = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let seed_b = one_row_batch(seed)?;
        if seed_b.dims() != out.dims() {
            return Err(Error::shape("extract_row", format!("seed {:?} vs output {:?}", seed.shape(), out.shape())));
        }
        let grads = g.backward_with_seed(rec.output, seed_b.clone(), BackwardMode::DynamicLinear)?;
        let row = grads.wrt(rec.input)?.reshape(x_encoded.dims().to_vec())?;
        let output = out.dot(&seed_b)?;
        let mut additive = 0.0;
        for &v in &rec.additive {
            if let Some(ge) = grads.get(v) {
                additive += ge.dot(g.value(v))?;
            }
        }
        rows.push(DynamicLinearRow {
            bias_residual: output - row.dot(x_encoded)?,
            row,
            input: x_encoded.clone(),
            target,
            output,
            additive,
        });
    }
    Ok(rows)
}

fn output_numel(model: &dyn Explainable, x_encoded: &Tensor, layer: Option<usize>) -> Result<Vec<usize>> {
    let mut g = Graph::new();
    let rec = model.record(&mut g, &one_row_batch(x_encoded)?, layer)?;
    Ok(g.value(rec.output).dims()[1..].to_vec())
}

fn unit_seed(dims: &[usize], j: usize, what: &Target) -> Result<Tensor> {
    let n: usize = dims.iter().product();
    if j >= n {
        return Err(Error::InvalidNeuron(format!("{what:?}: index {j} but the output has {n} units")));
    }
    Tensor::from_fn(dims.to_vec(), |i| if i == j { 1.0 } else { 0.0 })
}

/// Rows for several targets of the same layer, from one forward pass.
pub fn extract_rows(model: &dyn Explainable, x_encoded: &Tensor, targets: &[Target]) -> Result<Vec<DynamicLinearRow>> {
    let Some(first) = targets.first() else {
        return Ok(Vec::new());
    };
    if targets.iter().any(|t| t.layer() != first.layer()) {
        return Err(Error::InvalidArgument("targets must share a layer".into()));
    }
    let dims = output_numel(model, x_encoded, first.layer())?;
    let seeds = targets.iter().map(|t| unit_seed(&dims, t.index(), t)).collect::<Result<Vec<_>>>()?;
    let mut rows = extract_seeded(model, x_encoded, *first, &seeds)?;
    for (r, t) in rows.iter_mut().zip(targets) {
        r.target = *t;
    }
    Ok(rows)
}

/// `[W(x)]_j` for one target at an encoded input.
pub fn extract_row(model: &dyn Explainable, x_encoded: &Tensor, target: Target) -> Result<DynamicLinearRow> {
    Ok(extract_rows(model, x_encoded, &[target])?.remove(0))
}

/// Row of class `j` minus the mean row over classes; the bias residual and
/// the additive contribution are corrected the same way.
pub fn mean_corrected_row(model: &dyn Explainable, x_encoded: &Tensor, class: usize) -> Result<DynamicLinearRow> {
    let c = model.classes();
    if class >= c {
        return Err(Error::InvalidNeuron(format!("class {class} of {c}")));
    }
    let seed = Tensor::from_fn(vec![c], |i| if i == class { 1.0 } else { 0.0 } - 1.0 / c as f32)?;
    let mut row = extract_seeded(model, x_encoded, Target::Class(class), &[seed])?.remove(0);
    row.target = Target::Class(class);
    Ok(row)
}

/// Elementwise contributions `row * x` and their per-pixel sums.
#[derive(Clone, Debug, PartialEq)]
pub struct ContributionMap {
    pub s: Tensor,
    /// `[H, W]` for images, `[1, n]` for vectors.
    pub spatial: Tensor,
}

pub fn contribution_map(row: &Tensor, x: &Tensor) -> Result<ContributionMap> {
    if row.shape() != x.shape() {
        return Err(Error::shape("contribution_map", format!("{:?} vs {:?}", row.shape(), x.shape())));
    }
    let s = row.mul(x)?;
    let spatial = channel_sum(&s)?;
    Ok(ContributionMap { s, spatial })
}

/// Sums a `[C, H, W]` tensor over channels; a vector becomes `[1, n]`.
pub fn channel_sum(t: &Tensor) -> Result<Tensor> {
    match t.rank() {
        3 => {
            let d = t.dims();
            t.reduce(&[0], ReduceKind::Sum)?.reshape(vec![d[1], d[2]])
        }
        1 => t.reshape(vec![1, t.numel()]),
        _ => Err(Error::shape("channel_sum", format!("{:?}", t.shape()))),
    }
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f32], q: f64) -> f32 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f32::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let t = (pos - lo as f64) as f32;
    v[lo] + (v[hi] - v[lo]) * t
}

/// Percentile of the per-pixel weight norms used to scale opacity.
pub const ALPHA_PERCENTILE: f64 = 99.9;

/// Colour rendering of a row over a six-channel encoded image, as
/// `[4, H, W]` RGBA.
///
/// Colour per pair is `w_c / (w_c + w_{c+3})` with negative weights clamped
/// to zero (0.5 when both vanish); alpha is the pixel's weight norm over the
/// image's 99.9th percentile, capped at 1, and zero wherever the pixel's
/// summed contribution is not positive.
pub fn render(row: &Tensor, x: &Tensor) -> Result<Tensor> {
    let d = row.dims();
    if d.len() != 3 || d[0] != 6 {
        return Err(Error::shape("render", format!("expected a [6, H, W] row, got {:?}", row.shape())));
    }
    let cmap = contribution_map(row, x)?;
    let (h, w) = (d[1], d[2]);
    let n = h * w;
    let wd = row.data();
    let norms: Vec<f32> = (0..n)
        .map(|p| (0..6).map(|c| wd[c * n + p].powi(2)).sum::<f32>().sqrt())
        .collect();
    let scale = percentile(&norms, ALPHA_PERCENTILE);
    let spatial = cmap.spatial.data();
    Tensor::from_fn(vec![4, h, w], |i| {
        let (c, p) = (i / n, i % n);
        if c == 3 {
            if spatial[p] <= 0.0 || scale <= 0.0 {
                return 0.0;
            }
            return (norms[p] / scale).min(1.0);
        }
        let (a, b) = (wd[c * n + p].max(0.0), wd[(c + 3) * n + p].max(0.0));
        if a + b > 0.0 {
            a / (a + b)
        } else {
            0.5
        }
    })
}

/// `(b_c1 - b_c2) / (y_c1 - y_c2)` for the two largest logits, where `b`
/// is each class's bias residual.
pub fn bias_ratio(model: &dyn Explainable, x_encoded: &Tensor) -> Result<f64> {
    let c = model.classes();
    let targets: Vec<Target> = (0..c).map(Target::Class).collect();
    let rows = extract_rows(model, x_encoded, &targets)?;
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| rows[b].output.total_cmp(&rows[a].output));
    let (c1, c2) = (&rows[order[0]], &rows[order[1]]);
    let dy = c1.output - c2.output;
    if dy.abs() < 1e-9 {
        return Err(Error::InvalidArgument(format!("top-2 logits tie ({dy:e})")));
    }
    Ok((c1.bias_residual - c2.bias_residual) / dy)
}

/// A way of attributing class logits to input pixels.
pub trait AttributionMethod: Send + Sync {
    fn name(&self) -> &'static str;

    /// One spatial map per requested class for an encoded image.
    fn attribute(&self, model: &dyn Explainable, x_encoded: &Tensor, classes: &[usize]) -> Result<Vec<Tensor>>;
}

/// Contribution maps of the dynamic linear rows.
pub struct Inherent;

impl AttributionMethod for Inherent {
    fn name(&self) -> &'static str {
        "inherent"
    }

    fn attribute(&self, model: &dyn Explainable, x: &Tensor, classes: &[usize]) -> Result<Vec<Tensor>> {
        let targets: Vec<Target> = classes.iter().map(|&c| Target::Class(c)).collect();
        extract_rows(model, x, &targets)?
            .into_iter()
            .map(|r| Ok(contribution_map(&r.row, x)?.spatial))
            .collect()
    }
}

/// Full input gradients (cosine factors differentiated) of several classes
/// at each of `xs`, batched when the model allows it.
fn input_gradients(model: &dyn Explainable, xs: &[Tensor], classes: &[usize]) -> Result<Vec<Vec<Tensor>>> {
    let c = model.classes();
    if let Some(&bad) = classes.iter().find(|&&k| k >= c) {
        return Err(Error::InvalidNeuron(format!("class {bad} of {c}")));
    }
    let chunk = if model.batchable() { 10 } else { 1 };
    let mut out = Vec::with_capacity(xs.len());
    for group in xs.chunks(chunk) {
        let mut dims = vec![group.len()];
        dims.extend_from_slice(group[0].dims());
        let data: Vec<f32> = group.iter().flat_map(|t| t.data().iter().copied()).collect();
        let batch = Tensor::new(dims, data)?;
        let mut g = Graph::new();
        let rec = model.record(&mut g, &batch, None)?;
        let mut per_class = Vec::with_capacity(classes.len());
        for &k in classes {
            let seed = Tensor::from_fn(vec![group.len(), c], |i| if i % c == k { 1.0 } else { 0.0 })?;
            let grads = g.backward_with_seed(rec.output, seed, BackwardMode::Training)?;
            per_class.push(grads.wrt(rec.input)?.clone());
        }
        let per = group[0].numel();
        for (s, x) in group.iter().enumerate() {
            out.push(
                per_class
                    .iter()
                    .map(|gr| Tensor::new(x.dims().to_vec(), gr.data()[s * per..(s + 1) * per].to_vec()))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
    }
    Ok(out)
}

/// Vanilla gradient, summed over channels.
pub struct Grad;

impl AttributionMethod for Grad {
    fn name(&self) -> &'static str {
        "grad"
    }

    fn attribute(&self, model: &dyn Explainable, x: &Tensor, classes: &[usize]) -> Result<Vec<Tensor>> {
        input_gradients(model, std::slice::from_ref(x), classes)?
            .remove(0)
            .iter()
            .map(channel_sum)
            .collect()
    }
}

/// Input times gradient.
pub struct InputXGrad;

impl AttributionMethod for InputXGrad {
    fn name(&self) -> &'static str {
        "ixg"
    }

    fn attribute(&self, model: &dyn Explainable, x: &Tensor, classes: &[usize]) -> Result<Vec<Tensor>> {
        input_gradients(model, std::slice::from_ref(x), classes)?
            .remove(0)
            .iter()
            .map(|g| channel_sum(&g.mul(x)?))
            .collect()
    }
}

/// Integrated gradients from the all-zero encoded input, midpoint rule.
pub struct IntGrad {
    pub steps: usize,
}

impl Default for IntGrad {
    fn default() -> Self {
        IntGrad { steps: 50 }
    }
}

impl IntGrad {
    /// Channel-resolved attribution `x * mean_k grad(x (k + 1/2) / steps)`.
    pub fn attribute_full(&self, model: &dyn Explainable, x: &Tensor, classes: &[usize]) -> Result<Vec<Tensor>> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("intgrad needs at least one step".into()));
        }
        let points = (0..self.steps)
            .map(|k| x.scale((k as f32 + 0.5) / self.steps as f32))
            .collect::<Result<Vec<_>>>()?;
        let grads = input_gradients(model, &points, classes)?;
        (0..classes.len())
            .map(|ci| {
                let mut acc = vec![0.0f64; x.numel()];
                for per_point in &grads {
                    for (a, &v) in acc.iter_mut().zip(per_point[ci].data()) {
                        *a += v as f64;
                    }
                }
                let mean = acc.iter().map(|&a| (a / self.steps as f64) as f32).collect();
                Tensor::new(x.dims().to_vec(), mean)?.mul(x)
            })
            .collect()
    }
}

impl AttributionMethod for IntGrad {
    fn name(&self) -> &'static str {
        "intgrad"
    }

    fn attribute(&self, model: &dyn Explainable, x: &Tensor, classes: &[usize]) -> Result<Vec<Tensor>> {
        self.attribute_full(model, x, classes)?.iter().map(channel_sum).collect()
    }
}

/// Uniform noise in `[0, 1)`, seeded by the input and class so repeated
/// calls agree.
pub struct RandomMap {
    pub seed: u64,
}

impl AttributionMethod for RandomMap {
    fn name(&self) -> &'static str {
        "random"
    }

    fn attribute(&self, _model: &dyn Explainable, x: &Tensor, classes: &[usize]) -> Result<Vec<Tensor>> {
        let dims = channel_sum(x)?.dims().to_vec();
        let mut h = DefaultHasher::new();
        self.seed.hash(&mut h);
        for v in x.data() {
            v.to_bits().hash(&mut h);
        }
        let base = h.finish();
        classes
            .iter()
            .map(|&c| {
                let mut rng = ChaCha8Rng::seed_from_u64(base ^ (c as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                Tensor::from_fn(dims.clone(), |_| rng.random::<f32>())
            })
            .collect()
    }
}

/// Attribution methods by name.
pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Box<dyn AttributionMethod>>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = MethodRegistry { methods: BTreeMap::new() };
        r.register(Box::new(Inherent));
        r.register(Box::new(Grad));
        r.register(Box::new(InputXGrad));
        r.register(Box::new(IntGrad::default()));
        r.register(Box::new(RandomMap { seed: 0 }));
        r
    }
}

impl MethodRegistry {
    pub fn register(&mut self, m: Box<dyn AttributionMethod>) {
        self.methods.insert(m.name(), m);
    }

    pub fn get(&self, name: &str) -> Result<&dyn AttributionMethod> {
        self.methods.get(name).map(|m| m.as_ref()).ok_or_else(|| Error::Unknown {
            what: "attribution method",
            name: name.to_string(),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }
}

/// Spatial attribution of one class by a named method.
pub fn posthoc(model: &dyn Explainable, x_encoded: &Tensor, class: usize, method: &str) -> Result<Tensor> {
    let registry = MethodRegistry::default();
    Ok(registry.get(method)?.attribute(model, x_encoded, &[class])?.remove(0))
}

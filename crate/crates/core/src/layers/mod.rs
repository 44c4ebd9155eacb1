//! Network building blocks.
//!
//! Every layer kind implements [`Layer`] and is constructed by name through a
//! [`LayerRegistry`], which maps the `kind` word of a config line to a
//! factory. Layers record their forward pass on a [`Graph`] so the same code
//! serves training, inference and explanation.

mod attention;
mod bcos;
mod norm;
mod structural;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Values tagged with their parameter names.
pub type Named<T> = Vec<(String, T)>;

pub use attention::{attention_forward, AttentionBlock, AttentionParams, Tokens};
pub use bcos::{
    bcos_conv_forward, bcos_forward, maxout_bcos, BcosConv, BcosLinear, BcosParams, ClassifierHead, MaxOutBcos,
};
pub use norm::{norm_forward, Norm, NormKind, NormSpec, NORM_EPS};
pub use structural::{encode_image, pool, EncodeInput, Pool, PoolKind, ResidualAdd, ResidualBegin};

/// Where global pooling sits relative to the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadOrder {
    ClassifyThenPool,
    PoolThenClassify,
}

impl HeadOrder {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "classify_then_pool" => Some(HeadOrder::ClassifyThenPool),
            "pool_then_classify" => Some(HeadOrder::PoolThenClassify),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            HeadOrder::ClassifyThenPool => "classify_then_pool",
            HeadOrder::PoolThenClassify => "pool_then_classify",
        }
    }
}

/// An executable layer. Shapes exclude the leading batch axis.
pub trait Layer: Send + Sync + fmt::Debug {
    fn kind(&self) -> &'static str;

    /// Per-sample output shape, fixed at build time.
    fn output_shape(&self) -> &[usize];

    fn forward(&self, cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var>;

    /// Named parameter and buffer tensors.
    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        Vec::new()
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        Vec::new()
    }

    /// Names among [`Layer::tensors`] that are state, not trainable.
    fn buffers(&self) -> &'static [&'static str] {
        &[]
    }

    /// Whether outputs of one sample depend on other samples in the batch.
    fn couples_batch(&self, _training: bool) -> bool {
        false
    }
}

/// State threaded through one forward pass.
pub struct ForwardCtx<'g> {
    pub graph: &'g mut Graph,
    /// Batch statistics and running-stat updates for Batch norm.
    pub training: bool,
    trainable: bool,
    prefix: String,
    params: Vec<(String, Var)>,
    additive: Vec<(String, Var)>,
    updates: Vec<(String, Tensor)>,
    residual: Vec<Var>,
}

impl<'g> ForwardCtx<'g> {
    /// `trainable` makes parameters graph variables so their gradients can
    /// be read back; otherwise they are constants.
    pub fn new(graph: &'g mut Graph, training: bool, trainable: bool) -> Self {
        ForwardCtx {
            graph,
            training,
            trainable,
            prefix: String::new(),
            params: Vec::new(),
            additive: Vec::new(),
            updates: Vec::new(),
            residual: Vec::new(),
        }
    }

    pub(crate) fn set_prefix(&mut self, prefix: String) {
        self.prefix = prefix;
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    /// Puts a weight on the graph.
    pub fn param(&mut self, name: &str, value: &Tensor) -> Var {
        if self.trainable {
            let v = self.graph.variable(value.clone());
            self.params.push((self.full_name(name), v));
            v
        } else {
            self.graph.constant(value.clone())
        }
    }

    /// Puts an additive, input-independent term on the graph. It is always a
    /// variable so its share of the output can be measured.
    pub fn additive(&mut self, name: &str, value: &Tensor) -> Var {
        let v = self.graph.variable(value.clone());
        let full = self.full_name(name);
        if self.trainable {
            self.params.push((full.clone(), v));
        }
        self.additive.push((full, v));
        v
    }

    /// Schedules a buffer replacement for after the step.
    pub fn update(&mut self, name: &str, value: Tensor) {
        let full = self.full_name(name);
        self.updates.push((full, value));
    }

    pub(crate) fn push_residual(&mut self, v: Var) {
        self.residual.push(v);
    }

    pub(crate) fn pop_residual(&mut self) -> Result<Var> {
        self.residual
            .pop()
            .ok_or_else(|| Error::Graph("residual_add without residual_begin".into()))
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn additive_terms(&self) -> &[(String, Var)] {
        &self.additive
    }

    pub fn into_parts(self) -> (Named<Var>, Named<Var>, Named<Tensor>) {
        (self.params, self.additive, self.updates)
    }
}

/// Build-time context handed to layer factories.
pub struct BuildCtx<'a> {
    pub in_shape: &'a [usize],
    pub classes: usize,
    pub head: HeadOrder,
    pub rng: &'a mut ChaCha8Rng,
    pub(crate) residual: &'a mut Vec<Vec<usize>>,
}

/// `key=value` arguments of one config line. Every key must be consumed.
pub struct LayerArgs {
    kind: String,
    values: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl LayerArgs {
    pub fn new(kind: impl Into<String>, values: BTreeMap<String, String>) -> Self {
        LayerArgs {
            kind: kind.into(),
            values,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        let v = self.values.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> std::result::Result<Option<T>, String> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| format!("bad value `{v}` for `{key}`")),
        }
    }

    pub fn usize(&self, key: &str, default: Option<usize>) -> std::result::Result<usize, String> {
        self.parse(key)?.or(default).ok_or_else(|| format!("missing `{key}`"))
    }

    pub fn f32(&self, key: &str, default: Option<f32>) -> std::result::Result<f32, String> {
        let v: f32 = self.parse(key)?.or(default).ok_or_else(|| format!("missing `{key}`"))?;
        if !v.is_finite() {
            return Err(format!("`{key}` must be finite"));
        }
        Ok(v)
    }

    /// Output scale from `gamma=` or `log10_gamma=`, default 1.
    pub fn gamma(&self) -> std::result::Result<f32, String> {
        let g: Option<f32> = self.parse("gamma")?;
        let l: Option<f32> = self.parse("log10_gamma")?;
        let v = match (g, l) {
            (Some(_), Some(_)) => return Err("give either `gamma` or `log10_gamma`".into()),
            (Some(g), None) => g,
            (None, Some(l)) => 10f32.powf(l),
            (None, None) => 1.0,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(format!("gamma {v} must be positive and finite"));
        }
        Ok(v)
    }

    pub fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.values.keys().filter(|k| !used.contains(*k)).cloned().collect()
    }
}

pub type LayerFactory = fn(&LayerArgs, &mut BuildCtx<'_>) -> std::result::Result<Box<dyn Layer>, String>;

/// Named layer constructors.
#[derive(Clone)]
pub struct LayerRegistry {
    factories: BTreeMap<String, LayerFactory>,
}

impl Default for LayerRegistry {
    fn default() -> Self {
        let mut r = LayerRegistry {
            factories: BTreeMap::new(),
        };
        r.register("encode_input", structural::build_encode);
        r.register("bcos_conv", bcos::build_conv);
        r.register("bcos_linear", bcos::build_linear);
        r.register("maxout_bcos", bcos::build_maxout);
        r.register("classifier_head", bcos::build_head);
        r.register("norm", norm::build_norm);
        r.register("tokens", attention::build_tokens);
        r.register("attention_block", attention::build_block);
        r.register("pool", structural::build_pool);
        r.register("residual_begin", structural::build_residual_begin);
        r.register("residual_add", structural::build_residual_add);
        r
    }
}

impl LayerRegistry {
    pub fn register(&mut self, kind: &str, factory: LayerFactory) {
        self.factories.insert(kind.to_string(), factory);
    }

    pub fn get(&self, kind: &str) -> Option<LayerFactory> {
        self.factories.get(kind).copied()
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

/// `n` unit-norm rows of length `fan_in`, directions uniform on the sphere.
pub(crate) fn unit_rows(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Tensor {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut data = Vec::with_capacity(n * fan_in);
    for _ in 0..n {
        let row: Vec<f32> = loop {
            let r: Vec<f32> = (0..fan_in).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
            if r.iter().any(|v| *v != 0.0) {
                break r;
            }
        };
        let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt();
        data.extend(row.iter().map(|v| v / norm));
    }
    Tensor::new(vec![n, fan_in], data).expect("finite init")
}

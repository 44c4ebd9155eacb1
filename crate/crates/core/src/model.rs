//! Model assembly from config text, forward passes and checkpoints.
//!
//! Config format, one item per line, `#` starts a comment:
//!
//! ```text
//! model input=3,32,32 classes=4 head=classify_then_pool temperature=1
//! encode_input
//! bcos_conv out=16 k=3 s=1 p=1 b=2
//! pool kind=max2
//! classifier_head b=2
//! ```
//!
//! The header accepts `temperature=` or `log10_temperature=` (default 1) and
//! `logit_bias=` (default `ln(1 / (classes - 1))`).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::layers::{encode_image, BuildCtx, ForwardCtx, HeadOrder, Layer, LayerArgs, LayerRegistry};
use crate::tensor::Tensor;

const MAGIC: &[u8; 5] = b"BCOS1";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub input: Vec<usize>,
    pub classes: usize,
    pub head: HeadOrder,
    pub temperature: f32,
    pub logit_bias: f32,
}

/// A parsed config line.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: String,
    pub args: BTreeMap<String, String>,
    /// 1-based line in the config text.
    pub line: usize,
}

fn parse_pairs(words: &[&str], line: usize) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: format!("expected key=value, got `{w}`"),
        })?;
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config {
                line,
                msg: format!("duplicate key `{k}`"),
            });
        }
    }
    Ok(map)
}

fn significant_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

/// Splits config text into the header and layer lines.
pub fn parse_config(text: &str) -> Result<(Header, Vec<LayerSpec>)> {
    let mut lines = significant_lines(text);
    let (hline, htext) = lines.next().ok_or(Error::Config {
        line: 1,
        msg: "empty config".into(),
    })?;
    let words: Vec<&str> = htext.split_whitespace().collect();
    if words[0] != "model" {
        return Err(Error::Config {
            line: hline,
            msg: format!("first line must start with `model`, got `{}`", words[0]),
        });
    }
    let mut h = parse_pairs(&words[1..], hline)?;
    let err = |msg: String| Error::Config { line: hline, msg };
    let input: Vec<usize> = h
        .remove("input")
        .ok_or_else(|| err("missing `input`".into()))?
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err("bad `input`".into()))?;
    if input.is_empty() || input.contains(&0) {
        return Err(err(format!("bad input shape {input:?}")));
    }
    let classes: usize = h
        .remove("classes")
        .ok_or_else(|| err("missing `classes`".into()))?
        .parse()
        .map_err(|_| err("bad `classes`".into()))?;
    if classes < 2 {
        return Err(err(format!("need at least 2 classes, got {classes}")));
    }
    let head = match h.remove("head") {
        None => HeadOrder::ClassifyThenPool,
        Some(s) => HeadOrder::parse(&s).ok_or_else(|| err(format!("unknown head order `{s}`")))?,
    };
    let num = |v: String, key: &str| -> Result<f32> {
        v.parse::<f32>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| err(format!("bad `{key}`")))
    };
    let temperature = match (h.remove("temperature"), h.remove("log10_temperature")) {
        (Some(_), Some(_)) => return Err(err("give either `temperature` or `log10_temperature`".into())),
        (Some(t), None) => num(t, "temperature")?,
        (None, Some(l)) => 10f32.powf(num(l, "log10_temperature")?),
        (None, None) => 1.0,
    };
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(err(format!("temperature {temperature} must be positive")));
    }
    let logit_bias = match h.remove("logit_bias") {
        Some(b) => num(b, "logit_bias")?,
        None => default_logit_bias(classes),
    };
    if let Some(k) = h.keys().next() {
        return Err(err(format!("unknown header key `{k}`")));
    }
    let header = Header {
        input,
        classes,
        head,
        temperature,
        logit_bias,
    };

    let mut specs = Vec::new();
    for (line, text) in lines {
        let words: Vec<&str> = text.split_whitespace().collect();
        specs.push(LayerSpec {
            kind: words[0].to_string(),
            args: parse_pairs(&words[1..], line)?,
            line,
        });
    }
    if specs.is_empty() {
        return Err(Error::Config {
            line: hline,
            msg: "no layers".into(),
        });
    }
    Ok((header, specs))
}

/// `ln(1 / (C - 1))`, which makes `sigmoid(0 + b) = 1 / C`.
pub fn default_logit_bias(classes: usize) -> f32 {
    (1.0 / (classes as f64 - 1.0)).ln() as f32
}

/// Everything recorded by one forward pass.
pub struct Trace {
    pub input: Var,
    pub logits: Var,
    pub layer_outputs: Vec<Var>,
    pub params: Vec<(String, Var)>,
    pub additive: Vec<(String, Var)>,
    pub updates: Vec<(String, Tensor)>,
}

/// An executable network.
#[derive(Debug)]
pub struct Model {
    config: String,
    header: Header,
    layers: Vec<Box<dyn Layer>>,
}

impl Model {
    pub fn build(config: &str, seed: u64) -> Result<Model> {
        Self::build_with(&LayerRegistry::default(), config, seed)
    }

    pub fn build_with(registry: &LayerRegistry, config: &str, seed: u64) -> Result<Model> {
        let (header, specs) = parse_config(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = header.input.clone();
        let mut residual = Vec::new();
        let mut layers: Vec<Box<dyn Layer>> = Vec::new();
        for (i, spec) in specs.iter().enumerate() {
            let layer_err = |msg: String| Error::Layer {
                layer: i,
                kind: spec.kind.clone(),
                msg,
            };
            if spec.kind == "encode_input" && i != 0 {
                return Err(layer_err("encode_input must be the first layer".into()));
            }
            let factory = registry.get(&spec.kind).ok_or_else(|| Error::Config {
                line: spec.line,
                msg: format!("unknown layer kind `{}`", spec.kind),
            })?;
            let args = LayerArgs::new(spec.kind.clone(), spec.args.clone());
            let mut cx = BuildCtx {
                in_shape: &shape,
                classes: header.classes,
                head: header.head,
                rng: &mut rng,
                residual: &mut residual,
            };
            let layer = factory(&args, &mut cx).map_err(layer_err)?;
            let unused = args.unused();
            if !unused.is_empty() {
                return Err(layer_err(format!("unknown keys {unused:?}")));
            }
            shape = layer.output_shape().to_vec();
            layers.push(layer);
        }
        let last = layers.len() - 1;
        let end_err = |msg: String| Error::Layer {
            layer: last,
            kind: specs[last].kind.clone(),
            msg,
        };
        if !residual.is_empty() {
            return Err(end_err(format!("{} residual_begin left open", residual.len())));
        }
        if shape != [header.classes] {
            return Err(end_err(format!(
                "network ends with shape {shape:?}, expected [{}]",
                header.classes
            )));
        }
        Ok(Model {
            config: config.to_string(),
            header,
            layers,
        })
    }

    pub fn config(&self) -> &str {
        &self.config
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn classes(&self) -> usize {
        self.header.classes
    }

    pub fn temperature(&self) -> f32 {
        self.header.temperature
    }

    pub fn logit_bias(&self) -> f32 {
        self.header.logit_bias
    }

    pub fn layers(&self) -> &[Box<dyn Layer>] {
        &self.layers
    }

    /// Whether raw RGB inputs are mapped to six channels first.
    pub fn encodes_input(&self) -> bool {
        self.layers[0].kind() == "encode_input"
    }

    /// Per-sample shape of the tensor the graph is recorded on.
    pub fn encoded_shape(&self) -> Vec<usize> {
        if self.encodes_input() {
            self.layers[0].output_shape().to_vec()
        } else {
            self.header.input.clone()
        }
    }

    /// Whether every layer treats batch samples independently.
    pub fn batch_independent(&self, training: bool) -> bool {
        !self.layers.iter().any(|l| l.couples_batch(training))
    }

    /// Applies the input encoding to a `[N, C, H, W]` or `[C, H, W]` batch.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        if self.encodes_input() {
            encode_image(x)
        } else {
            Ok(x.clone())
        }
    }

    /// Image models accept any spatial size their layers can process, so
    /// only the leading feature axis is checked for rank-3 inputs.
    fn check_input(&self, x: &Tensor) -> Result<()> {
        let want = self.encoded_shape();
        let ok = x.rank() == want.len() + 1
            && if want.len() == 3 {
                x.dims()[1] == want[0]
            } else {
                x.dims()[1..] == want[..]
            };
        if !ok {
            return Err(Error::shape(
                "model input",
                format!("expected [N, {:?}], got {:?}", want, x.shape()),
            ));
        }
        Ok(())
    }

    /// Records the network on `g` for an already encoded batch.
    ///
    /// `training` selects batch statistics in Batch norm; `trainable`
    /// makes parameters variables whose gradients can be read back.
    pub fn trace(&self, g: &mut Graph, x: &Tensor, training: bool, trainable: bool) -> Result<Trace> {
        let input = g.variable(x.clone());
        self.trace_from(g, input, training, trainable)
    }

    /// [`Model::trace`] starting from a node already on `g`.
    pub fn trace_from(&self, g: &mut Graph, input: Var, training: bool, trainable: bool) -> Result<Trace> {
        self.check_input(g.value(input))?;
        let mut cx = ForwardCtx::new(g, training, trainable);
        let mut h = input;
        let mut layer_outputs = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cx.set_prefix(format!("layer{i}"));
            h = layer.forward(&mut cx, h).map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFiniteActivation { layer: i },
                Error::Shape { op, detail } => Error::Layer {
                    layer: i,
                    kind: layer.kind().to_string(),
                    msg: format!("shape mismatch in {op}: {detail}"),
                },
                other => other,
            })?;
            layer_outputs.push(h);
        }
        let (params, additive, updates) = cx.into_parts();
        Ok(Trace {
            input,
            logits: h,
            layer_outputs,
            params,
            additive,
            updates,
        })
    }

    /// Logits `[N, classes]` for an encoded batch, inference mode.
    pub fn forward_encoded(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let t = self.trace(&mut g, x, false, false)?;
        Ok(g.value(t.logits).clone())
    }

    /// Logits for a raw `[N, C, H, W]` batch or a single `[C, H, W]` image
    /// (which yields `[1, classes]`).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = if x.rank() == self.header.input.len() {
            let mut d = vec![1];
            d.extend_from_slice(x.dims());
            x.reshape(d)?
        } else {
            x.clone()
        };
        self.forward_encoded(&self.encode(&x)?)
    }

    /// `sigmoid(logit / T + b)` per class.
    pub fn probabilities(&self, logits: &Tensor) -> Result<Tensor> {
        let (t, b) = (self.header.temperature as f64, self.header.logit_bias as f64);
        logits.map("probabilities", |l| {
            let z = l as f64 / t + b;
            (1.0 / (1.0 + (-z).exp())) as f32
        })
    }

    /// All named tensors in layer order, e.g. `layer3.weight`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in l.tensors() {
                out.push((format!("layer{i}.{name}"), t));
            }
        }
        out
    }

    /// Names of trainable tensors (buffers excluded).
    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let buffers = l.buffers();
            for (name, _) in l.tensors() {
                if !buffers.contains(&name) {
                    out.push(format!("layer{i}.{name}"));
                }
            }
        }
        out
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.named_tensors().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let (layer, local) = name.split_once('.')?;
        let i: usize = layer.strip_prefix("layer")?.parse().ok()?;
        self.layers
            .get_mut(i)?
            .tensors_mut()
            .into_iter()
            .find(|(n, _)| *n == local)
            .map(|(_, t)| t)
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set_tensor(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self.tensor_mut(name).ok_or_else(|| Error::Unknown {
            what: "tensor",
            name: name.to_string(),
        })?;
        if slot.shape() != value.shape() {
            return Err(Error::shape(
                "set_tensor",
                format!("{name}: {:?} vs {:?}", slot.shape(), value.shape()),
            ));
        }
        *slot = value;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        let tensors = self.named_tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        Self::from_bytes_with(&LayerRegistry::default(), bytes)
    }

    pub fn from_bytes_with(registry: &LayerRegistry, bytes: &[u8]) -> Result<Model> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let len = r.u32()? as usize;
        let config = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("manifest is not UTF-8".into()))?
            .to_string();
        let mut model = Model::build_with(registry, &config, 0)?;
        let count = r.u32()? as usize;
        let expected = model.named_tensors().len();
        if count != expected {
            return Err(Error::Format(format!("{count} tensors stored, model has {expected}")));
        }
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let numel: usize = dims.iter().product();
            let data: Vec<f32> = r
                .take(numel * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(dims, data).map_err(|e| Error::Format(format!("{name}: {e}")))?;
            model
                .set_tensor(&name, t)
                .map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a checkpoint and checks that its manifest equals `config`,
    /// naming the first line that differs.
    pub fn load_matching(path: impl AsRef<Path>, config: &str) -> Result<Model> {
        let model = Self::load(path)?;
        let ours: Vec<&str> = significant_lines(model.config()).map(|(_, l)| l).collect();
        let theirs: Vec<(usize, &str)> = significant_lines(config).collect();
        for (i, (line, want)) in theirs.iter().enumerate() {
            let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
            match ours.get(i) {
                Some(have) if norm(have) == norm(want) => {}
                Some(have) => {
                    return Err(Error::ManifestMismatch(format!(
                        "config line {line}: expected `{want}`, checkpoint has `{have}`"
                    )))
                }
                None => {
                    return Err(Error::ManifestMismatch(format!(
                        "config line {line}: `{want}` missing from checkpoint"
                    )))
                }
            }
        }
        if ours.len() > theirs.len() {
            return Err(Error::ManifestMismatch(format!(
                "checkpoint has extra line `{}`",
                ours[theirs.len()]
            )));
        }
        Ok(model)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use rand::Rng;

    fn random_encoded(model: &Model, n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![n];
        dims.extend(model.encoded_shape());
        Tensor::from_fn(dims, |_| rng.random_range(0.0..1.0)).unwrap()
    }

    #[test]
    fn cifar_network_builds_with_ten_outputs() {
        let m = Model::build(&presets::cifar_plain(2.0).unwrap(), 0).unwrap();
        assert_eq!(m.layers().len(), 10);
        assert_eq!(m.layers().last().unwrap().output_shape(), &[10]);
        assert_eq!(m.layers()[8].output_shape(), &[256, 8, 8]);
        assert!((m.temperature() - 10f32.powf(4.8)).abs() / m.temperature() < 1e-6);
        assert!(presets::cifar_plain(1.1).is_err());
    }

    #[test]
    fn empty_layer_list_is_rejected() {
        let e = Model::build("model input=3,8,8 classes=4\n", 0).unwrap_err();
        assert!(matches!(e, Error::Config { .. }), "{e}");
        assert!(Model::build("", 0).is_err());
    }

    #[test]
    fn shape_chain_error_names_layer() {
        let cfg = "model input=3,8,8 classes=4\nencode_input\nbcos_conv out=8 k=9 p=0\nclassifier_head\n";
        match Model::build(cfg, 0).unwrap_err() {
            Error::Layer { layer, .. } => assert_eq!(layer, 1),
            e => panic!("{e}"),
        }
        let cfg = "model input=3,8,8 classes=4\nencode_input\nbcos_conv out=8\n";
        assert!(matches!(Model::build(cfg, 0).unwrap_err(), Error::Layer { layer: 1, .. }));
        let cfg = "model input=3,8,8 classes=4\nencode_input\nbcos_conv out=8 wobble=1\nclassifier_head\n";
        assert!(matches!(Model::build(cfg, 0).unwrap_err(), Error::Layer { layer: 1, .. }));
        let cfg = "model input=3,8,8 classes=4\nencode_input\nfrobnicate\nclassifier_head\n";
        assert!(matches!(Model::build(cfg, 0).unwrap_err(), Error::Config { line: 3, .. }));
    }

    #[test]
    fn tiny_vit_runs() {
        let m = Model::build(&presets::tiny_vit(2.0, 32), 1).unwrap();
        let x = random_encoded(&m, 2, 0);
        let y = m.forward_encoded(&x).unwrap();
        assert_eq!(y.dims(), &[2, 4]);
    }

    #[test]
    fn zero_input_gives_zero_logits_and_uniform_probabilities() {
        let m = Model::build(&presets::cifar_plain(2.0).unwrap(), 3).unwrap();
        let y = m.forward_encoded(&Tensor::zeros(vec![1, 6, 32, 32])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        let p = m.probabilities(&y).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.1).abs() < 1e-6));
    }

    #[test]
    fn positive_homogeneity_without_norms() {
        let m = Model::build(&presets::synth_cnn(2.0, 16), 4).unwrap();
        let x = random_encoded(&m, 1, 1);
        let y = m.forward_encoded(&x).unwrap();
        let y3 = m.forward_encoded(&x.scale(3.0).unwrap()).unwrap();
        for (a, b) in y.data().iter().zip(y3.data()) {
            assert!((3.0 * a - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let cfg = presets::synth_cnn(2.0, 16);
        let a = Model::build(&cfg, 9).unwrap().to_bytes();
        let b = Model::build(&cfg, 9).unwrap().to_bytes();
        let c = Model::build(&cfg, 10).unwrap().to_bytes();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = Model::build(&presets::residual_cnn(crate::layers::NormKind::Batch, 2.0, 8), 2).unwrap();
        let bytes = m.to_bytes();
        let back = Model::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let x = random_encoded(&m, 2, 5);
        assert_eq!(m.forward_encoded(&x).unwrap(), back.forward_encoded(&x).unwrap());
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let m = Model::build(&presets::synth_cnn(2.0, 8), 2).unwrap();
        let bytes = m.to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Model::from_bytes(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[5] = 2;
        assert!(matches!(Model::from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(Model::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(Model::from_bytes(&long).is_err());
    }

    #[test]
    fn mismatched_manifest_names_first_difference() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bcos");
        let cfg = presets::synth_cnn(2.0, 8);
        Model::build(&cfg, 0).unwrap().save(&path).unwrap();
        assert!(Model::load_matching(&path, &cfg).is_ok());
        let other = presets::synth_cnn(2.5, 8);
        match Model::load_matching(&path, &other).unwrap_err() {
            Error::ManifestMismatch(msg) => assert!(msg.contains("line 3"), "{msg}"),
            e => panic!("{e}"),
        }
    }
}

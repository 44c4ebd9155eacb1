//! Binary cross-entropy objective, Adam, learning-rate schedule and the
//! training loop.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{BackwardMode, Graph};
use crate::data::{stack_images, Sample};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetKind {
    /// 1 for the target class, 0 elsewhere.
    OneHot,
    /// 1 for the target class, `1/C` elsewhere.
    SoftNonTarget,
}

impl TargetKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "one_hot" => Ok(TargetKind::OneHot),
            "soft_non_target" => Ok(TargetKind::SoftNonTarget),
            _ => Err(Error::Unknown {
                what: "target encoding",
                name: s.to_string(),
            }),
        }
    }

    pub fn encode(&self, label: usize, classes: usize) -> Vec<f32> {
        let off = match self {
            TargetKind::OneHot => 0.0,
            TargetKind::SoftNonTarget => 1.0 / classes as f32,
        };
        (0..classes).map(|c| if c == label { 1.0 } else { off }).collect()
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of `sigmoid(logit / T + b)` against `targets`,
/// over classes and then over the batch. Returns the loss and its gradient
/// with respect to the logits.
pub fn bce_loss(logits: &Tensor, targets: &Tensor, temperature: f32, bias: f32) -> Result<(f64, Tensor)> {
    if logits.shape() != targets.shape() {
        return Err(Error::shape("bce_loss", format!("{:?} vs {:?}", logits.shape(), targets.shape())));
    }
    let classes = *logits.dims().last().unwrap();
    if classes < 2 {
        return Err(Error::InvalidArgument("bce_loss needs at least 2 classes".into()));
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidArgument(format!("temperature {temperature} must be > 0")));
    }
    let n = logits.numel();
    let (t, b) = (temperature as f64, bias as f64);
    let mut loss = 0.0f64;
    let mut grad = Vec::with_capacity(n);
    for (&l, &y) in logits.data().iter().zip(targets.data()) {
        let z = l as f64 / t + b;
        let y = y as f64;
        // -y ln s(z) - (1 - y) ln(1 - s(z))
        loss += softplus(z) - y * z;
        grad.push(((sigmoid(z) - y) / t / n as f64) as f32);
    }
    let loss = loss / n as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "bce_loss" });
    }
    Ok((loss, Tensor::new(logits.dims().to_vec(), grad)?))
}

/// Linear warm-up followed by cosine decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub lr_start: f32,
    pub lr_end: f32,
}

impl Schedule {
    pub fn lr(&self, step: usize) -> f32 {
        if step < self.warmup_steps {
            return self.lr_start * (step + 1) as f32 / self.warmup_steps as f32;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps);
        if span == 0 || step >= self.total_steps {
            return self.lr_end;
        }
        let p = (step - self.warmup_steps) as f64 / span as f64;
        let c = 0.5 * (1.0 + (PI * p).cos());
        (self.lr_end as f64 + (self.lr_start - self.lr_end) as f64 * c) as f32
    }
}

/// Adam without weight decay, with optional global gradient-norm clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub clip_norm: Option<f32>,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl Adam {
    pub fn with_clip(clip_norm: Option<f32>) -> Self {
        Adam {
            clip_norm,
            ..Adam::default()
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Computes updated values for every parameter with a gradient.
    /// Nothing is written back, so a failed step leaves the caller's
    /// parameters untouched. Returns the pre-clipping gradient norm.
    pub fn step(
        &mut self,
        params: &BTreeMap<String, &Tensor>,
        grads: &BTreeMap<String, Tensor>,
        lr: f32,
    ) -> Result<(BTreeMap<String, Tensor>, f64)> {
        let norm = grads.values().map(|g| g.dot(g).unwrap_or(0.0)).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite { op: "gradient norm" });
        }
        let clip = match self.clip_norm {
            Some(c) if norm > c as f64 => (c as f64 / norm) as f32,
            _ => 1.0,
        };
        let t = (self.step + 1) as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let mut new_m = BTreeMap::new();
        let mut new_v = BTreeMap::new();
        let mut out = BTreeMap::new();
        for (name, g) in grads {
            let p = params.get(name).ok_or_else(|| Error::Unknown {
                what: "parameter",
                name: name.clone(),
            })?;
            let zeros = || Tensor::zeros(p.dims().to_vec());
            let m = self.m.get(name).cloned().unwrap_or_else(zeros);
            let v = self.v.get(name).cloned().unwrap_or_else(zeros);
            let mut md = m.into_data();
            let mut vd = v.into_data();
            let mut pd = p.data().to_vec();
            for i in 0..pd.len() {
                let gi = g.data()[i] * clip;
                md[i] = b1 * md[i] + (1.0 - b1) * gi;
                vd[i] = b2 * vd[i] + (1.0 - b2) * gi * gi;
                let mh = md[i] / c1;
                let vh = vd[i] / c2;
                pd[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
            let dims = p.dims().to_vec();
            out.insert(name.clone(), Tensor::new(dims.clone(), pd)?);
            new_m.insert(name.clone(), Tensor::new(dims.clone(), md)?);
            new_v.insert(name.clone(), Tensor::new(dims, vd)?);
        }
        self.m.extend(new_m);
        self.v.extend(new_v);
        self.step += 1;
        Ok((out, norm))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub lr_end: f32,
    pub warmup_steps: usize,
    pub clip_norm: Option<f32>,
    pub target: TargetKind,
    /// Random horizontal flips and padded crops.
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            lr_end: 1e-5,
            warmup_steps: 10,
            clip_norm: Some(1.0),
            target: TargetKind::OneHot,
            augment: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f32,
}

impl EpochMetrics {
    /// The metric log line.
    pub fn line(&self) -> String {
        format!(
            "epoch={} loss={:.6} acc={:.4} lr={:.6e}",
            self.epoch, self.loss, self.accuracy, self.lr
        )
    }
}

/// Fraction of `samples` whose largest logit is the label.
pub fn accuracy(model: &Model, samples: &[Sample], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for chunk in samples.chunks(batch_size.max(1)) {
        let logits = model.forward(&stack_images(chunk)?)?;
        let c = model.classes();
        for (row, s) in logits.data().chunks(c).zip(chunk) {
            let pred = argmax(row);
            correct += usize::from(pred == s.label);
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Horizontal flip with probability 1/2 and a random crop from the image
/// zero-padded by `size / 8` on every side.
fn augment(image: &Tensor, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let d = image.dims();
    let (c, h, w) = (d[0], d[1], d[2]);
    let pad = (h.min(w) / 8) as i64;
    let flip = rng.random_bool(0.5);
    let dy = rng.random_range(-pad..=pad) as isize;
    let dx = rng.random_range(-pad..=pad) as isize;
    let src = image.data();
    Tensor::from_fn(vec![c, h, w], |i| {
        let (ch, rest) = (i / (h * w), i % (h * w));
        let (y, x) = ((rest / w) as isize + dy, (rest % w) as isize + dx);
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            return 0.0;
        }
        let x = if flip { w as isize - 1 - x } else { x };
        src[ch * h * w + y as usize * w + x as usize]
    })
}

/// One optimisation step on a batch. Returns the loss, or `None` when the
/// step would make the model non-finite (the model is then left unchanged).
fn train_step(model: &mut Model, opt: &mut Adam, batch: &[Sample], cfg: &TrainConfig, lr: f32) -> Result<Option<f64>> {
    let images = stack_images(batch)?;
    let x = model.encode(&images)?;
    let classes = model.classes();
    let targets: Vec<f32> = batch.iter().flat_map(|s| cfg.target.encode(s.label, classes)).collect();
    let targets = Tensor::new(vec![batch.len(), classes], targets)?;

    let mut g = Graph::new();
    let trace = match model.trace(&mut g, &x, true, true) {
        Ok(t) => t,
        Err(Error::NonFiniteActivation { .. } | Error::NonFinite { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (loss, seed) = match bce_loss(g.value(trace.logits), &targets, model.temperature(), model.logit_bias()) {
        Ok(v) => v,
        Err(Error::NonFinite { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let grads = g.backward_with_seed(trace.logits, seed, BackwardMode::Training)?;
    let mut named = BTreeMap::new();
    for (name, v) in &trace.params {
        if let Some(gr) = grads.get(*v) {
            named.insert(name.clone(), gr.clone());
        }
    }
    let current: BTreeMap<String, &Tensor> = model.named_tensors().into_iter().collect();
    let updated = match opt.step(&current, &named, lr) {
        Ok((u, _)) => u,
        Err(Error::NonFinite { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    for (name, t) in updated.into_iter().chain(trace.updates) {
        model.set_tensor(&name, t)?;
    }
    Ok(Some(loss))
}

/// Trains `model` in place. Every epoch appends one [`EpochMetrics`] and
/// calls `on_epoch`. If the loss or the parameters become non-finite the
/// offending step is discarded, the model keeps the last good parameters,
/// and [`Error::Diverged`] is returned.
pub fn train(
    model: &mut Model,
    train_set: &[Sample],
    eval_set: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let schedule = Schedule {
        warmup_steps: cfg.warmup_steps,
        total_steps: steps_per_epoch * cfg.epochs,
        lr_start: cfg.lr,
        lr_end: cfg.lr_end,
    };
    let mut opt = Adam::with_clip(cfg.clip_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        let mut lr = schedule.lr(step);
        for (i, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = idx
                .iter()
                .map(|&j| {
                    let s = &train_set[j];
                    let image = if cfg.augment {
                        augment(&s.image, &mut rng)?
                    } else {
                        s.image.clone()
                    };
                    Ok(Sample { image, label: s.label })
                })
                .collect::<Result<_>>()?;
            lr = schedule.lr(step);
            match train_step(model, &mut opt, &batch, cfg, lr)? {
                Some(loss) => total += loss * batch.len() as f64,
                None => return Err(Error::Diverged { epoch, step: i }),
            }
            step += 1;
        }
        let metrics = EpochMetrics {
            epoch,
            loss: total / train_set.len() as f64,
            accuracy: accuracy(model, eval_set, 64)?,
            lr,
        };
        on_epoch(&metrics);
        log.push(metrics);
    }
    Ok(log)
}

/// Mean loss of `model` on `samples` in inference mode.
pub fn evaluate_loss(model: &Model, samples: &[Sample], target: TargetKind) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(64) {
        let logits = model.forward(&stack_images(chunk)?)?;
        let c = model.classes();
        let t: Vec<f32> = chunk.iter().flat_map(|s| target.encode(s.label, c)).collect();
        let t = Tensor::new(vec![chunk.len(), c], t)?;
        total += bce_loss(&logits, &t, model.temperature(), model.logit_bias())?.0 * chunk.len() as f64;
    }
    Ok(total / samples.len().max(1) as f64)
}

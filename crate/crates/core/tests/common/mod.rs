//! Oracles and fixtures shared by the integration tests and the acceptance
//! harness. Everything here is computed independently of the library's
//! graph code, in f64 where precision matters.
#![allow(dead_code)]

use std::collections::BTreeMap;

use bcos::autodiff::check_graph_gradient;
use bcos::model::Model;
use bcos::training::Adam;
use bcos::{BackwardMode, Graph, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(dims: Vec<usize>, lo: f32, hi: f32, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(dims, |_| rng.random_range(lo..hi)).unwrap()
}

pub fn normal(dims: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(dims, |_| StandardNormal.sample(rng)).unwrap()
}

/// Random RGB image in `[0, 1]`.
pub fn image(size: usize, rng: &mut ChaCha8Rng) -> Tensor {
    uniform(vec![3, size, size], 0.0, 1.0, rng)
}

/// Runs every layer of `model` on `x` inside `g`, the way training does.
pub fn apply_layers(model: &Model, g: &mut Graph, x: Var, training: bool) -> Result<Var> {
    Ok(model.trace_from(g, x, training, false)?.logits)
}

/// Max relative error of the training-mode input gradient of
/// `<r, model(x)>` against central differences, `r` a fixed random
/// projection.
pub fn model_gradient_error(model: &Model, x: &Tensor, seed: u64, h: f32) -> Result<f64> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let out = apply_layers(model, &mut g, xv, true)?;
    let dims = g.value(out).dims().to_vec();
    let mut r = rng(seed);
    let n: usize = dims.iter().product();
    let proj = uniform(dims, -1.0, 1.0, &mut r).scale(1.0 / (n as f32).sqrt())?;
    check_graph_gradient(
        |g, x| {
            let out = apply_layers(model, g, x, true)?;
            let p = g.constant(proj.clone());
            let prod = g.mul(out, p)?;
            let all: Vec<usize> = (0..proj.rank()).collect();
            let s = g.sum(prod, &all)?;
            g.reshape(s, vec![1])
        },
        x,
        h,
    )
}

/// `|cos|^(B-1) gamma` scaled unit rows of `w` evaluated at `x`: the
/// effective matrix of one B-cos layer at that input.
pub fn effective_matrix(w: &Tensor, x: &[f64], b: f64, gamma: f64) -> Vec<Vec<f64>> {
    let (m, k) = (w.dims()[0], w.dims()[1]);
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    (0..m)
        .map(|i| {
            let row: Vec<f64> = w.data()[i * k..(i + 1) * k].iter().map(|&v| v as f64).collect();
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let unit: Vec<f64> = row.iter().map(|v| v / n).collect();
            let lin: f64 = unit.iter().zip(x).map(|(a, b)| a * b).sum();
            let cos = if xn == 0.0 { 0.0 } else { (lin / xn).abs().min(1.0) };
            let f = cos.powf(b - 1.0) * gamma;
            unit.iter().map(|u| u * f).collect()
        })
        .collect()
}

pub fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|r| (0..b[0].len()).map(|j| r.iter().zip(b).map(|(v, br)| v * br[j]).sum()).collect())
        .collect()
}

/// Config of a vector network of B-cos layers ending in the class head.
pub fn mlp_config(input: usize, hidden: &[usize], classes: usize, b: f32) -> String {
    let mut s = format!("model input={input} classes={classes}\n");
    for h in hidden {
        s.push_str(&format!("bcos_linear out={h} b={b}\n"));
    }
    s.push_str(&format!("classifier_head b={b}\n"));
    s
}

/// Product `W_L(x) ... W_1(x)` and the layer-by-layer output for a vector
/// network built from [`mlp_config`].
pub fn matrix_chain(model: &Model, x: &[f64], b: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut h = x.to_vec();
    let mut chain: Option<Vec<Vec<f64>>> = None;
    for (name, w) in model.named_tensors() {
        assert!(name.ends_with(".weight"), "{name}");
        let wt = effective_matrix(w, &h, b, 1.0);
        h = mat_vec(&wt, &h);
        chain = Some(match chain {
            None => wt,
            Some(c) => mat_mul(&wt, &c),
        });
    }
    (chain.unwrap(), h)
}

/// Single B-cos unit output written out directly:
/// `|w_hat| |x| |cos|^B sign(cos)`.
pub fn bcos_closed_form(w: &[f64], x: &[f64], b: f64) -> f64 {
    let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if xn == 0.0 {
        return 0.0;
    }
    let cos = (w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / (wn * xn)).clamp(-1.0, 1.0);
    xn * cos.abs().powf(b) * cos.signum()
}

/// Trains one B=2 unit with BCE to fire on `p + noise` and stay silent on
/// random inputs. Returns the cosine between the learnt weight and `p`.
pub fn train_single_unit(dim: usize, steps: usize, seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let p = normal(vec![dim], &mut r);
    let mut w = normal(vec![1, dim], &mut r);
    let mut opt = Adam::with_clip(None);
    let batch = 16;
    for _ in 0..steps {
        let mut xs = Vec::with_capacity(batch * dim);
        let mut ys = Vec::with_capacity(batch);
        for k in 0..batch {
            let pos = k % 2 == 0;
            let noise = normal(vec![dim], &mut r);
            let x = if pos { p.add(&noise.scale(0.3)?)? } else { noise };
            xs.extend_from_slice(x.data());
            ys.push(if pos { 1.0f64 } else { 0.0 });
        }
        let mut g = Graph::new();
        let wv = g.variable(w.clone());
        let xv = g.constant(Tensor::new(vec![batch, dim], xs)?);
        let out = bcos_unit_graph(&mut g, wv, xv, 2.0)?;
        let z = g.value(out).clone();
        // d/dz of mean softplus(z) - y z
        let seed_t = Tensor::from_fn(vec![batch, 1], |i| {
            let s = 1.0 / (1.0 + (-(z.data()[i] as f64)).exp());
            ((s - ys[i]) / batch as f64) as f32
        })?;
        let grads = g.backward_with_seed(out, seed_t, BackwardMode::Training)?;
        let gw = grads.wrt(wv)?.clone();
        let current = BTreeMap::from([("w".to_string(), &w)]);
        let (mut upd, _) = opt.step(&current, &BTreeMap::from([("w".to_string(), gw)]), 0.01)?;
        w = upd.remove("w").unwrap();
    }
    let wf = w.reshape(vec![dim])?;
    Ok(wf.dot(&p)? / (wf.l2_norm() * p.l2_norm()))
}

/// `[N, K] -> [N, 1]` B-cos unit from graph primitives.
fn bcos_unit_graph(g: &mut Graph, w: Var, x: Var, b: f32) -> Result<Var> {
    let wn = g.col_norm(w, 1)?;
    let w_hat = g.div(w, wn)?;
    let n = g.value(x).dims()[0];
    let k = g.value(x).dims()[1];
    let x3 = g.reshape(x, vec![n, k, 1])?;
    let w3 = g.reshape(w_hat, vec![1, 1, k])?;
    let lin = g.bmm(w3, x3, false, false)?;
    let xn = g.col_norm(x3, 1)?;
    let s = g.cos_scale(lin, xn, b - 1.0)?;
    let out = g.mul(lin, s)?;
    g.reshape(out, vec![n, 1])
}

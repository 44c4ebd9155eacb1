//! Tokenisation and B-cos transformer blocks.
//!
//! Self-attention `A(X) V X` is linear in `X` once the attention matrix is
//! fixed, so the softmax output is recorded as a dynamic factor. Queries,
//! keys and values are plain linear maps; only the output projection `U`
//! and the MLP are B-cos units.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::bcos::bcos_tokens;
use super::norm::{norm_graph, NormKind, NormSpec};
use super::{unit_rows, BcosParams, BuildCtx, ForwardCtx, Layer, LayerArgs};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights of multi-head self-attention. `q`, `k` and `v` are `[D, D]`
/// matrices applied to each token as `x W^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
    pub u: BcosParams,
    pub heads: usize,
}

impl AttentionParams {
    pub fn random(dim: usize, heads: usize, b: f32, rng: &mut ChaCha8Rng) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::InvalidArgument(format!("{heads} heads do not divide dim {dim}")));
        }
        Ok(AttentionParams {
            q: unit_rows(rng, dim, dim),
            k: unit_rows(rng, dim, dim),
            v: unit_rows(rng, dim, dim),
            u: BcosParams::random(dim, dim, b, 1.0, rng)?,
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.dims()[0]
    }
}

fn linear_tokens(g: &mut Graph, x: Var, w: Var) -> Result<Var> {
    let d = g.value(w).dims().to_vec();
    let w3 = g.reshape(w, vec![1, d[0], d[1]])?;
    g.bmm(x, w3, false, true)
}

/// `[N, T, D] -> [N*H, T, D/H]`.
fn split_heads(g: &mut Graph, x: Var, heads: usize) -> Result<Var> {
    let d = g.value(x).dims().to_vec();
    let (n, t, dim) = (d[0], d[1], d[2]);
    let x = g.reshape(x, vec![n, t, heads, dim / heads])?;
    let x = g.permute(x, &[0, 2, 1, 3])?;
    g.reshape(x, vec![n * heads, t, dim / heads])
}

fn merge_heads(g: &mut Graph, x: Var, n: usize, heads: usize) -> Result<Var> {
    let d = g.value(x).dims().to_vec();
    let (t, dh) = (d[1], d[2]);
    let x = g.reshape(x, vec![n, heads, t, dh])?;
    let x = g.permute(x, &[0, 2, 1, 3])?;
    g.reshape(x, vec![n, t, heads * dh])
}

/// Multi-head self-attention with a B-cos output projection on `[N, T, D]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn msa_graph(
    g: &mut Graph,
    x: Var,
    q: Var,
    k: Var,
    v: Var,
    u: Var,
    heads: usize,
    u_b: f32,
    u_gamma: f32,
) -> Result<Var> {
    let d = g.value(x).dims().to_vec();
    if d.len() != 3 || d[2] != g.value(q).dims()[1] || !d[2].is_multiple_of(heads) {
        return Err(Error::shape(
            "attention",
            format!("tokens {:?} vs dim {} with {heads} heads", d, g.value(q).dims()[1]),
        ));
    }
    let n = d[0];
    let dh = d[2] / heads;
    let qx = linear_tokens(g, x, q)?;
    let kx = linear_tokens(g, x, k)?;
    let vx = linear_tokens(g, x, v)?;
    let qh = split_heads(g, qx, heads)?;
    let kh = split_heads(g, kx, heads)?;
    let vh = split_heads(g, vx, heads)?;
    let logits = g.bmm(qh, kh, false, true)?;
    let logits = g.scale(logits, 1.0 / (dh as f32).sqrt())?;
    let a = g.softmax(logits)?;
    let a = g.detach(a)?;
    let o = g.bmm(a, vh, false, false)?;
    let o = merge_heads(g, o, n, heads)?;
    bcos_tokens(g, u, o, u_b, u_gamma)
}

/// Self-attention on a single `[T, D]` token matrix.
pub fn attention_forward(x: &Tensor, p: &AttentionParams) -> Result<Tensor> {
    if x.rank() != 2 || x.dims()[1] != p.dim() {
        return Err(Error::shape("attention", format!("tokens {:?} vs dim {}", x.shape(), p.dim())));
    }
    let mut g = Graph::new();
    let xv = g.constant(x.reshape(vec![1, x.dims()[0], x.dims()[1]])?);
    let q = g.constant(p.q.clone());
    let k = g.constant(p.k.clone());
    let v = g.constant(p.v.clone());
    let u = g.constant(p.u.weight.clone());
    let y = msa_graph(&mut g, xv, q, k, v, u, p.heads, p.u.b, p.u.gamma)?;
    g.value(y).reshape(x.dims().to_vec())
}

/// Flattens `[C, H, W]` into `H*W` tokens of width `C` and adds a learnt
/// positional embedding.
#[derive(Debug)]
pub struct Tokens {
    pub embedding: Tensor,
    out_shape: Vec<usize>,
}

impl Layer for Tokens {
    fn kind(&self) -> &'static str {
        "tokens"
    }

    fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var> {
        let d = cx.graph.value(x).dims().to_vec();
        let e = cx.additive("embedding", &self.embedding);
        let g = &mut *cx.graph;
        let t = g.reshape(x, vec![d[0], d[1], d[2] * d[3]])?;
        let t = g.permute(t, &[0, 2, 1])?;
        g.add(t, e)
    }

    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("embedding", &self.embedding)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("embedding", &mut self.embedding)]
    }
}

pub(super) fn build_tokens(args: &LayerArgs, cx: &mut BuildCtx<'_>) -> std::result::Result<Box<dyn Layer>, String> {
    let [c, h, w] = cx.in_shape else {
        return Err(format!("expects an image [C, H, W], got {:?}", cx.in_shape));
    };
    let (c, t) = (*c, h * w);
    let scale = args.f32("init_scale", Some(0.02))?;
    let data = (0..t * c).map(|_| scale * cx.rng.sample::<f32, _>(StandardNormal)).collect();
    let embedding = Tensor::new(vec![t, c], data).map_err(|e| e.to_string())?;
    Ok(Box::new(Tokens {
        embedding,
        out_shape: vec![t, c],
    }))
}

/// `x + MSA(norm(x))` followed by `x + MLP(norm(x))`, both norms per token.
#[derive(Debug)]
pub struct AttentionBlock {
    pub norm1: NormSpec,
    pub attn: AttentionParams,
    pub norm2: NormSpec,
    pub mlp1: BcosParams,
    pub mlp2: BcosParams,
    out_shape: Vec<usize>,
}

impl Layer for AttentionBlock {
    fn kind(&self) -> &'static str {
        "attention_block"
    }

    fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, cx: &mut ForwardCtx<'_>, x: Var) -> Result<Var> {
        let n1 = cx.param("norm1", &self.norm1.gamma);
        let q = cx.param("q", &self.attn.q);
        let k = cx.param("k", &self.attn.k);
        let v = cx.param("v", &self.attn.v);
        let u = cx.param("u", &self.attn.u.weight);
        let n2 = cx.param("norm2", &self.norm2.gamma);
        let m1 = cx.param("mlp1", &self.mlp1.weight);
        let m2 = cx.param("mlp2", &self.mlp2.weight);
        let training = cx.training;
        let g = &mut *cx.graph;

        let (h, _) = norm_graph(g, x, &self.norm1, n1, training)?;
        let a = msa_graph(g, h, q, k, v, u, self.attn.heads, self.attn.u.b, self.attn.u.gamma)?;
        let x = g.add(x, a)?;
        let (h, _) = norm_graph(g, x, &self.norm2, n2, training)?;
        let h = bcos_tokens(g, m1, h, self.mlp1.b, self.mlp1.gamma)?;
        let h = bcos_tokens(g, m2, h, self.mlp2.b, self.mlp2.gamma)?;
        g.add(x, h)
    }

    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("norm1", &self.norm1.gamma),
            ("q", &self.attn.q),
            ("k", &self.attn.k),
            ("v", &self.attn.v),
            ("u", &self.attn.u.weight),
            ("norm2", &self.norm2.gamma),
            ("mlp1", &self.mlp1.weight),
            ("mlp2", &self.mlp2.weight),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("norm1", &mut self.norm1.gamma),
            ("q", &mut self.attn.q),
            ("k", &mut self.attn.k),
            ("v", &mut self.attn.v),
            ("u", &mut self.attn.u.weight),
            ("norm2", &mut self.norm2.gamma),
            ("mlp1", &mut self.mlp1.weight),
            ("mlp2", &mut self.mlp2.weight),
        ]
    }
}

pub(super) fn build_block(args: &LayerArgs, cx: &mut BuildCtx<'_>) -> std::result::Result<Box<dyn Layer>, String> {
    let [_, dim] = cx.in_shape else {
        return Err(format!("expects tokens [T, D], got {:?}", cx.in_shape));
    };
    let dim = *dim;
    let heads = args.usize("heads", Some(1))?;
    let hidden = args.usize("mlp", Some(2 * dim))?;
    let b = args.f32("b", Some(2.0))?;
    let attn = AttentionParams::random(dim, heads, b, cx.rng).map_err(|e| e.to_string())?;
    let mlp1 = BcosParams::random(hidden, dim, b, 1.0, cx.rng).map_err(|e| e.to_string())?;
    let mlp2 = BcosParams::random(dim, hidden, b, 1.0, cx.rng).map_err(|e| e.to_string())?;
    Ok(Box::new(AttentionBlock {
        norm1: NormSpec::new(NormKind::Position, dim),
        attn,
        norm2: NormSpec::new(NormKind::Position, dim),
        mlp1,
        mlp2,
        out_shape: cx.in_shape.to_vec(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::bcos_forward;
    use rand::SeedableRng;

    fn random_tokens(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Tensor {
        Tensor::from_fn(vec![t, d], |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn zero_values_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = AttentionParams::random(4, 2, 2.0, &mut rng).unwrap();
        p.v = Tensor::zeros(vec![4, 4]);
        let y = attention_forward(&random_tokens(&mut rng, 3, 4), &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_token_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = AttentionParams::random(4, 2, 2.0, &mut rng).unwrap();
        let x = random_tokens(&mut rng, 1, 4);
        let y = attention_forward(&x, &p).unwrap();
        let vx = p.v.matmul(&x.reshape(vec![4, 1]).unwrap()).unwrap().reshape(vec![4]).unwrap();
        let want = bcos_forward(&vx, &p.u).unwrap();
        assert!(y.reshape(vec![4]).unwrap().max_abs_diff(&want) < 1e-6);
    }

    #[test]
    fn matches_dense_attention_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (t, d) = (3, 4);
        let p = AttentionParams::random(d, 1, 2.0, &mut rng).unwrap();
        let x = random_tokens(&mut rng, t, d);
        let y = attention_forward(&x, &p).unwrap();

        let row = |m: &Tensor, i: usize| -> Vec<f64> { m.data()[i * d..(i + 1) * d].iter().map(|&v| v as f64).collect() };
        let apply = |w: &Tensor, xi: &[f64]| -> Vec<f64> { (0..d).map(|o| row(w, o).iter().zip(xi).map(|(a, b)| a * b).sum()).collect() };
        let tokens: Vec<Vec<f64>> = (0..t).map(|i| row(&x, i)).collect();
        let qs: Vec<_> = tokens.iter().map(|xi| apply(&p.q, xi)).collect();
        let ks: Vec<_> = tokens.iter().map(|xi| apply(&p.k, xi)).collect();
        let vs: Vec<_> = tokens.iter().map(|xi| apply(&p.v, xi)).collect();
        for i in 0..t {
            let logits: Vec<f64> = (0..t)
                .map(|j| qs[i].iter().zip(&ks[j]).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let m = logits.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            let mixed: Vec<f32> = (0..d)
                .map(|c| (0..t).map(|j| (logits[j] - m).exp() / z * vs[j][c]).sum::<f64>() as f32)
                .collect();
            let want = bcos_forward(&Tensor::new(vec![d], mixed).unwrap(), &p.u).unwrap();
            for c in 0..d {
                assert!((y.data()[i * d + c] - want.data()[c]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn heads_must_divide_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(AttentionParams::random(6, 4, 2.0, &mut rng).is_err());
    }
}

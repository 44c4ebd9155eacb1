//! Config text for the architectures used throughout the crate.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::layers::NormKind;

/// Output temperature of the plain CIFAR-10 network, keyed by B.
const CIFAR_LOG10_T: [(f32, f32); 7] = [
    (1.0, 8.9),
    (1.25, 8.125),
    (1.5, 7.35),
    (1.75, 6.757),
    (2.0, 4.8),
    (2.25, 4.525),
    (2.5, 4.25),
];

/// The 9-layer plain network for 32x32 RGB, 10 classes. Every layer output
/// is scaled by `gamma` with `log10 gamma = 1.75 + B/10`, and the logits are
/// divided by a per-B temperature. B values outside the temperature table
/// have no defined temperature and are rejected.
pub fn cifar_plain(b: f32) -> Result<String> {
    let log10_t = CIFAR_LOG10_T
        .iter()
        .find(|(k, _)| (k - b).abs() < 1e-6)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::InvalidArgument(format!("no temperature known for B = {b}; set one explicitly")))?;
    let log10_gamma = 1.75 + b / 10.0;
    let kernels = [3, 3, 3, 3, 3, 3, 3, 3];
    let strides = [1, 1, 2, 1, 1, 2, 1, 1];
    let outs = [64, 64, 128, 128, 128, 256, 256, 256];
    let mut s = format!(
        "model input=3,32,32 classes=10 head=classify_then_pool log10_temperature={log10_t} logit_bias={}\n",
        (0.1f64 / 0.9).ln()
    );
    s.push_str("encode_input\n");
    for i in 0..8 {
        writeln!(
            s,
            "bcos_conv out={} k={} s={} p=1 b={b} log10_gamma={log10_gamma}",
            outs[i], kernels[i], strides[i]
        )
        .unwrap();
    }
    writeln!(s, "classifier_head b={b} log10_gamma={log10_gamma}").unwrap();
    Ok(s)
}

/// Five B-cos layers for the synthetic 4-class task.
pub fn synth_cnn(b: f32, size: usize) -> String {
    format!(
        "model input=3,{size},{size} classes=4 head=classify_then_pool\n\
         encode_input\n\
         bcos_conv out=16 k=3 s=1 p=1 b={b}\n\
         bcos_conv out=32 k=3 s=2 p=1 b={b}\n\
         bcos_conv out=32 k=3 s=1 p=1 b={b}\n\
         bcos_conv out=64 k=3 s=2 p=1 b={b}\n\
         classifier_head b={b}\n"
    )
}

/// MaxOut variant of [`synth_cnn`].
pub fn maxout_cnn(b: f32, size: usize) -> String {
    format!(
        "model input=3,{size},{size} classes=4 head=classify_then_pool\n\
         encode_input\n\
         maxout_bcos out=16 k=3 s=1 p=1 b={b}\n\
         maxout_bcos out=32 k=3 s=2 p=1 b={b}\n\
         maxout_bcos out=32 k=3 s=1 p=1 b={b}\n\
         maxout_bcos out=64 k=3 s=2 p=1 b={b}\n\
         classifier_head b={b}\n"
    )
}

/// Small network with one residual block and normalisation layers.
pub fn residual_cnn(norm: NormKind, b: f32, size: usize) -> String {
    let n = norm.as_str();
    format!(
        "model input=3,{size},{size} classes=4 head=classify_then_pool\n\
         encode_input\n\
         bcos_conv out=16 k=3 s=1 p=1 b={b}\n\
         norm kind={n}\n\
         residual_begin\n\
         bcos_conv out=16 k=3 s=1 p=1 b={b}\n\
         norm kind={n}\n\
         bcos_conv out=16 k=3 s=1 p=1 b={b}\n\
         norm kind={n}\n\
         residual_add\n\
         bcos_conv out=32 k=3 s=2 p=1 b={b}\n\
         norm kind={n}\n\
         classifier_head b={b}\n"
    )
}

/// Four-layer convolutional stem, learnt positional embedding and two
/// attention blocks.
pub fn tiny_vit(b: f32, size: usize) -> String {
    format!(
        "model input=3,{size},{size} classes=4 head=classify_then_pool\n\
         encode_input\n\
         bcos_conv out=16 k=3 s=1 p=1 b={b}\n\
         bcos_conv out=32 k=3 s=2 p=1 b={b}\n\
         bcos_conv out=32 k=3 s=2 p=1 b={b}\n\
         bcos_conv out=32 k=3 s=2 p=1 b={b}\n\
         tokens\n\
         attention_block heads=2 mlp=64 b={b}\n\
         attention_block heads=2 mlp=64 b={b}\n\
         classifier_head b={b}\n"
    )
}

//! Brute-force reference implementations used as independent oracles, plus
//! small helpers for building test corpora.
#![allow(dead_code)]

pub mod checks;
pub mod fd;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use veil_core::autodiff::Tensor;
use veil_core::dataset::LabeledImage;
use veil_core::model::{Classifier, Module};

pub fn randn(rng: &mut impl Rng, shape: Vec<usize>) -> Tensor {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng)).requiring_grad()
}

/// Direct quadruple loop, valid 3×3 cross-correlation.
pub fn conv_ref(input: &[f64], c_in: usize, h: usize, w: usize, kernel: &[f64], bias: &[f64]) -> Vec<f64> {
    let c_out = bias.len();
    let (oh, ow) = (h - 2, w - 2);
    let mut out = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = bias[o];
                for c in 0..c_in {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            acc += kernel[((o * c_in + c) * 3 + ky) * 3 + kx] * input[(c * h + y + ky) * w + x + kx];
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = acc;
            }
        }
    }
    out
}

/// `W x + b` one dot product at a time, `W` is `[m, n]` row-major.
pub fn dense_ref(input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = input.len();
    bias.iter()
        .enumerate()
        .map(|(i, b)| b + (0..n).map(|j| weight[i * n + j] * input[j]).sum::<f64>())
        .collect()
}

/// Scans every 2×2 window for its maximum.
pub fn pool_ref(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(c * h / 2 * w / 2);
    for ch in 0..c {
        for y in (0..h).step_by(2) {
            for x in (0..w).step_by(2) {
                let window = [(y, x), (y, x + 1), (y + 1, x), (y + 1, x + 1)];
                let m = window.iter().map(|&(a, b)| input[(ch * h + a) * w + b]).fold(f64::NEG_INFINITY, f64::max);
                out.push(m);
            }
        }
    }
    out
}

pub fn softmax_ref(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn relu_ref(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| if *x > 0.0 { *x } else { 0.0 }).collect()
}

/// Flat copies of every parameter of a classifier, base first.
pub fn flat_params(model: &Classifier) -> Vec<Vec<f64>> {
    model.base.params().iter().chain(model.head.params().iter()).map(|t| t.data().to_vec()).collect()
}

/// Cross-entropy of the full network recomputed from flat parameters with the
/// reference ops: three conv/ReLU/crop/pool stages then three dense layers.
pub fn network_loss_ref(params: &[Vec<f64>], channels: [usize; 3], input: &[f64], size: usize, label: usize) -> f64 {
    let mut x = input.to_vec();
    let (mut c, mut side) = (1, size);
    for (stage, &c_out) in channels.iter().enumerate() {
        let conv = relu_ref(&conv_ref(&x, c, side, side, &params[2 * stage], &params[2 * stage + 1]));
        let s = side - 2;
        let even = s - s % 2;
        let mut cropped = Vec::with_capacity(c_out * even * even);
        for ch in 0..c_out {
            for y in 0..even {
                cropped.extend_from_slice(&conv[(ch * s + y) * s..(ch * s + y) * s + even]);
            }
        }
        x = pool_ref(&cropped, c_out, even, even);
        c = c_out;
        side = even / 2;
    }
    for layer in 0..3 {
        x = dense_ref(&x, &params[6 + 2 * layer], &params[7 + 2 * layer]);
        if layer < 2 {
            x = relu_ref(&x);
        }
    }
    -softmax_ref(&x)[label].max(1e-12).ln()
}

/// `groups` originals per (identity, emotion) cell with `copies` noisy copies
/// each; every pixel is a random value so labels are arbitrary.
pub fn toy_images(
    rng: &mut impl Rng,
    size: usize,
    identities: usize,
    emotions: usize,
    groups: usize,
    copies: usize,
) -> Vec<LabeledImage> {
    let mut out = Vec::new();
    let mut group_id = 0;
    for identity in 0..identities {
        for emotion in 0..emotions {
            for _ in 0..groups {
                for _ in 0..copies {
                    let pixels = (0..size * size).map(|_| rng.gen::<f64>()).collect();
                    out.push(LabeledImage { size, pixels, emotion, identity, group_id });
                }
                group_id += 1;
            }
        }
    }
    out
}

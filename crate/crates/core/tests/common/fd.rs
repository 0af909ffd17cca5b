//! Finite-difference checks of every op and of whole networks. Each check
//! builds one seeded random instance and returns the worst relative error.

use rand::Rng;
use veil_core::autodiff::{finite_difference_gradient, max_relative_error, Graph, Tensor, Var, DEFAULT_EPS};
use veil_core::dataset::Task;
use veil_core::model::{Classifier, ModelConfig, Module};
use veil_core::seed::rng_from;

use super::*;

/// `Σ r ⊙ out` recorded on the tape, so every output coordinate gets a
/// distinct upstream gradient.
fn project<'a>(g: &mut Graph<'a>, out: Var, r: &'a [f64]) -> Var {
    let flat = g.flatten(out);
    let w = g.constant(r, vec![1, r.len()]).unwrap();
    let zero = g.input(Tensor::zeros(vec![1]));
    let y = g.dense(flat, w, zero).unwrap();
    g.sum(y)
}

fn weighted(r: &[f64], out: &[f64]) -> f64 {
    r.iter().zip(out).map(|(a, b)| a * b).sum()
}

fn err(analytic: &[f64], numeric: &Tensor) -> f64 {
    max_relative_error(analytic, numeric.data())
}

pub fn conv2d(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let (c_in, c_out) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (h, w) = (rng.gen_range(3..=7), rng.gen_range(3..=7));
    let x = randn(&mut rng, vec![c_in, h, w]);
    let k = randn(&mut rng, vec![c_out, c_in, 3, 3]);
    let b = randn(&mut rng, vec![c_out]);
    let r: Vec<f64> = randn(&mut rng, vec![c_out * (h - 2) * (w - 2)]).into_data();

    let mut g = Graph::new();
    let (xv, kv, bv) = (g.leaf(&x), g.leaf(&k), g.leaf(&b));
    let y = g.conv2d(xv, kv, bv).unwrap();
    let loss = project(&mut g, y, &r);
    let grads = g.backward(loss).unwrap();

    let fx = finite_difference_gradient(|t| weighted(&r, &conv_ref(t.data(), c_in, h, w, k.data(), b.data())), &x, DEFAULT_EPS);
    let fk = finite_difference_gradient(|t| weighted(&r, &conv_ref(x.data(), c_in, h, w, t.data(), b.data())), &k, DEFAULT_EPS);
    let fb = finite_difference_gradient(|t| weighted(&r, &conv_ref(x.data(), c_in, h, w, k.data(), t.data())), &b, DEFAULT_EPS);
    err(grads.get(xv).unwrap(), &fx).max(err(grads.get(kv).unwrap(), &fk)).max(err(grads.get(bv).unwrap(), &fb))
}

pub fn dense(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let (m, n) = (rng.gen_range(1..=6), rng.gen_range(1..=8));
    let x = randn(&mut rng, vec![n]);
    let w = randn(&mut rng, vec![m, n]);
    let b = randn(&mut rng, vec![m]);
    let r: Vec<f64> = randn(&mut rng, vec![m]).into_data();

    let mut g = Graph::new();
    let (xv, wv, bv) = (g.leaf(&x), g.leaf(&w), g.leaf(&b));
    let y = g.dense(xv, wv, bv).unwrap();
    let loss = project(&mut g, y, &r);
    let grads = g.backward(loss).unwrap();

    let fx = finite_difference_gradient(|t| weighted(&r, &dense_ref(t.data(), w.data(), b.data())), &x, DEFAULT_EPS);
    let fw = finite_difference_gradient(|t| weighted(&r, &dense_ref(x.data(), t.data(), b.data())), &w, DEFAULT_EPS);
    let fb = finite_difference_gradient(|t| weighted(&r, &dense_ref(x.data(), w.data(), t.data())), &b, DEFAULT_EPS);
    err(grads.get(xv).unwrap(), &fx).max(err(grads.get(wv).unwrap(), &fw)).max(err(grads.get(bv).unwrap(), &fb))
}

pub fn relu(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let n = rng.gen_range(2..=30);
    let x = randn(&mut rng, vec![n]);
    let r: Vec<f64> = randn(&mut rng, vec![n]).into_data();

    let mut g = Graph::new();
    let xv = g.leaf(&x);
    let y = g.relu(xv);
    let loss = project(&mut g, y, &r);
    let grads = g.backward(loss).unwrap();
    let fx = finite_difference_gradient(|t| weighted(&r, &relu_ref(t.data())), &x, DEFAULT_EPS);
    err(grads.get(xv).unwrap(), &fx)
}

pub fn max_pool(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let c = rng.gen_range(1..=3);
    let (h, w) = (2 * rng.gen_range(1..=4), 2 * rng.gen_range(1..=4));
    let x = randn(&mut rng, vec![c, h, w]);
    let r: Vec<f64> = randn(&mut rng, vec![c * h / 2 * w / 2]).into_data();

    let mut g = Graph::new();
    let xv = g.leaf(&x);
    let y = g.max_pool2d(xv).unwrap();
    let loss = project(&mut g, y, &r);
    let grads = g.backward(loss).unwrap();
    let fx = finite_difference_gradient(|t| weighted(&r, &pool_ref(t.data(), c, h, w)), &x, DEFAULT_EPS);
    err(grads.get(xv).unwrap(), &fx)
}

pub fn softmax(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let k = rng.gen_range(2..=8);
    let x = randn(&mut rng, vec![k]);
    let r: Vec<f64> = randn(&mut rng, vec![k]).into_data();

    let mut g = Graph::new();
    let xv = g.leaf(&x);
    let y = g.softmax(xv).unwrap();
    let loss = project(&mut g, y, &r);
    let grads = g.backward(loss).unwrap();
    let fx = finite_difference_gradient(|t| weighted(&r, &softmax_ref(t.data())), &x, DEFAULT_EPS);
    err(grads.get(xv).unwrap(), &fx)
}

pub fn softmax_cross_entropy(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let k = rng.gen_range(2..=10);
    let label = rng.gen_range(0..k);
    let x = randn(&mut rng, vec![k]);

    let mut g = Graph::new();
    let xv = g.leaf(&x);
    let p = g.softmax(xv).unwrap();
    let loss = g.cross_entropy(p, label).unwrap();
    let grads = g.backward(loss).unwrap();
    let fx = finite_difference_gradient(|t| -softmax_ref(t.data())[label].ln(), &x, DEFAULT_EPS);
    err(grads.get(xv).unwrap(), &fx)
}

/// Gradient of every parameter of a classifier for one image, from the tape.
fn tape_gradients(model: &Classifier, pixels: &[f64], label: usize) -> Vec<Vec<f64>> {
    let mut model = model.clone();
    let (bb, hb, grads) = {
        let mut g = Graph::new();
        let (f, bb) = model.base.forward_image(&mut g, pixels).unwrap();
        let (p, hb) = model.head.forward(&mut g, f).unwrap();
        let loss = g.cross_entropy(p, label).unwrap();
        (bb, hb, g.backward(loss).unwrap())
    };
    model.base.accumulate(&bb, &grads).unwrap();
    model.head.accumulate(&hb, &grads).unwrap();
    model.base.params().iter().chain(model.head.params().iter()).map(|t| t.grad().unwrap().to_vec()).collect()
}

/// Random biases keep pre-activations off the ReLU kink; with zero biases a
/// dead feature map puts whole dense layers exactly at zero.
fn jitter_biases(model: &mut Classifier, rng: &mut impl Rng) {
    let mut base = model.base.module().clone();
    for layer in &mut base.layers {
        layer.bias = randn(rng, layer.bias.shape().to_vec());
    }
    let mut head = model.head.module().clone();
    for layer in &mut head.layers {
        layer.bias = randn(rng, layer.bias.shape().to_vec());
    }
    model.base.replace(base);
    model.head.replace(head);
}

/// Every coordinate when `coords_per_tensor` is `None`, otherwise that many
/// sampled coordinates per parameter tensor.
pub fn network(config: &ModelConfig, classes: usize, seed: u64, coords_per_tensor: Option<usize>, eps: f64) -> f64 {
    let mut rng = rng_from(seed);
    let mut model = Classifier::new(config, Task::Emotion, classes, seed).unwrap();
    jitter_biases(&mut model, &mut rng);
    let size = config.input_size;
    let pixels: Vec<f64> = (0..size * size).map(|_| rng.gen::<f64>()).collect();
    let label = rng.gen_range(0..classes);
    let analytic = tape_gradients(&model, &pixels, label);
    let params = flat_params(&model);

    let mut worst: f64 = 0.0;
    for (p, tensor) in params.iter().enumerate() {
        let coords: Vec<usize> = match coords_per_tensor {
            None => (0..tensor.len()).collect(),
            Some(n) => (0..n).map(|_| rng.gen_range(0..tensor.len())).collect(),
        };
        for i in coords {
            let mut probe = params.clone();
            probe[p][i] = tensor[i] + eps;
            let up = network_loss_ref(&probe, config.conv_channels, &pixels, size, label);
            probe[p][i] = tensor[i] - eps;
            let down = network_loss_ref(&probe, config.conv_channels, &pixels, size, label);
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(max_relative_error(&[analytic[p][i]], &[numeric]));
        }
    }
    worst
}

pub fn small_network(seed: u64) -> f64 {
    let config = ModelConfig { input_size: 24, conv_channels: [2, 3, 4], hidden: [6, 5], seed: 0 };
    network(&config, 3, seed, None, DEFAULT_EPS)
}

/// A first-layer weight feeds thousands of units; a smaller step keeps the
/// difference from straddling a ReLU or pooling switch.
pub fn default_network(seed: u64) -> f64 {
    network(&ModelConfig::default(), 4, seed, Some(10), 1e-6)
}

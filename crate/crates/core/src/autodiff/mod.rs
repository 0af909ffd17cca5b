//! Reverse-mode automatic differentiation over `f64` tensors.
//!
//! The free functions in this module evaluate a single operation eagerly and
//! are handy for tests and inference; training code records the same
//! operations on a [`Graph`].

mod check;
mod graph;
mod io;
pub mod kernels;
mod optim;
mod tensor;

pub use check::{finite_difference_gradient, max_relative_error, relative_error, DEFAULT_EPS};
pub use graph::{Gradients, Graph, Var, PROB_FLOOR};
pub use io::{load_weights, save_weights, HeaderEntry, WeightHeader, HEADER_FILE, WEIGHTS_FILE};
pub use optim::{sgd_step, OptimizerState};
pub use tensor::Tensor;

use crate::error::Result;

fn eager<'a>(f: impl FnOnce(&mut Graph<'a>) -> Result<Var>) -> Result<Tensor> {
    let mut g = Graph::new();
    let out = f(&mut g)?;
    Ok(g.to_tensor(out))
}

pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    eager(|g| {
        let (x, k, b) = (g.leaf(input), g.leaf(kernel), g.leaf(bias));
        g.conv2d(x, k, b)
    })
}

pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    eager(|g| {
        let (x, w, b) = (g.leaf(input), g.leaf(weight), g.leaf(bias));
        g.dense(x, w, b)
    })
}

pub fn relu(input: &Tensor) -> Tensor {
    eager(|g| {
        let x = g.leaf(input);
        Ok(g.relu(x))
    })
    .expect("relu is total")
}

pub fn max_pool2d(input: &Tensor) -> Result<Tensor> {
    eager(|g| {
        let x = g.leaf(input);
        g.max_pool2d(x)
    })
}

pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    eager(|g| {
        let x = g.leaf(logits);
        g.softmax(x)
    })
}

pub fn cross_entropy(probabilities: &Tensor, label: usize) -> Result<Tensor> {
    eager(|g| {
        let p = g.leaf(probabilities);
        g.cross_entropy(p, label)
    })
}

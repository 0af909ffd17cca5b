use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::autodiff::{kernels, Gradients, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Trainable parameters in a fixed order.
pub trait Module {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
    fn param_names(&self) -> Vec<String>;
}

/// Leaf handles of a module's parameters on one graph, in `params()` order.
#[derive(Clone, Debug, Default)]
pub struct Bound(pub Vec<Var>);

impl Bound {
    /// Folds this binding's gradients into the module's grad buffers.
    pub fn accumulate<M: Module>(&self, module: &mut M, grads: &Gradients) -> Result<()> {
        for (v, p) in self.0.iter().zip(module.params_mut()) {
            grads.accumulate_into(*v, p)?;
        }
        Ok(())
    }
}

fn he_tensor(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    Tensor::from_fn(shape, |_| normal.sample(rng)).requiring_grad()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Three 3×3 valid convolutions, each followed by ReLU, an odd-edge crop
/// when needed, and 2×2 max-pooling. Output is flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBase {
    config: ModelConfig,
    pub layers: Vec<ConvLayer>,
}

impl ConvBase {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(seed);
        let mut c_in = 1;
        let layers = config
            .conv_channels
            .iter()
            .map(|&c_out| {
                let layer = ConvLayer {
                    kernel: he_tensor(vec![c_out, c_in, 3, 3], c_in * 9, &mut rng),
                    bias: Tensor::zeros(vec![c_out]).requiring_grad(),
                };
                c_in = c_out;
                layer
            })
            .collect();
        Ok(ConvBase { config: config.clone(), layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn feature_len(&self) -> usize {
        self.config.feature_len().expect("validated at construction")
    }

    /// Records the stack on `g` for an image already on the tape as `[1, H, W]`.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, image: Var) -> Result<(Var, Bound)> {
        let mut x = image;
        let mut bound = Vec::with_capacity(6);
        for layer in &self.layers {
            let (k, b) = (g.leaf(&layer.kernel), g.leaf(&layer.bias));
            bound.extend([k, b]);
            x = g.conv2d(x, k, b)?;
            x = g.relu(x);
            let (h, w) = (g.shape(x)[1], g.shape(x)[2]);
            if h % 2 == 1 || w % 2 == 1 {
                x = g.crop(x, h - h % 2, w - w % 2)?;
            }
            x = g.max_pool2d(x)?;
        }
        Ok((g.flatten(x), Bound(bound)))
    }

    /// Places `pixels` on the tape and runs [`ConvBase::forward`].
    pub fn forward_image<'a>(&'a self, g: &mut Graph<'a>, pixels: &'a [f64]) -> Result<(Var, Bound)> {
        let s = self.config.input_size;
        if pixels.len() != s * s {
            return Err(Error::shape(
                "forward",
                format!("image has {} pixels, model expects {s}×{s}", pixels.len()),
            ));
        }
        let x = g.constant(pixels, vec![1, s, s])?;
        self.forward(g, x)
    }

    /// Feature vector for one image, without recording gradients.
    pub fn features(&self, pixels: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let (f, _) = self.forward_image(&mut g, pixels)?;
        Ok(g.value(f).to_vec())
    }
}

impl Module for ConvBase {
    fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.kernel, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.kernel, &mut l.bias]).collect()
    }

    fn param_names(&self) -> Vec<String> {
        (1..=self.layers.len())
            .flat_map(|i| [format!("conv{i}.kernel"), format!("conv{i}.bias")])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Three dense layers `[feature_len → h1 → h2 → K]`, ReLU between, softmax out.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub layers: Vec<DenseLayer>,
    num_classes: usize,
}

impl Head {
    pub fn new(config: &ModelConfig, num_classes: usize, seed: u64) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!("a head needs at least 2 classes, got {num_classes}")));
        }
        let widths = [config.feature_len()?, config.hidden[0], config.hidden[1], num_classes];
        let mut rng = rng_from(seed);
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer {
                weight: he_tensor(vec![w[1], w[0]], w[0], &mut rng),
                bias: Tensor::zeros(vec![w[1]]).requiring_grad(),
            })
            .collect();
        Ok(Head { layers, num_classes })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].weight.shape()[1]
    }

    /// Returns the probability vector.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, features: Var) -> Result<(Var, Bound)> {
        let mut x = features;
        let mut bound = Vec::with_capacity(6);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (w, b) = (g.leaf(&layer.weight), g.leaf(&layer.bias));
            bound.extend([w, b]);
            x = g.dense(x, w, b)?;
            if i < last {
                x = g.relu(x);
            }
        }
        Ok((g.softmax(x)?, Bound(bound)))
    }

    /// Class probabilities without touching a graph.
    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_len() {
            return Err(Error::shape(
                "head",
                format!("feature vector has {} values, head expects {}", features.len(), self.input_len()),
            ));
        }
        let last = self.layers.len() - 1;
        let mut x = features.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let (m, n) = (layer.weight.shape()[0], layer.weight.shape()[1]);
            x = kernels::dense_forward(m, n, &x, layer.weight.data(), layer.bias.data());
            if i < last {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(kernels::softmax(&x))
    }
}

impl Module for Head {
    fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    fn param_names(&self) -> Vec<String> {
        (1..=self.layers.len())
            .flat_map(|i| [format!("fc{i}.weight"), format!("fc{i}.bias")])
            .collect()
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

use std::borrow::Cow;

use super::kernels::{self, ConvDims, KSIZE};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Lower bound applied to the target probability inside cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Var, dims: ConvDims },
    Dense { input: Var, weight: Var, bias: Var },
    Relu { input: Var },
    MaxPool2 { input: Var, argmax: Vec<usize> },
    Crop { input: Var, rows: usize, cols: usize },
    Reshape { input: Var },
    Softmax { input: Var },
    CrossEntropy { probs: Var, label: usize },
    Scale { input: Var, factor: f64 },
    Add { lhs: Var, rhs: Var },
    Sum { input: Var },
}

struct Node<'t> {
    shape: Vec<usize>,
    value: Cow<'t, [f64]>,
    op: Op,
    requires_grad: bool,
}

/// Single-use reverse-mode tape.
///
/// Leaves registered with [`Graph::leaf`] borrow their tensor, so building a
/// graph never copies parameters. Gradients come back from
/// [`Graph::backward`] keyed by leaf and are folded into tensors with
/// [`Gradients::accumulate_into`].
#[derive(Default)]
pub struct Graph<'t> {
    nodes: Vec<Node<'t>>,
}

impl<'t> Graph<'t> {
    pub fn new() -> Self {
        Graph { nodes: Vec::with_capacity(32) }
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { shape, value: Cow::Owned(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<'t> {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.node(v).requires_grad)
    }

    /// Borrow a tensor as a leaf; its `requires_grad` flag decides whether a
    /// gradient is produced for it.
    pub fn leaf(&mut self, t: &'t Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: Cow::Borrowed(t.data()),
            op: Op::Leaf,
            requires_grad: t.requires_grad(),
        });
        Var(self.nodes.len() - 1)
    }

    /// Borrow raw row-major data as a constant (no gradient).
    pub fn constant(&mut self, data: &'t [f64], shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.contains(&0) {
            return Err(Error::shape("constant", format!("shape {shape:?} does not hold {} values", data.len())));
        }
        self.nodes.push(Node { shape, value: Cow::Borrowed(data), op: Op::Leaf, requires_grad: false });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Move an owned tensor onto the tape as a leaf.
    pub fn input(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad();
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, rg)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn scalar(&self, v: Var) -> Option<f64> {
        let n = self.node(v);
        (n.value.len() == 1).then(|| n.value[0])
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.to_vec()).expect("graph node shapes are consistent")
    }

    /// Valid 3×3, stride-1 cross-correlation.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (is, ks, bs) = (self.shape(input), self.shape(kernel), self.shape(bias));
        if is.len() != 3 {
            return Err(Error::shape("conv2d", format!("input must be [C_in, H, W], got {is:?}")));
        }
        if ks.len() != 4 || ks[2] != KSIZE || ks[3] != KSIZE {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be [C_out, C_in, 3, 3], got {ks:?} (axes 2,3 are the spatial size)"),
            ));
        }
        if ks[1] != is[0] {
            return Err(Error::shape(
                "conv2d",
                format!("kernel axis 1 (C_in = {}) != input axis 0 (C_in = {})", ks[1], is[0]),
            ));
        }
        if bs != [ks[0]] {
            return Err(Error::shape("conv2d", format!("bias {bs:?} must be [{}] to match kernel axis 0", ks[0])));
        }
        if is[1] < KSIZE || is[2] < KSIZE {
            return Err(Error::shape(
                "conv2d",
                format!("input spatial axes 1,2 ({}×{}) smaller than the 3×3 kernel", is[1], is[2]),
            ));
        }
        let dims = ConvDims { c_in: is[0], c_out: ks[0], h: is[1], w: is[2] };
        let out = kernels::conv2d_forward(dims, self.value(input), self.value(kernel), self.value(bias));
        let rg = self.rg(&[input, kernel, bias]);
        Ok(self.push(
            vec![dims.c_out, dims.out_h(), dims.out_w()],
            out,
            Op::Conv2d { input, kernel, bias, dims },
            rg,
        ))
    }

    /// `weight · input + bias`, weight `[M, N]`, input `[N]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (is, ws, bs) = (self.shape(input), self.shape(weight), self.shape(bias));
        if ws.len() != 2 {
            return Err(Error::shape("dense", format!("weight must be [M, N], got {ws:?}")));
        }
        let (m, n) = (ws[0], ws[1]);
        if is.len() != 1 || is[0] != n {
            return Err(Error::shape("dense", format!("input {is:?} must be [{n}] to match weight axis 1")));
        }
        if bs != [m] {
            return Err(Error::shape("dense", format!("bias {bs:?} must be [{m}] to match weight axis 0")));
        }
        let out = kernels::dense_forward(m, n, self.value(input), self.value(weight), self.value(bias));
        let rg = self.rg(&[input, weight, bias]);
        Ok(self.push(vec![m], out, Op::Dense { input, weight, bias }, rg))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = self.value(input).iter().map(|&v| v.max(0.0)).collect();
        let shape = self.shape(input).to_vec();
        let rg = self.rg(&[input]);
        self.push(shape, out, Op::Relu { input }, rg)
    }

    /// 2×2 max-pool over `[C, H, W]` with even `H`, `W`.
    pub fn max_pool2d(&mut self, input: Var) -> Result<Var> {
        let s = self.shape(input);
        if s.len() != 3 {
            return Err(Error::shape("max_pool2d", format!("input must be [C, H, W], got {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape("max_pool2d", format!("spatial axes 1,2 must be even, got {h}×{w}")));
        }
        let (out, argmax) = kernels::max_pool2_forward(c, h, w, self.value(input));
        let rg = self.rg(&[input]);
        Ok(self.push(vec![c, h / 2, w / 2], out, Op::MaxPool2 { input, argmax }, rg))
    }

    /// Keep the top-left `rows × cols` window of every channel.
    pub fn crop(&mut self, input: Var, rows: usize, cols: usize) -> Result<Var> {
        let s = self.shape(input);
        if s.len() != 3 || rows == 0 || cols == 0 || rows > s[1] || cols > s[2] {
            return Err(Error::shape("crop", format!("cannot crop {s:?} to {rows}×{cols}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let out = kernels::crop_forward(c, h, w, rows, cols, self.value(input));
        let rg = self.rg(&[input]);
        Ok(self.push(vec![c, rows, cols], out, Op::Crop { input, rows, cols }, rg))
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(input).len() || shape.contains(&0) {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape(input)),
            ));
        }
        let out = self.value(input).to_vec();
        let rg = self.rg(&[input]);
        Ok(self.push(shape, out, Op::Reshape { input }, rg))
    }

    pub fn flatten(&mut self, input: Var) -> Var {
        let n = self.value(input).len();
        self.reshape(input, vec![n]).expect("flatten preserves element count")
    }

    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 1 || s[0] < 2 {
            return Err(Error::shape("softmax", format!("logits must be [K] with K >= 2, got {s:?}")));
        }
        let out = kernels::softmax(self.value(logits));
        let shape = s.to_vec();
        let rg = self.rg(&[logits]);
        Ok(self.push(shape, out, Op::Softmax { input: logits }, rg))
    }

    /// `-ln(max(p[label], 1e-12))`.
    pub fn cross_entropy(&mut self, probs: Var, label: usize) -> Result<Var> {
        let k = self.value(probs).len();
        if self.shape(probs).len() != 1 {
            return Err(Error::shape("cross_entropy", format!("probabilities must be [K], got {:?}", self.shape(probs))));
        }
        if label >= k {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        let loss = -self.value(probs)[label].max(PROB_FLOOR).ln();
        let rg = self.rg(&[probs]);
        Ok(self.push(vec![1], vec![loss], Op::CrossEntropy { probs, label }, rg))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let out = self.value(input).iter().map(|v| v * factor).collect();
        let shape = self.shape(input).to_vec();
        let rg = self.rg(&[input]);
        self.push(shape, out, Op::Scale { input, factor }, rg)
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        if self.shape(lhs) != self.shape(rhs) {
            return Err(Error::shape("add", format!("{:?} vs {:?}", self.shape(lhs), self.shape(rhs))));
        }
        let out = self.value(lhs).iter().zip(self.value(rhs)).map(|(a, b)| a + b).collect();
        let shape = self.shape(lhs).to_vec();
        let rg = self.rg(&[lhs, rhs]);
        Ok(self.push(shape, out, Op::Add { lhs, rhs }, rg))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.value(input).iter().sum();
        let rg = self.rg(&[input]);
        self.push(vec![1], vec![total], Op::Sum { input }, rg)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.node(loss).value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.node(loss).requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<'t>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut send = |v: Var, contribution: Vec<f64>| {
            if !self.node(v).requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(buf) => buf.iter_mut().zip(&contribution).for_each(|(b, c)| *b += c),
                slot @ None => *slot = Some(contribution),
            }
        };
        let wants = |v: Var| self.node(v).requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, bias, dims } => {
                let out = kernels::conv2d_backward(
                    *dims,
                    self.value(*input),
                    self.value(*kernel),
                    g,
                    [wants(*input), wants(*kernel), wants(*bias)],
                );
                if let Some(gi) = out.input {
                    send(*input, gi);
                }
                if let Some(gk) = out.kernel {
                    send(*kernel, gk);
                }
                if let Some(gb) = out.bias {
                    send(*bias, gb);
                }
            }
            Op::Dense { input, weight, bias } => {
                let x = self.value(*input);
                let n = x.len();
                if wants(*weight) {
                    let mut gw = vec![0.0; g.len() * n];
                    for (row, &gr) in gw.chunks_exact_mut(n).zip(g) {
                        row.iter_mut().zip(x).for_each(|(o, &xv)| *o = gr * xv);
                    }
                    send(*weight, gw);
                }
                if wants(*input) {
                    let w = self.value(*weight);
                    let mut gi = vec![0.0; n];
                    for (row, &gr) in w.chunks_exact(n).zip(g) {
                        gi.iter_mut().zip(row).for_each(|(o, &wv)| *o += gr * wv);
                    }
                    send(*input, gi);
                }
                if wants(*bias) {
                    send(*bias, g.to_vec());
                }
            }
            Op::Relu { input } => {
                let x = self.value(*input);
                send(*input, x.iter().zip(g).map(|(&xv, &gv)| if xv > 0.0 { gv } else { 0.0 }).collect());
            }
            Op::MaxPool2 { input, argmax } => {
                let mut gi = vec![0.0; self.value(*input).len()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    gi[src] += gv;
                }
                send(*input, gi);
            }
            Op::Crop { input, rows, cols } => {
                let s = self.shape(*input);
                send(*input, kernels::crop_backward(s[0], s[1], s[2], *rows, *cols, g));
            }
            Op::Reshape { input } => send(*input, g.to_vec()),
            Op::Softmax { input } => {
                let p = &node.value;
                let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
                send(*input, p.iter().zip(g).map(|(&pv, &gv)| pv * (gv - dot)).collect());
            }
            Op::CrossEntropy { probs, label } => {
                let p = self.value(*probs);
                let mut gp = vec![0.0; p.len()];
                // Past the floor the loss is constant, so its slope is zero.
                if p[*label] >= PROB_FLOOR {
                    gp[*label] = -g[0] / p[*label];
                }
                send(*probs, gp);
            }
            Op::Scale { input, factor } => send(*input, g.iter().map(|v| v * factor).collect()),
            Op::Add { lhs, rhs } => {
                send(*lhs, g.to_vec());
                send(*rhs, g.to_vec());
            }
            Op::Sum { input } => {
                let n = self.value(*input).len();
                send(*input, vec![g[0]; n]);
            }
        }
    }
}

/// Leaf gradients produced by one [`Graph::backward`] call.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `target`'s buffer. No-op when `v` did not
    /// receive a gradient.
    pub fn accumulate_into(&self, v: Var, target: &mut Tensor) -> Result<()> {
        match self.get(v) {
            Some(g) => target.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

//! Raw slice kernels behind the graph operations.
//!
//! Convolution works on "full-width" rows: for an `H×W` input plane the
//! valid output position `(y, x)` lives at flat index `y*W + x`, so each of
//! the nine taps becomes one contiguous shifted slice of the input. Columns
//! `W-2` and `W-1` of every row are junk and get discarded (forward) or held
//! at zero (backward).

pub const KSIZE: usize = 3;
const TAPS: usize = KSIZE * KSIZE;

#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvDims {
    pub fn out_h(&self) -> usize {
        self.h - 2
    }

    pub fn out_w(&self) -> usize {
        self.w - 2
    }

    /// Length of the full-width span that covers every valid output.
    fn span(&self) -> usize {
        (self.out_h() - 1) * self.w + self.out_w()
    }

    fn offsets(&self) -> [usize; TAPS] {
        let mut off = [0; TAPS];
        for (t, o) in off.iter_mut().enumerate() {
            *o = (t / KSIZE) * self.w + t % KSIZE;
        }
        off
    }
}

pub fn conv2d_forward(d: ConvDims, input: &[f64], kernel: &[f64], bias: &[f64]) -> Vec<f64> {
    let (oh, ow) = (d.out_h(), d.out_w());
    let plane = d.h * d.w;
    let n = d.span();
    let off = d.offsets();
    let mut out = vec![0.0; d.c_out * oh * ow];
    let mut acc = vec![0.0; n];
    for co in 0..d.c_out {
        acc.iter_mut().for_each(|a| *a = bias[co]);
        for ci in 0..d.c_in {
            let x = &input[ci * plane..(ci + 1) * plane];
            let k = &kernel[(co * d.c_in + ci) * TAPS..][..TAPS];
            let s: [&[f64]; TAPS] = std::array::from_fn(|t| &x[off[t]..off[t] + n]);
            let acc = &mut acc[..n];
            for i in 0..n {
                acc[i] += k[0] * s[0][i]
                    + k[1] * s[1][i]
                    + k[2] * s[2][i]
                    + k[3] * s[3][i]
                    + k[4] * s[4][i]
                    + k[5] * s[5][i]
                    + k[6] * s[6][i]
                    + k[7] * s[7][i]
                    + k[8] * s[8][i];
            }
        }
        let dst = &mut out[co * oh * ow..(co + 1) * oh * ow];
        for y in 0..oh {
            dst[y * ow..(y + 1) * ow].copy_from_slice(&acc[y * d.w..y * d.w + ow]);
        }
    }
    out
}

pub struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub kernel: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

pub fn conv2d_backward(
    d: ConvDims,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    want: [bool; 3],
) -> ConvGrads {
    let (oh, ow) = (d.out_h(), d.out_w());
    let plane = d.h * d.w;
    let n = d.span();
    let off = d.offsets();

    // Spread grad_out onto full-width rows; junk columns stay zero.
    let mut g_full = vec![0.0; d.c_out * n];
    for co in 0..d.c_out {
        let src = &grad_out[co * oh * ow..(co + 1) * oh * ow];
        let dst = &mut g_full[co * n..(co + 1) * n];
        for y in 0..oh {
            dst[y * d.w..y * d.w + ow].copy_from_slice(&src[y * ow..(y + 1) * ow]);
        }
    }

    let bias = want[2].then(|| {
        (0..d.c_out)
            .map(|co| grad_out[co * oh * ow..(co + 1) * oh * ow].iter().sum())
            .collect()
    });

    let kernel_grad = want[1].then(|| {
        let mut gk = vec![0.0; d.c_out * d.c_in * TAPS];
        for co in 0..d.c_out {
            let g = &g_full[co * n..(co + 1) * n];
            for ci in 0..d.c_in {
                let x = &input[ci * plane..(ci + 1) * plane];
                let dst = &mut gk[(co * d.c_in + ci) * TAPS..][..TAPS];
                for t in 0..TAPS {
                    dst[t] = dot(g, &x[off[t]..off[t] + n]);
                }
            }
        }
        gk
    });

    // Input gradient as a gather: with grad_out padded in front by the largest
    // tap offset, input position j receives sum_t k[t] * g[j - off[t]].
    let input_grad = want[0].then(|| {
        let pad = off[TAPS - 1];
        let mut g_pad = vec![0.0; d.c_out * (plane + pad)];
        for co in 0..d.c_out {
            g_pad[co * (plane + pad) + pad..][..n].copy_from_slice(&g_full[co * n..(co + 1) * n]);
        }
        let mut gi = vec![0.0; d.c_in * plane];
        for ci in 0..d.c_in {
            let dst = &mut gi[ci * plane..(ci + 1) * plane];
            for co in 0..d.c_out {
                let g = &g_pad[co * (plane + pad)..(co + 1) * (plane + pad)];
                let k = &kernel[(co * d.c_in + ci) * TAPS..][..TAPS];
                let s: [&[f64]; TAPS] = std::array::from_fn(|t| &g[pad - off[t]..pad - off[t] + plane]);
                for j in 0..plane {
                    dst[j] += k[0] * s[0][j]
                        + k[1] * s[1][j]
                        + k[2] * s[2][j]
                        + k[3] * s[3][j]
                        + k[4] * s[4][j]
                        + k[5] * s[5][j]
                        + k[6] * s[6][j]
                        + k[7] * s[7][j]
                        + k[8] * s[8][j];
                }
            }
        }
        gi
    });

    ConvGrads { input: input_grad, kernel: kernel_grad, bias }
}

/// 2×2 max-pool. Returns pooled values and, per output, the flat input index
/// of the winning element (first maximum in row-major window order).
pub fn max_pool2_forward(c: usize, h: usize, w: usize, input: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let top = base + 2 * y * w + 2 * x;
                let cands = [top, top + 1, top + w, top + w + 1];
                let mut best = cands[0];
                for &i in &cands[1..] {
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// Keep the top-left `rows × cols` of each channel.
pub fn crop_forward(c: usize, h: usize, w: usize, rows: usize, cols: usize, input: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(c * rows * cols);
    for ch in 0..c {
        for y in 0..rows {
            let start = ch * h * w + y * w;
            out.extend_from_slice(&input[start..start + cols]);
        }
    }
    out
}

pub fn crop_backward(c: usize, h: usize, w: usize, rows: usize, cols: usize, grad: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..rows {
            let start = ch * h * w + y * w;
            out[start..start + cols].copy_from_slice(&grad[(ch * rows + y) * cols..][..cols]);
        }
    }
    out
}

/// `weight · input + bias` with `weight` of shape `[m, n]`.
pub fn dense_forward(m: usize, n: usize, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    (0..m)
        .map(|r| {
            let row = &weight[r * n..(r + 1) * n];
            bias[r] + dot(row, input)
        })
        .collect()
}

/// Dot product with eight independent partial sums, which lets the compiler
/// vectorize; the summation order is fixed, so results are reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            lanes[k] += x[k] * y[k];
        }
    }
    lanes.iter().sum::<f64>() + tail
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

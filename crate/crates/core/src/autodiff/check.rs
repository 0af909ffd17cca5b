use super::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Central-difference estimate of `df/dx`, one coordinate at a time.
pub fn finite_difference_gradient(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, eps: f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.push((up - down) / (2.0 * eps));
    }
    Tensor::new(x.shape().to_vec(), grad).expect("same shape as x")
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| relative_error(x, y)).fold(0.0, f64::max)
}

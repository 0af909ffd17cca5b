use super::tensor::Tensor;
use crate::error::{Error, Result};

/// SGD with classical momentum. One velocity buffer per parameter, in the
/// order the parameters are passed to [`sgd_step`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(learning_rate: f64, momentum: f64, params: &[&Tensor]) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and >= 0, got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(OptimizerState {
            learning_rate,
            momentum,
            velocity: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        })
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    pub fn reset(&mut self) {
        self.velocity.iter_mut().flatten().for_each(|v| *v = 0.0);
    }
}

/// `v <- momentum*v - lr*g; p <- p + v`, then zero the gradients.
pub fn sgd_step(params: &mut [&mut Tensor], state: &mut OptimizerState) -> Result<()> {
    if params.len() != state.velocity.len() {
        return Err(Error::shape(
            "sgd_step",
            format!("{} parameters but {} velocity buffers", params.len(), state.velocity.len()),
        ));
    }
    for (i, (p, v)) in params.iter().zip(&state.velocity).enumerate() {
        if p.grad().is_none() {
            return Err(Error::MissingGradient(format!("#{i} with shape {:?}", p.shape())));
        }
        if p.len() != v.len() {
            return Err(Error::shape("sgd_step", format!("parameter #{i} has {} values, velocity {}", p.len(), v.len())));
        }
    }
    let (lr, mu) = (state.learning_rate, state.momentum);
    for (p, v) in params.iter_mut().zip(&mut state.velocity) {
        let g = p.grad().expect("checked above").to_vec();
        for ((vel, gv), pv) in v.iter_mut().zip(&g).zip(p.data_mut()) {
            *vel = mu * *vel - lr * gv;
            *pv += *vel;
        }
        p.zero_grad();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64, g: f64) -> Tensor {
        let mut t = Tensor::scalar(v).requiring_grad();
        t.accumulate_grad(&[g]).unwrap();
        t
    }

    #[test]
    fn plain_step() {
        let mut p = param(1.0, 2.0);
        let mut st = OptimizerState::new(0.1, 0.0, &[&p]).unwrap();
        sgd_step(&mut [&mut p], &mut st).unwrap();
        assert!((p.data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(p.grad().unwrap(), &[0.0]);
    }

    #[test]
    fn zero_rate_is_a_no_op() {
        let mut p = param(1.5, 7.0);
        let mut st = OptimizerState::new(0.0, 0.9, &[&p]).unwrap();
        sgd_step(&mut [&mut p], &mut st).unwrap();
        assert_eq!(p.data()[0], 1.5);
    }

    #[test]
    fn two_momentum_steps() {
        // v1 = -0.1*2 = -0.2, p1 = 0.8
        // v2 = 0.9*(-0.2) - 0.1*1 = -0.28, p2 = 0.52
        let mut p = param(1.0, 2.0);
        let mut st = OptimizerState::new(0.1, 0.9, &[&p]).unwrap();
        sgd_step(&mut [&mut p], &mut st).unwrap();
        p.accumulate_grad(&[1.0]).unwrap();
        sgd_step(&mut [&mut p], &mut st).unwrap();
        assert!((st.velocity()[0][0] + 0.28).abs() < 1e-15);
        assert!((p.data()[0] - 0.52).abs() < 1e-15);
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut p = Tensor::scalar(1.0).requiring_grad();
        let mut st = OptimizerState::new(0.1, 0.0, &[&p]).unwrap();
        assert!(matches!(sgd_step(&mut [&mut p], &mut st), Err(Error::MissingGradient(_))));
    }

    #[test]
    fn bad_hyperparameters() {
        let p = Tensor::scalar(1.0);
        assert!(OptimizerState::new(-1.0, 0.0, &[&p]).is_err());
        assert!(OptimizerState::new(0.1, 1.0, &[&p]).is_err());
    }
}

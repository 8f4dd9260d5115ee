//! Momentum SGD and the stepped learning-rate schedule.

use super::model::{EmbeddingModel, Gradients};
use crate::error::{Error, Result};

/// One momentum step in place: `v = momentum * v + g; theta -= lr * v`.
/// With `momentum = 0` this is the plain update `theta -= lr * g`.
pub fn sgd_momentum_step(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::ShapeMismatch(format!(
            "params {}, grads {}, velocity {}",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    if !lr.is_finite() || !momentum.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite);
    }
    for ((theta, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *theta -= lr * *v;
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// `base_lr / factor^(number of boundaries <= epoch)`.
pub fn stepped_lr(base_lr: f64, boundaries: &[usize], factor: f64, epoch: usize) -> f64 {
    let drops = boundaries.iter().filter(|&&b| b <= epoch).count();
    (0..drops).fold(base_lr, |lr, _| lr / factor)
}

/// Momentum SGD over every parameter of an [`EmbeddingModel`].
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub momentum: f64,
    velocity: Gradients,
}

impl SgdMomentum {
    pub fn new(model: &EmbeddingModel, momentum: f64) -> Self {
        Self {
            momentum,
            velocity: Gradients::zeros_like(model),
        }
    }

    pub fn velocity(&self) -> &Gradients {
        &self.velocity
    }

    pub fn step(&mut self, model: &mut EmbeddingModel, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != model.layers.len() {
            return Err(Error::ShapeMismatch("gradient layer count".into()));
        }
        for ((layer, g), v) in model
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.velocity.layers)
        {
            sgd_momentum_step(layer.weights.as_mut_slice(), &g.weights, &mut v.weights, lr, self.momentum)?;
            sgd_momentum_step(&mut layer.bias, &g.bias, &mut v.bias, lr, self.momentum)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_update_examples() {
        let (mut theta, mut v) = ([1.0], [0.0]);
        sgd_momentum_step(&mut theta, &[0.5], &mut v, 0.1, 0.9).unwrap();
        assert_eq!(v[0], 0.5);
        assert!((theta[0] - 0.95).abs() < 1e-15);
        sgd_momentum_step(&mut theta, &[0.5], &mut v, 0.1, 0.9).unwrap();
        assert!((v[0] - 0.95).abs() < 1e-15);
        assert!((theta[0] - 0.855).abs() < 1e-15);
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let (mut theta, mut v) = ([2.0, -1.0], [0.7, 0.3]);
        sgd_momentum_step(&mut theta, &[1.0, -4.0], &mut v, 0.25, 0.0).unwrap();
        assert_eq!(theta, [1.75, 0.0]);
    }

    #[test]
    fn step_errors() {
        let mut theta = [1.0];
        assert!(matches!(
            sgd_momentum_step(&mut theta, &[1.0, 2.0], &mut [0.0], 0.1, 0.9),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            sgd_momentum_step(&mut theta, &[f64::NAN], &mut [0.0], 0.1, 0.9),
            Err(Error::NonFinite)
        ));
        assert!(matches!(
            sgd_momentum_step(&mut [f64::MAX], &[-1e308], &mut [0.0], 1e10, 0.0),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn schedule_examples() {
        let b = [30, 60];
        assert_eq!(stepped_lr(0.003, &b, 10.0, 10), 0.003);
        assert!((stepped_lr(0.003, &b, 10.0, 45) - 0.0003).abs() < 1e-18);
        assert!((stepped_lr(0.003, &b, 10.0, 70) - 0.00003).abs() < 1e-19);
        assert!((stepped_lr(0.003, &b, 10.0, 30) - 0.0003).abs() < 1e-18);
    }

    #[test]
    fn schedule_is_non_increasing_with_one_drop_per_boundary() {
        let b = [3, 7, 12];
        let lrs: Vec<f64> = (0..20).map(|e| stepped_lr(1.0, &b, 10.0, e)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(lrs.windows(2).filter(|w| w[1] < w[0]).count(), b.len());
    }
}

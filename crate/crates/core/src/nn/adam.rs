use crate::error::{Error, Result};
use crate::nn::mlp::{check_grads_shape, Gradients, MlpParams};
use crate::scalar::Scalar;

/// Adam moments and hyperparameters for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    step: u64,
    first: Gradients<T>,
    second: Gradients<T>,
}

impl<T: Scalar> OptState<T> {
    /// Fresh state with the usual `(0.9, 0.999, 1e-8)` constants.
    pub fn new(params: &MlpParams<T>, lr: T) -> Self {
        Self::with_betas(params, lr, T::lit(0.9), T::lit(0.999), T::lit(1e-8))
    }

    pub fn with_betas(params: &MlpParams<T>, lr: T, beta1: T, beta2: T, epsilon: T) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: Gradients::zeros_like(params),
            second: Gradients::zeros_like(params),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam descent step on `params`.
///
/// Non-finite gradients abort the step before anything is modified.
pub fn adam_step<T: Scalar>(
    params: &mut MlpParams<T>,
    grads: &Gradients<T>,
    opt: &mut OptState<T>,
) -> Result<()> {
    check_grads_shape(params, grads)?;
    check_grads_shape(params, &opt.first)?;
    if let Some(bad) = grads.iter().find(|g| !g.is_finite()) {
        return Err(Error::PoisonedUpdate(format!(
            "non-finite gradient entry {bad} at Adam step {}",
            opt.step + 1
        )));
    }

    opt.step += 1;
    let t = opt.step as i32;
    let (b1, b2) = (opt.beta1, opt.beta2);
    let correct1 = T::one() - b1.powi(t);
    let correct2 = T::one() - b2.powi(t);
    let (lr, eps) = (opt.lr, opt.epsilon);

    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let moments = opt.first.tensors_mut().zip(opt.second.tensors_mut());
    for ((p, g), (m, v)) in params.tensors_mut().zip(grads.tensors()).zip(moments) {
        for (((w, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, Dense};

    fn scalar_net(w: f64) -> MlpParams<f64> {
        MlpParams::from_layers(vec![Dense::new(
            1,
            1,
            vec![w],
            vec![0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    fn grad(gw: f64, gb: f64) -> Gradients<f64> {
        Gradients {
            weights: vec![vec![gw]],
            biases: vec![vec![gb]],
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_net(0.0);
        let mut opt = OptState::new(&p, 0.1);
        adam_step(&mut p, &grad(1.0, 0.0), &mut opt).unwrap();
        // m_hat = 1, v_hat = 1
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.layers()[0].weights()[0] - expected).abs() < 1e-15);
        assert!((p.layers()[0].weights()[0] + 0.1).abs() < 1e-8);
        assert_eq!(p.layers()[0].bias()[0], 0.0);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar_net(0.7);
        let mut opt = OptState::new(&p, 0.1);
        adam_step(&mut p, &grad(0.0, 0.0), &mut opt).unwrap();
        assert_eq!(p, scalar_net(0.7));
    }

    #[test]
    fn state_advances() {
        let mut p = scalar_net(0.0);
        let mut opt = OptState::new(&p, 0.1);
        adam_step(&mut p, &grad(1.0, 0.0), &mut opt).unwrap();
        let after_one = p.layers()[0].weights()[0];
        adam_step(&mut p, &grad(1.0, 0.0), &mut opt).unwrap();
        let after_two = p.layers()[0].weights()[0];
        assert_eq!(opt.step(), 2);
        assert_ne!(after_one, after_two);
    }

    #[test]
    fn nan_gradient_poisons_without_touching_params() {
        let mut p = scalar_net(0.3);
        let mut opt = OptState::new(&p, 0.1);
        let err = adam_step(&mut p, &grad(f64::NAN, 0.0), &mut opt).unwrap_err();
        assert!(matches!(err, Error::PoisonedUpdate(_)));
        assert_eq!(p, scalar_net(0.3));
        assert_eq!(opt.step(), 0);
    }
}

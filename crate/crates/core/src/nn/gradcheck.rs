//! Central finite-difference verification of [`MlpParams::backward`].

use crate::error::Result;
use crate::nn::mlp::{Gradients, MlpParams};
use crate::scalar::Scalar;

/// Denominator floor of the relative error, keeps vanishing gradients from
/// blowing the ratio up.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// Worst relative error between analytic and numeric gradients.
///
/// `loss` maps the network output to `(L, dL/dy)`. Every parameter and every
/// input coordinate is perturbed by `±eps`. The relative error of one entry
/// is `|analytic - numeric| / max(|numeric|, RELATIVE_FLOOR)`.
pub fn finite_diff_check<T, F>(params: &MlpParams<T>, x: &[T], loss: F, eps: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&[T]) -> (T, Vec<T>),
{
    let (y, cache) = params.forward(x)?;
    let (_, d_out) = loss(&y);
    let (grads, dx) = params.backward(&cache, &d_out)?;
    compare_gradients(params, x, &loss, eps, &grads, &dx)
}

/// Same as [`finite_diff_check`] against caller-supplied analytic gradients.
pub fn compare_gradients<T, F>(
    params: &MlpParams<T>,
    x: &[T],
    loss: F,
    eps: T,
    grads: &Gradients<T>,
    dx: &[T],
) -> Result<T>
where
    T: Scalar,
    F: Fn(&[T]) -> (T, Vec<T>),
{
    let two_eps = eps + eps;
    let floor = T::lit(RELATIVE_FLOOR);
    let rel = |analytic: T, numeric: T| (analytic - numeric).abs() / numeric.abs().max(floor);
    let eval = |p: &MlpParams<T>, input: &[T]| -> Result<T> { Ok(loss(&p.predict(input)?).0) };

    let mut worst = T::zero();
    let mut probe = params.clone();
    for (k, analytic) in grads.iter().enumerate() {
        let original = *params
            .iter()
            .nth(k)
            .expect("gradient layout matches params");
        set_nth(&mut probe, k, original + eps);
        let plus = eval(&probe, x)?;
        set_nth(&mut probe, k, original - eps);
        let minus = eval(&probe, x)?;
        set_nth(&mut probe, k, original);
        worst = worst.max(rel(*analytic, (plus - minus) / two_eps));
    }

    let mut input = x.to_vec();
    for (i, analytic) in dx.iter().enumerate() {
        let original = input[i];
        input[i] = original + eps;
        let plus = eval(params, &input)?;
        input[i] = original - eps;
        let minus = eval(params, &input)?;
        input[i] = original;
        worst = worst.max(rel(*analytic, (plus - minus) / two_eps));
    }
    Ok(worst)
}

fn set_nth<T: Scalar>(params: &mut MlpParams<T>, k: usize, value: T) {
    if let Some(p) = params.iter_mut().nth(k) {
        *p = value;
    }
}

/// Squared-error loss `0.5 * |y - target|^2` for use with the checker.
pub fn squared_error<T: Scalar>(target: &[T]) -> impl Fn(&[T]) -> (T, Vec<T>) + '_ {
    move |y: &[T]| {
        let diff: Vec<T> = y.iter().zip(target).map(|(a, b)| *a - *b).collect();
        let value = diff.iter().map(|d| *d * *d).sum::<T>() * T::lit(0.5);
        (value, diff)
    }
}

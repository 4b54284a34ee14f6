//! Finite-difference check of backpropagation over random networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::derive_seed;
use crate::error::Result;
use crate::nn::{finite_diff_check, squared_error, Activation, MlpParams};

pub const EPSILON: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

const ACTIVATIONS: [Activation; 3] = [Activation::Relu, Activation::Sigmoid, Activation::Identity];

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckCase {
    pub sizes: [usize; 3],
    pub activations: [Activation; 2],
    pub max_relative_error: f64,
}

/// Checks `count` networks of shape `in -> hidden -> out` with `in, out` in
/// `1..=10`, `hidden` in `1..=64` and random activations, under a
/// squared-error loss against a random target.
pub fn run_gradcheck(count: usize, seed: u64) -> Result<Vec<GradcheckCase>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, i as u64));
            let sizes = [
                rng.random_range(1..=10),
                rng.random_range(1..=64),
                rng.random_range(1..=10),
            ];
            let activations = [
                ACTIVATIONS[rng.random_range(0..3)],
                ACTIVATIONS[rng.random_range(0..3)],
            ];
            let net = MlpParams::<f64>::init(&sizes, &activations, rng.random())?;
            let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let target: Vec<f64> = (0..sizes[2]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let err = finite_diff_check(&net, &x, squared_error(&target), EPSILON)?;
            Ok(GradcheckCase {
                sizes,
                activations,
                max_relative_error: err,
            })
        })
        .collect()
}

pub fn worst(cases: &[GradcheckCase]) -> f64 {
    cases
        .iter()
        .map(|c| c.max_relative_error)
        .fold(0.0, f64::max)
}

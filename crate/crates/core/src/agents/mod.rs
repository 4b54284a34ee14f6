//! The learned monitoring policy, the comparison baselines and the loops
//! that train and evaluate them.

pub mod baselines;
mod ddpg;
mod replay;
mod runner;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use ddpg::{DdpgAgent, DdpgConfig, UpdateStats};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use runner::{
    derive_seed, evaluate, train, train_with, Evaluation, SlotRecord, TrainingHistory,
};

use crate::domain::{ImportanceMatrix, WeightVector};
use crate::env::{EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::nn::MlpParams;
use crate::scalar::Scalar;

/// Maps an [`EnvState`] to the network input: one-hot activity followed by
/// the frequency normalised by the fastest device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEncoder<T> {
    activities: usize,
    f_max: T,
}

impl<T: Scalar> StateEncoder<T> {
    pub fn new(config: &EnvConfig<T>) -> Self {
        Self {
            activities: config.activities(),
            f_max: config.max_frequency(),
        }
    }

    pub fn dim(&self) -> usize {
        self.activities + 1
    }

    pub fn encode(&self, state: &EnvState<T>) -> Vec<T> {
        let mut v = vec![T::zero(); self.dim()];
        v[state.activity.0] = T::one();
        v[self.activities] = state.f / self.f_max;
        v
    }
}

/// Anything that picks a weight vector for a state.
pub trait Policy<T: Scalar> {
    fn name(&self) -> &str;
    fn act(&mut self, state: &EnvState<T>) -> Result<WeightVector<T>>;
}

/// The trained actor run without noise.
#[derive(Debug, Clone)]
pub struct GreedyActor<T: Scalar> {
    actor: MlpParams<T>,
    encoder: StateEncoder<T>,
}

impl<T: Scalar> GreedyActor<T> {
    pub fn new(actor: MlpParams<T>, config: &EnvConfig<T>) -> Result<Self> {
        let encoder = StateEncoder::new(config);
        if actor.input_dim() != encoder.dim() || actor.output_dim() != config.metrics() {
            return Err(Error::invalid(format!(
                "actor maps {} -> {}, environment needs {} -> {}",
                actor.input_dim(),
                actor.output_dim(),
                encoder.dim(),
                config.metrics()
            )));
        }
        Ok(Self { actor, encoder })
    }
}

impl<T: Scalar> Policy<T> for GreedyActor<T> {
    fn name(&self) -> &str {
        Strategy::Daahm.name()
    }

    fn act(&mut self, state: &EnvState<T>) -> Result<WeightVector<T>> {
        let beta = self.actor.predict(&self.encoder.encode(state))?;
        Ok(WeightVector::clamped(beta))
    }
}

#[derive(Debug, Clone)]
pub struct ClassicalPolicy {
    metrics: usize,
}

impl ClassicalPolicy {
    pub fn new(metrics: usize) -> Self {
        Self { metrics }
    }
}

impl<T: Scalar> Policy<T> for ClassicalPolicy {
    fn name(&self) -> &str {
        Strategy::Classical.name()
    }

    fn act(&mut self, _: &EnvState<T>) -> Result<WeightVector<T>> {
        Ok(baselines::classical(self.metrics))
    }
}

#[derive(Debug, Clone)]
pub struct RandomPolicy {
    metrics: usize,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(metrics: usize, seed: u64) -> Self {
        Self {
            metrics,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<T: Scalar> Policy<T> for RandomPolicy {
    fn name(&self) -> &str {
        Strategy::Random.name()
    }

    fn act(&mut self, _: &EnvState<T>) -> Result<WeightVector<T>> {
        Ok(baselines::random(self.metrics, &mut self.rng))
    }
}

#[derive(Debug, Clone)]
pub struct FixedPolicy<T> {
    beta: WeightVector<T>,
}

impl<T: Scalar> FixedPolicy<T> {
    pub fn new(importance: &ImportanceMatrix<T>, k: usize) -> Result<Self> {
        Ok(Self {
            beta: baselines::fixed(importance, k)?,
        })
    }

    pub fn from_weights(beta: WeightVector<T>) -> Self {
        Self { beta }
    }
}

impl<T: Scalar> Policy<T> for FixedPolicy<T> {
    fn name(&self) -> &str {
        Strategy::Fixed.name()
    }

    fn act(&mut self, _: &EnvState<T>) -> Result<WeightVector<T>> {
        Ok(self.beta.clone())
    }
}

/// The four compared strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Daahm,
    Classical,
    Random,
    Fixed,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Daahm,
        Strategy::Classical,
        Strategy::Random,
        Strategy::Fixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Daahm => "daahm",
            Strategy::Classical => "classical",
            Strategy::Random => "random",
            Strategy::Fixed => "fixed",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown strategy `{s}`")))
    }
}

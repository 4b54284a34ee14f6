//! Training loop and noise-free evaluation of any policy.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::ddpg::{DdpgAgent, DdpgConfig};
use crate::agents::replay::{ReplayBuffer, Transition};
use crate::agents::{Policy, StateEncoder};
use crate::domain::ActivityId;
use crate::env::{brute_force_best, Env, EnvConfig, EnvState, Mode, StepInfo};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const AGENT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const TRAIN_ENV_STREAM: u64 = 3;
const EVAL_ENV_STREAM: u64 = 4;

/// Mixes a base seed with a stream tag and an index (splitmix64 finaliser).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-episode learning curve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory<T> {
    /// Sum of rewards over each episode.
    pub episode_rewards: Vec<T>,
    /// Mean critic loss of the updates made during each episode, 0 if none.
    pub critic_losses: Vec<T>,
    pub actor_objectives: Vec<T>,
    pub updates: Vec<usize>,
    pub episode_length: usize,
}

impl<T: Scalar> TrainingHistory<T> {
    pub fn len(&self) -> usize {
        self.episode_rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode_rewards.is_empty()
    }

    /// Mean per-slot reward of each episode.
    pub fn mean_rewards(&self) -> Vec<T> {
        let len = T::lit(self.episode_length.max(1) as f64);
        self.episode_rewards.iter().map(|r| *r / len).collect()
    }
}

/// Trains one shared agent over all devices, cycling devices by episode.
///
/// Episodes follow the configured activity dynamics. The agent acts with
/// decaying Gaussian noise and updates once per slot after warmup.
pub fn train<T: Scalar>(
    config: Arc<EnvConfig<T>>,
    agent_config: &DdpgConfig,
    episodes: usize,
    seed: u64,
) -> Result<(DdpgAgent<T>, TrainingHistory<T>)> {
    train_with(config, agent_config, episodes, seed, |_, _| {})
}

/// [`train`] with a callback invoked after every episode with the episode
/// index and the history so far.
pub fn train_with<T, F>(
    config: Arc<EnvConfig<T>>,
    agent_config: &DdpgConfig,
    episodes: usize,
    seed: u64,
    mut on_episode: F,
) -> Result<(DdpgAgent<T>, TrainingHistory<T>)>
where
    T: Scalar,
    F: FnMut(usize, &TrainingHistory<T>),
{
    config.validate()?;
    agent_config.validate()?;
    let encoder = StateEncoder::new(&config);
    let mut agent = DdpgAgent::new(
        encoder.dim(),
        config.metrics(),
        agent_config,
        derive_seed(seed, AGENT_STREAM, 0),
    )?;
    let mut buffer = ReplayBuffer::new(agent_config.replay_capacity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, NOISE_STREAM, 0));
    let mut envs = (0..config.device_count())
        .map(|d| Env::new(config.clone(), d, Mode::Dynamic))
        .collect::<Result<Vec<_>>>()?;

    let length = config.episode_length;
    let total_steps = episodes * length;
    let ready_at = agent_config.warmup.max(agent_config.batch_size);
    let mut history = TrainingHistory {
        episode_length: length,
        ..TrainingHistory::default()
    };
    let mut step = 0usize;

    for episode in 0..episodes {
        let device = episode % envs.len();
        let env = &mut envs[device];
        let mut state = env.reset(derive_seed(seed, TRAIN_ENV_STREAM, episode as u64));
        let mut encoded = encoder.encode(&state);
        let mut total = T::zero();
        let (mut loss_sum, mut objective_sum, mut updates) = (T::zero(), T::zero(), 0usize);

        loop {
            let noise = T::lit(agent_config.noise_at(step, total_steps));
            let beta = agent.act(&encoded, noise, &mut rng)?;
            let out = env.step(&beta).map_err(|e| {
                e.context(format!("training episode {episode}, slot {}", state.slot))
            })?;
            let next = encoder.encode(&out.next_state);
            total += out.reward;
            buffer.push(Transition {
                state: encoded,
                action: beta.into_inner(),
                reward: out.reward,
                next_state: next.clone(),
                // the slot limit truncates; it is not a terminal state
                done: false,
            })?;
            step += 1;

            if buffer.len() >= ready_at {
                let batch = buffer.sample(agent_config.batch_size, &mut rng)?;
                let stats = agent
                    .update(&batch)
                    .map_err(|e| e.context(format!("update at training step {step}")))?;
                loss_sum += stats.critic_loss;
                objective_sum += stats.actor_objective;
                updates += 1;
            }

            state = out.next_state;
            encoded = next;
            if out.done {
                break;
            }
        }

        let denom = T::lit(updates.max(1) as f64);
        history.episode_rewards.push(total);
        history.critic_losses.push(loss_sum / denom);
        history.actor_objectives.push(objective_sum / denom);
        history.updates.push(updates);
        on_episode(episode, &history);
    }
    Ok((agent, history))
}

/// One evaluated slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord<T> {
    pub episode: usize,
    pub slot: usize,
    pub device: usize,
    pub reward: T,
    pub info: StepInfo<T>,
}

impl<T: Scalar> SlotRecord<T> {
    pub fn activity(&self) -> ActivityId {
        self.info.activity
    }

    /// State the decision was taken in.
    pub fn state(&self, config: &EnvConfig<T>) -> EnvState<T> {
        EnvState {
            activity: self.info.activity,
            device: self.device,
            f: config.devices[self.device].f,
            slot: self.slot,
        }
    }

    /// Best achievable utility for this slot's state and task.
    pub fn oracle(&self, config: &EnvConfig<T>) -> Result<(crate::domain::SelectionVector, T)> {
        brute_force_best(&self.state(config), &self.info.task, config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub total: T,
    pub slots: Vec<SlotRecord<T>>,
}

impl<T: Scalar> Evaluation<T> {
    pub fn mean_per_slot(&self) -> T {
        if self.slots.is_empty() {
            T::zero()
        } else {
            self.total / T::lit(self.slots.len() as f64)
        }
    }
}

/// Runs `policy` without exploration for `episodes` episodes.
///
/// Episode `e` runs on device `e mod N` from an environment seed that
/// depends only on `(seed, e)`, so every policy faces the same activity
/// traces and task draws.
pub fn evaluate<T: Scalar>(
    policy: &mut dyn Policy<T>,
    config: Arc<EnvConfig<T>>,
    mode: Mode,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation<T>> {
    config.validate()?;
    let mut envs = (0..config.device_count())
        .map(|d| Env::new(config.clone(), d, mode))
        .collect::<Result<Vec<_>>>()?;
    let mut slots = Vec::with_capacity(episodes * config.episode_length);
    let mut total = T::zero();
    for episode in 0..episodes {
        let device = episode % envs.len();
        let env = &mut envs[device];
        let mut state = env.reset(derive_seed(seed, EVAL_ENV_STREAM, episode as u64));
        loop {
            let beta = policy.act(&state)?;
            if beta.len() != config.metrics() {
                return Err(Error::invalid(format!(
                    "policy `{}` produced {} weights for {} metrics",
                    policy.name(),
                    beta.len(),
                    config.metrics()
                )));
            }
            let out = env.step(&beta)?;
            total += out.reward;
            slots.push(SlotRecord {
                episode,
                slot: state.slot,
                device,
                reward: out.reward,
                info: out.info,
            });
            state = out.next_state;
            if out.done {
                break;
            }
        }
    }
    Ok(Evaluation { total, slots })
}

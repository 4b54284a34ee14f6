//! Experiment drivers shared by the CLI and the test suites.

use std::sync::Arc;

use crate::agents::{
    derive_seed, evaluate, train_with, ClassicalPolicy, DdpgAgent, Evaluation, FixedPolicy,
    GreedyActor, Policy, RandomPolicy, Strategy, TrainingHistory,
};
use crate::env::{EnvConfig, Mode};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::results::format_float;

const RANDOM_POLICY_STREAM: u64 = 11;

/// Moving-average window for learning curves.
pub const CURVE_WINDOW: usize = 100;

/// Trains the DAAHM agent for `config.episodes` episodes.
pub fn train_agent(config: &ExperimentConfig) -> Result<(DdpgAgent<f64>, TrainingHistory<f64>)> {
    train_agent_with(config, |_, _| {})
}

pub fn train_agent_with<F>(
    config: &ExperimentConfig,
    on_episode: F,
) -> Result<(DdpgAgent<f64>, TrainingHistory<f64>)>
where
    F: FnMut(usize, &TrainingHistory<f64>),
{
    config.validate()?;
    train_with(
        Arc::new(config.env.clone()),
        &config.agent,
        config.episodes,
        config.seed,
        on_episode,
    )
}

/// Builds the policy for `strategy`. DAAHM needs a trained agent.
pub fn build_policy(
    strategy: Strategy,
    config: &ExperimentConfig,
    agent: Option<&DdpgAgent<f64>>,
) -> Result<Box<dyn Policy<f64>>> {
    let metrics = config.env.metrics();
    Ok(match strategy {
        Strategy::Daahm => {
            let agent =
                agent.ok_or_else(|| Error::invalid("the daahm strategy needs a trained agent"))?;
            Box::new(GreedyActor::new(agent.actor.clone(), &config.env)?)
        }
        Strategy::Classical => Box::new(ClassicalPolicy::new(metrics)),
        Strategy::Random => Box::new(RandomPolicy::new(
            metrics,
            derive_seed(config.seed, RANDOM_POLICY_STREAM, 0),
        )),
        Strategy::Fixed => Box::new(FixedPolicy::new(&config.env.importance, config.fixed_k)?),
    })
}

/// Runs one strategy for `config.eval_episodes` episodes in `config.mode`.
pub fn evaluate_strategy(
    strategy: Strategy,
    config: &ExperimentConfig,
    agent: Option<&DdpgAgent<f64>>,
) -> Result<Evaluation<f64>> {
    let mut policy = build_policy(strategy, config, agent)?;
    evaluate(
        policy.as_mut(),
        Arc::new(config.env.clone()),
        config.mode,
        config.eval_episodes,
        config.seed,
    )
    .map_err(|e| e.context(format!("evaluating {strategy}")))
}

/// Everything one `compare` run produces.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub agent: DdpgAgent<f64>,
    pub history: TrainingHistory<f64>,
    /// In [`Strategy::ALL`] order; every strategy saw the same environment seeds.
    pub evaluations: Vec<(Strategy, Evaluation<f64>)>,
}

impl Comparison {
    pub fn evaluation(&self, strategy: Strategy) -> &Evaluation<f64> {
        &self
            .evaluations
            .iter()
            .find(|(s, _)| *s == strategy)
            .expect("every strategy is evaluated")
            .1
    }

    /// Mean cumulative evaluation reward per episode.
    pub fn mean_episode_reward(&self, strategy: Strategy) -> f64 {
        let eval = self.evaluation(strategy);
        let episodes = eval.slots.last().map_or(0, |s| s.episode + 1).max(1);
        eval.total / episodes as f64
    }
}

/// Trains DAAHM, then evaluates all four strategies on shared seeds.
pub fn compare(config: &ExperimentConfig) -> Result<Comparison> {
    compare_with(config, |_, _| {})
}

pub fn compare_with<F>(config: &ExperimentConfig, on_episode: F) -> Result<Comparison>
where
    F: FnMut(usize, &TrainingHistory<f64>),
{
    let (agent, history) = train_agent_with(config, on_episode)?;
    let evaluations = Strategy::ALL
        .into_iter()
        .map(|s| Ok((s, evaluate_strategy(s, config, Some(&agent))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        agent,
        history,
        evaluations,
    })
}

/// Trailing moving average; the first `window - 1` entries average what is
/// available so far.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Summary of a learning curve's late-training stability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    /// Mean of the moving average over the last 20 % of episodes.
    pub late_mean: f64,
    /// Standard deviation of the moving average over the same span.
    pub late_std: f64,
    /// Max minus min of the moving average over the whole run.
    pub spread: f64,
    /// Mean raw episode reward over the first 10 % of episodes.
    pub early_mean: f64,
}

impl Convergence {
    pub fn of(episode_rewards: &[f64]) -> Option<Self> {
        let n = episode_rewards.len();
        if n < 10 {
            return None;
        }
        let ma = moving_average(episode_rewards, CURVE_WINDOW);
        let late = &ma[n - n / 5..];
        let late_mean = late.iter().sum::<f64>() / late.len() as f64;
        let late_std =
            (late.iter().map(|v| (v - late_mean).powi(2)).sum::<f64>() / late.len() as f64).sqrt();
        let (lo, hi) = ma
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let early = &episode_rewards[..n / 10];
        Some(Self {
            late_mean,
            late_std,
            spread: hi - lo,
            early_mean: early.iter().sum::<f64>() / early.len() as f64,
        })
    }

    pub fn is_stable(&self) -> bool {
        self.late_std < 0.1 * self.spread
    }

    pub fn improved(&self) -> bool {
        self.late_mean > self.early_mean
    }
}

pub const TRAINING_HEADER: [&str; 7] = [
    "episode",
    "total_reward",
    "mean_reward",
    "moving_average",
    "critic_loss",
    "actor_objective",
    "updates",
];

/// Rows of the training CSV, one per episode.
pub fn training_records(history: &TrainingHistory<f64>) -> Vec<[String; 7]> {
    let ma = moving_average(&history.episode_rewards, CURVE_WINDOW);
    let means = history.mean_rewards();
    (0..history.len())
        .map(|e| {
            [
                e.to_string(),
                format_float(history.episode_rewards[e]),
                format_float(means[e]),
                format_float(ma[e]),
                format_float(history.critic_losses[e]),
                format_float(history.actor_objectives[e]),
                history.updates[e].to_string(),
            ]
        })
        .collect()
}

pub const SUMMARY_HEADER: [&str; 5] = [
    "strategy",
    "total_reward",
    "mean_episode_reward",
    "mean_slot_reward",
    "slots",
];

pub fn summary_records(comparison: &Comparison) -> Vec<[String; 5]> {
    comparison
        .evaluations
        .iter()
        .map(|(s, eval)| {
            [
                s.name().to_owned(),
                format_float(eval.total),
                format_float(comparison.mean_episode_reward(*s)),
                format_float(eval.mean_per_slot()),
                eval.slots.len().to_string(),
            ]
        })
        .collect()
}

pub const ORACLE_HEADER: [&str; 9] = [
    "strategy",
    "episode",
    "slot",
    "activity",
    "device",
    "policy_utility",
    "oracle_utility",
    "oracle_mask",
    "ratio",
];

/// Policy utility next to the brute-force optimum for every slot.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub episode: usize,
    pub slot: usize,
    pub activity: usize,
    pub device: usize,
    pub policy: f64,
    pub oracle: f64,
    pub oracle_mask: u64,
}

impl OracleRow {
    /// Policy utility as a fraction of the optimum; 1 when the optimum is 0.
    pub fn ratio(&self) -> f64 {
        if self.oracle > 0.0 {
            self.policy / self.oracle
        } else if self.policy >= self.oracle {
            1.0
        } else {
            0.0
        }
    }
}

pub fn oracle_rows(eval: &Evaluation<f64>, env: &EnvConfig<f64>) -> Result<Vec<OracleRow>> {
    eval.slots
        .iter()
        .map(|s| {
            let (best, utility) = s.oracle(env)?;
            Ok(OracleRow {
                episode: s.episode,
                slot: s.slot,
                activity: s.activity().0,
                device: s.device,
                policy: s.reward,
                oracle: utility,
                oracle_mask: best.mask(),
            })
        })
        .collect()
}

pub fn oracle_records(strategy: Strategy, rows: &[OracleRow]) -> Vec<[String; 9]> {
    rows.iter()
        .map(|r| {
            [
                strategy.name().to_owned(),
                r.episode.to_string(),
                r.slot.to_string(),
                r.activity.to_string(),
                r.device.to_string(),
                format_float(r.policy),
                format_float(r.oracle),
                r.oracle_mask.to_string(),
                format_float(r.ratio()),
            ]
        })
        .collect()
}

/// Evaluation mode named for log lines.
pub fn mode_label(mode: Mode) -> &'static str {
    match mode {
        Mode::Static => "static",
        Mode::Dynamic => "dynamic",
    }
}

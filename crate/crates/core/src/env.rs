//! Slot-based simulation of one wearable: activity traces, per-slot task
//! draws, reset/step semantics and an exhaustive oracle over all selections.

use std::str::FromStr;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    evaluate_selection, threshold_select, ActivityId, DeviceSpec, ImportanceMatrix,
    SelectionVector, TaskSpec, WeightVector,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest metric count the exhaustive oracle accepts.
pub const MAX_ORACLE_METRICS: usize = 20;

const PROB_TOLERANCE: f64 = 1e-9;

/// How the wearer's activity evolves from slot to slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "T: Scalar")]
pub enum ActivityDynamics<T> {
    /// Independent draws from one distribution every slot.
    Iid { probs: Vec<T> },
    /// First-order Markov chain with a row-stochastic transition matrix.
    Markov {
        initial: Vec<T>,
        transition: Vec<Vec<T>>,
    },
}

impl<T: Scalar> ActivityDynamics<T> {
    pub fn uniform_iid(activities: usize) -> Self {
        let p = T::lit(1.0 / activities as f64);
        ActivityDynamics::Iid {
            probs: vec![p; activities],
        }
    }

    /// Markov chain that keeps the current activity with probability `stay`
    /// and otherwise moves uniformly to one of the others. Starts uniform.
    pub fn sticky(activities: usize, stay: f64) -> Self {
        let uniform = T::lit(1.0 / activities as f64);
        let transition = (0..activities)
            .map(|g| {
                (0..activities)
                    .map(|h| {
                        if activities == 1 {
                            T::one()
                        } else if g == h {
                            T::lit(stay)
                        } else {
                            T::lit((1.0 - stay) / (activities - 1) as f64)
                        }
                    })
                    .collect()
            })
            .collect();
        ActivityDynamics::Markov {
            initial: vec![uniform; activities],
            transition,
        }
    }

    fn initial(&self) -> &[T] {
        match self {
            ActivityDynamics::Iid { probs } => probs,
            ActivityDynamics::Markov { initial, .. } => initial,
        }
    }

    pub fn validate(&self, activities: usize) -> Result<()> {
        match self {
            ActivityDynamics::Iid { probs } => {
                check_distribution(probs, activities, "dynamics.probs")
            }
            ActivityDynamics::Markov {
                initial,
                transition,
            } => {
                check_distribution(initial, activities, "dynamics.initial")?;
                if transition.len() != activities {
                    return Err(Error::config(
                        "dynamics.transition",
                        format!("has {} rows, expected {activities}", transition.len()),
                    ));
                }
                for (g, row) in transition.iter().enumerate() {
                    check_distribution(row, activities, &format!("dynamics.transition[{g}]"))?;
                }
                Ok(())
            }
        }
    }
}

fn check_distribution<T: Scalar>(probs: &[T], len: usize, key: &str) -> Result<()> {
    if probs.len() != len {
        return Err(Error::config(
            key,
            format!("has {} entries, expected {len}", probs.len()),
        ));
    }
    if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= T::zero())) {
        return Err(Error::config(key, format!("entry {i} = {p} is negative")));
    }
    let total: f64 = probs.iter().map(|p| p.as_f64()).sum();
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::config(
            key,
            format!("row sums to {total}, expected 1"),
        ));
    }
    Ok(())
}

/// Whether the activity is frozen for a whole episode or follows the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Static,
    #[default]
    Dynamic,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Mode::Static),
            "dynamic" => Ok(Mode::Dynamic),
            other => Err(Error::invalid(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Static => "static",
            Mode::Dynamic => "dynamic",
        })
    }
}

/// Everything that defines the simulated population and its workload.
///
/// `G`, `M` and `N` are implied by the importance matrix and device list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct EnvConfig<T> {
    pub importance: ImportanceMatrix<T>,
    pub devices: Vec<DeviceSpec<T>>,
    /// Per-metric `[min, max]` datasize interval in bits.
    pub datasize_ranges: Vec<[T; 2]>,
    /// Per-metric cycles per bit.
    pub cycles: Vec<T>,
    pub theta: T,
    pub lambda: T,
    pub episode_length: usize,
    pub dynamics: ActivityDynamics<T>,
    pub seed: u64,
}

impl<T: Scalar> EnvConfig<T> {
    pub fn activities(&self) -> usize {
        self.importance.activities()
    }

    pub fn metrics(&self) -> usize {
        self.importance.metrics()
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn max_frequency(&self) -> T {
        self.devices
            .iter()
            .map(|d| d.f)
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Checks every invariant; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let metrics = self.metrics();
        if self.devices.is_empty() {
            return Err(Error::config("devices", "at least one device is required"));
        }
        for (n, dev) in self.devices.iter().enumerate() {
            dev.validate()
                .map_err(|e| Error::config(format!("devices[{n}]"), e.to_string()))?;
        }
        if self.datasize_ranges.len() != metrics {
            return Err(Error::config(
                "datasize_ranges",
                format!(
                    "has {} entries, expected {metrics}",
                    self.datasize_ranges.len()
                ),
            ));
        }
        for (m, [lo, hi]) in self.datasize_ranges.iter().enumerate() {
            if !(*lo >= T::zero() && lo <= hi && hi.is_finite()) {
                return Err(Error::config(
                    format!("datasize_ranges[{m}]"),
                    format!("[{lo}, {hi}] is not a non-negative interval"),
                ));
            }
        }
        if self.cycles.len() != metrics {
            return Err(Error::config(
                "cycles",
                format!("has {} entries, expected {metrics}", self.cycles.len()),
            ));
        }
        if let Some((m, c)) = self
            .cycles
            .iter()
            .enumerate()
            .find(|(_, c)| !(**c >= T::zero() && c.is_finite()))
        {
            return Err(Error::config(
                format!("cycles[{m}]"),
                format!("{c} is not non-negative"),
            ));
        }
        if !(self.theta > T::zero() && self.theta < T::one()) {
            return Err(Error::config(
                "theta",
                format!("{} is outside (0, 1)", self.theta),
            ));
        }
        if !(self.lambda >= T::zero() && self.lambda.is_finite()) {
            return Err(Error::config(
                "lambda",
                format!("{} is negative", self.lambda),
            ));
        }
        if self.episode_length == 0 {
            return Err(Error::config("episode_length", "must be at least 1"));
        }
        self.dynamics.validate(self.activities())
    }
}

/// Observable state of one device at one slot.
///
/// After the final step of an episode `slot == episode_length`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState<T> {
    pub activity: ActivityId,
    pub device: usize,
    pub f: T,
    pub slot: usize,
}

/// Quantities behind one step's reward.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo<T> {
    pub activity: ActivityId,
    pub alpha: SelectionVector,
    pub task: TaskSpec<T>,
    pub relevance: T,
    pub delay: T,
    pub energy: T,
    pub cost: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub next_state: EnvState<T>,
    pub reward: T,
    pub done: bool,
    pub info: StepInfo<T>,
}

/// Pre-built categorical samplers for the configured dynamics.
#[derive(Debug, Clone)]
pub struct TraceSampler {
    initial: WeightedIndex<f64>,
    rows: Option<Vec<WeightedIndex<f64>>>,
}

impl TraceSampler {
    pub fn new<T: Scalar>(dynamics: &ActivityDynamics<T>) -> Result<Self> {
        let build = |p: &[T]| {
            WeightedIndex::new(p.iter().map(|v| v.as_f64()))
                .map_err(|e| Error::invalid(format!("bad activity distribution: {e}")))
        };
        let initial = build(dynamics.initial())?;
        let rows = match dynamics {
            ActivityDynamics::Iid { .. } => None,
            ActivityDynamics::Markov { transition, .. } => Some(
                transition
                    .iter()
                    .map(|row| build(row))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(Self { initial, rows })
    }

    pub fn initial<R: Rng + ?Sized>(&self, rng: &mut R) -> ActivityId {
        ActivityId(self.initial.sample(rng))
    }

    pub fn next<R: Rng + ?Sized>(&self, current: ActivityId, rng: &mut R) -> ActivityId {
        match &self.rows {
            None => ActivityId(self.initial.sample(rng)),
            Some(rows) => ActivityId(rows[current.0].sample(rng)),
        }
    }
}

/// Samples the activity following `current`.
pub fn trace_next<T: Scalar, R: Rng + ?Sized>(
    current: ActivityId,
    dynamics: &ActivityDynamics<T>,
    rng: &mut R,
) -> Result<ActivityId> {
    Ok(TraceSampler::new(dynamics)?.next(current, rng))
}

/// Draws this slot's datasizes uniformly from their intervals.
pub fn sample_tasks<T: Scalar, R: Rng + ?Sized>(config: &EnvConfig<T>, rng: &mut R) -> TaskSpec<T> {
    let datasize = config
        .datasize_ranges
        .iter()
        .map(|[lo, hi]| {
            let u: f64 = rng.random();
            *lo + (*hi - *lo) * T::lit(u)
        })
        .collect();
    TaskSpec {
        datasize,
        cycles: config.cycles.clone(),
    }
}

/// Initial state of `device`, with the generator that drives the episode.
pub fn reset<T: Scalar>(
    config: &EnvConfig<T>,
    device: usize,
    seed: u64,
) -> Result<(EnvState<T>, ChaCha8Rng)> {
    let sampler = TraceSampler::new(&config.dynamics)?;
    reset_with(config, &sampler, device, seed)
}

fn reset_with<T: Scalar>(
    config: &EnvConfig<T>,
    sampler: &TraceSampler,
    device: usize,
    seed: u64,
) -> Result<(EnvState<T>, ChaCha8Rng)> {
    let dev = config.devices.get(device).ok_or_else(|| {
        Error::invalid(format!(
            "device {device} out of range ({} devices)",
            config.device_count()
        ))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let activity = sampler.initial(&mut rng);
    Ok((
        EnvState {
            activity,
            device,
            f: dev.f,
            slot: 0,
        },
        rng,
    ))
}

/// Applies `beta` in `state`: thresholds, samples the slot's tasks, scores
/// the selection and advances the activity trace.
pub fn step<T: Scalar, R: Rng + ?Sized>(
    config: &EnvConfig<T>,
    state: &EnvState<T>,
    beta: &WeightVector<T>,
    mode: Mode,
    rng: &mut R,
) -> Result<StepOutcome<T>> {
    let sampler = TraceSampler::new(&config.dynamics)?;
    step_with(config, &sampler, state, beta, mode, rng)
}

fn step_with<T: Scalar, R: Rng + ?Sized>(
    config: &EnvConfig<T>,
    sampler: &TraceSampler,
    state: &EnvState<T>,
    beta: &WeightVector<T>,
    mode: Mode,
    rng: &mut R,
) -> Result<StepOutcome<T>> {
    if state.slot >= config.episode_length {
        return Err(Error::EpisodeExhausted {
            slot: state.slot,
            length: config.episode_length,
        });
    }
    if beta.len() != config.metrics() {
        return Err(Error::invalid(format!(
            "action has {} weights, environment has {} metrics",
            beta.len(),
            config.metrics()
        )));
    }
    let dev = config
        .devices
        .get(state.device)
        .ok_or_else(|| Error::invalid(format!("device {} out of range", state.device)))?;
    let alpha = threshold_select(beta, config.theta)?;
    let task = sample_tasks(config, rng);
    let b = evaluate_selection(
        config.importance.row(state.activity),
        &alpha,
        &task,
        dev,
        config.lambda,
    )?;
    let next_activity = match mode {
        Mode::Static => state.activity,
        Mode::Dynamic => sampler.next(state.activity, rng),
    };
    let slot = state.slot + 1;
    Ok(StepOutcome {
        next_state: EnvState {
            activity: next_activity,
            slot,
            ..*state
        },
        reward: b.utility,
        done: slot == config.episode_length,
        info: StepInfo {
            activity: state.activity,
            alpha,
            task,
            relevance: b.relevance,
            delay: b.delay,
            energy: b.energy,
            cost: b.cost,
        },
    })
}

/// Exhaustively scores all `2^M` selections for `state` under `task`.
///
/// Ties keep the selection with the lowest bitmask.
pub fn brute_force_best<T: Scalar>(
    state: &EnvState<T>,
    task: &TaskSpec<T>,
    config: &EnvConfig<T>,
) -> Result<(SelectionVector, T)> {
    let metrics = config.metrics();
    if metrics > MAX_ORACLE_METRICS {
        return Err(Error::Capacity {
            what: "metric count for exhaustive search",
            got: metrics,
            limit: MAX_ORACLE_METRICS,
        });
    }
    let dev = config
        .devices
        .get(state.device)
        .ok_or_else(|| Error::invalid(format!("device {} out of range", state.device)))?;
    let importance = config.importance.row(state.activity);
    let mut best = (0u64, T::neg_infinity());
    for mask in 0..1u64 << metrics {
        let alpha = SelectionVector::from_mask(mask, metrics);
        let u = evaluate_selection(importance, &alpha, task, dev, config.lambda)?.utility;
        if u > best.1 {
            best = (mask, u);
        }
    }
    Ok((SelectionVector::from_mask(best.0, metrics), best.1))
}

/// One device's environment: owns its state and random stream.
#[derive(Debug, Clone)]
pub struct Env<T: Scalar> {
    config: Arc<EnvConfig<T>>,
    sampler: TraceSampler,
    device: usize,
    mode: Mode,
    state: EnvState<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Env<T> {
    pub fn new(config: Arc<EnvConfig<T>>, device: usize, mode: Mode) -> Result<Self> {
        let sampler = TraceSampler::new(&config.dynamics)?;
        let (state, rng) = reset_with(&config, &sampler, device, config.seed)?;
        Ok(Self {
            config,
            sampler,
            device,
            mode,
            state,
            rng,
        })
    }

    pub fn reset(&mut self, seed: u64) -> EnvState<T> {
        let (state, rng) = reset_with(&self.config, &self.sampler, self.device, seed)
            .expect("device index checked at construction");
        self.state = state;
        self.rng = rng;
        state
    }

    pub fn step(&mut self, beta: &WeightVector<T>) -> Result<StepOutcome<T>> {
        let out = step_with(
            &self.config,
            &self.sampler,
            &self.state,
            beta,
            self.mode,
            &mut self.rng,
        )?;
        self.state = out.next_state;
        Ok(out)
    }

    pub fn state(&self) -> &EnvState<T> {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig<T> {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

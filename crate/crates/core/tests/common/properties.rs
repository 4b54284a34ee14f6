//! Randomized invariants, runnable from both the test harness and the
//! acceptance runner.

use std::sync::Arc;

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use daahm::agents::{DdpgAgent, DdpgConfig, ReplayBuffer, StateEncoder, Transition};
use daahm::domain::{
    compute_cost, compute_delay, compute_energy, compute_relevance, threshold_select, ActivityId,
    DeviceSpec, SelectionVector, TaskSpec, WeightVector,
};
use daahm::env::{brute_force_best, reset, step, ActivityDynamics, Env, EnvConfig, EnvState, Mode};
use daahm::harness::config::{ExperimentConfig, Preset};
use daahm::nn::{soft_update, Activation, MlpParams};

pub const CASES: u32 = 1000;

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    if let Err(e) = runner.run(&strategy, test) {
        panic!("{e}");
    }
}

fn desk() -> EnvConfig<f64> {
    ExperimentConfig::preset(Preset::Desk).env
}

/// Importance row with at least one positive entry, plus a selection of the same length.
fn row_and_selection() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1..=12usize).prop_flat_map(|m| {
        (vec(0.0..=1.0f64, m), vec(any::<bool>(), m)).prop_map(|(mut row, alpha)| {
            if row.iter().all(|v| *v == 0.0) {
                row[0] = 0.5;
            }
            (row, alpha)
        })
    })
}

fn task_and_selection() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>, f64)> {
    (1..=12usize).prop_flat_map(|m| {
        (
            vec(0.0..1e6f64, m),
            vec(0.0..1e3f64, m),
            vec(any::<bool>(), m),
            1e7..3e9f64,
        )
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

pub fn relevance_scale_invariance() {
    run(
        CASES,
        (row_and_selection(), 1e-3..1e3f64),
        |((row, alpha), k)| {
            let alpha = SelectionVector::new(alpha);
            let scaled: Vec<f64> = row.iter().map(|v| k * v).collect();
            let a = compute_relevance(&row, &alpha).unwrap();
            let b = compute_relevance(&scaled, &alpha).unwrap();
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b} at k = {k}");
            Ok(())
        },
    );
}

pub fn relevance_bounds() {
    run(CASES, row_and_selection(), |(row, alpha)| {
        let r = compute_relevance(&row, &SelectionVector::new(alpha)).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r), "relevance {r}");
        Ok(())
    });
}

pub fn delay_linearity() {
    run(CASES, task_and_selection(), |(d, c, alpha, f)| {
        let task = TaskSpec::new(d, c).unwrap();
        let m = alpha.len();
        let total = compute_delay(&SelectionVector::new(alpha.clone()), &task, f).unwrap();
        let parts: f64 = (0..m)
            .filter(|i| alpha[*i])
            .map(|i| {
                let mut single = vec![false; m];
                single[i] = true;
                compute_delay(&SelectionVector::new(single), &task, f).unwrap()
            })
            .sum();
        prop_assert!(rel_close(total, parts, 1e-12), "{total} vs {parts}");
        Ok(())
    });
}

pub fn energy_proportionality() {
    run(
        CASES,
        (1e7..3e9f64, 0.0..10.0f64, 0.0..100.0f64),
        |(f, t, a)| {
            let dev = DeviceSpec::new(f, 1e-27, 3.0, 0.5).unwrap();
            let lhs = compute_energy(&dev, a * t).unwrap();
            let rhs = a * compute_energy(&dev, t).unwrap();
            prop_assert!(rel_close(lhs, rhs, 1e-12), "{lhs} vs {rhs}");
            Ok(())
        },
    );
}

pub fn cost_monotonicity() {
    run(
        CASES,
        (
            task_and_selection(),
            any::<prop::sample::Index>(),
            0.0..=1.0f64,
        ),
        |((d, c, alpha, f), idx, mu)| {
            let task = TaskSpec::new(d, c).unwrap();
            let dev = DeviceSpec::new(f, 1e-27, 3.0, mu).unwrap();
            let mut grown = alpha.clone();
            grown[idx.index(alpha.len())] = true;
            let cost_of = |a: Vec<bool>| {
                let t = compute_delay(&SelectionVector::new(a), &task, f).unwrap();
                let e = compute_energy(&dev, t).unwrap();
                (t, e, compute_cost(mu, e, t).unwrap())
            };
            let (t0, e0, c0) = cost_of(alpha);
            let (t1, e1, c1) = cost_of(grown);
            prop_assert!(
                t1 >= t0 && e1 >= e0 && c1 >= c0,
                "({t0}, {e0}, {c0}) -> ({t1}, {e1}, {c1})"
            );
            Ok(())
        },
    );
}

pub fn threshold_permutation_equivariance() {
    let beta = (1..=12usize).prop_flat_map(|m| {
        let entry = prop_oneof![0.0..=1.0f64, Just(0.5), Just(0.0), Just(1.0)];
        (
            vec(entry, m),
            Just((0..m).collect::<Vec<_>>()).prop_shuffle(),
        )
    });
    run(CASES, (beta, 0.01..0.99f64), |((beta, perm), theta)| {
        let theta = if perm.len() % 3 == 0 { 0.5 } else { theta };
        let permuted: Vec<f64> = perm.iter().map(|&i| beta[i]).collect();
        let alpha = threshold_select(&WeightVector::new(beta).unwrap(), theta).unwrap();
        let alpha_p = threshold_select(&WeightVector::new(permuted).unwrap(), theta).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            prop_assert_eq!(alpha_p.as_slice()[j], alpha.as_slice()[i]);
        }
        Ok(())
    });
}

/// Each of 10 stored items is drawn with frequency 0.1 +- 0.01 over 1e5 draws.
pub fn replay_uniformity() {
    const DRAWS: usize = 100_000;
    run(CASES, (any::<u64>(), 10..40usize), |(seed, pushes)| {
        let mut buffer = ReplayBuffer::new(10).unwrap();
        for i in 0..pushes {
            buffer
                .push(Transition {
                    state: vec![],
                    action: vec![],
                    reward: i as f64,
                    next_state: vec![],
                    done: false,
                })
                .unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = [0usize; 10];
        for _ in 0..DRAWS / 10 {
            for r in buffer.sample(10, &mut rng).unwrap().rewards {
                counts[r as usize % 10] += 1;
            }
        }
        for (i, c) in counts.iter().enumerate() {
            let freq = *c as f64 / DRAWS as f64;
            prop_assert!((freq - 0.1).abs() <= 0.01, "item {i}: {freq}");
        }
        Ok(())
    });
}

fn beta_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(0.0..=1.0f64, m)
}

pub fn oracle_dominance() {
    let cfg = desk();
    let m = cfg.metrics();
    run(
        CASES,
        (any::<u64>(), 0..3usize, vec(beta_strategy(m), 1..4)),
        |(seed, device, betas)| {
            let (mut state, mut rng) = reset(&cfg, device, seed).unwrap();
            for beta in betas {
                let out = step(
                    &cfg,
                    &state,
                    &WeightVector::new(beta).unwrap(),
                    Mode::Dynamic,
                    &mut rng,
                )
                .unwrap();
                let (best, u) = brute_force_best(&state, &out.info.task, &cfg).unwrap();
                prop_assert!(
                    u >= out.reward,
                    "oracle {u} ({:?}) below reward {}",
                    best,
                    out.reward
                );
                state = out.next_state;
            }
            Ok(())
        },
    );
}

pub fn reward_decomposition() {
    let cfg = desk();
    let m = cfg.metrics();
    run(
        CASES,
        (any::<u64>(), 0..3usize, beta_strategy(m)),
        |(seed, device, beta)| {
            let (state, mut rng) = reset(&cfg, device, seed).unwrap();
            let out = step(
                &cfg,
                &state,
                &WeightVector::new(beta.clone()).unwrap(),
                Mode::Static,
                &mut rng,
            )
            .unwrap();
            let dev = &cfg.devices[device];
            let alpha: Vec<bool> = beta.iter().map(|b| *b > cfg.theta).collect();
            let (d, c) = (&out.info.task.datasize, &out.info.task.cycles);
            let delay: f64 = (0..m)
                .filter(|i| alpha[*i])
                .map(|i| d[i] * c[i])
                .sum::<f64>()
                / dev.f;
            let energy = dev.rho * dev.f.powf(dev.zeta) * delay;
            let row = cfg.importance.row(state.activity);
            let chosen = alpha.iter().filter(|a| **a).count();
            let relevance = if chosen == 0 {
                0.0
            } else {
                let dot: f64 = (0..m).filter(|i| alpha[*i]).map(|i| row[i]).sum();
                dot / (row.iter().map(|v| v * v).sum::<f64>().sqrt() * (chosen as f64).sqrt())
            };
            let expected = relevance - cfg.lambda * (dev.mu * energy + (1.0 - dev.mu) * delay);
            prop_assert!(
                (out.reward - expected).abs() <= 1e-12,
                "{} vs {expected}",
                out.reward
            );
            prop_assert_eq!(out.reward, out.info.relevance - cfg.lambda * out.info.cost);
            Ok(())
        },
    );
}

fn network() -> impl Strategy<Value = (Vec<usize>, u64, u64)> {
    (vec(1..=12usize, 3), any::<u64>(), any::<u64>())
}

pub fn soft_update_contraction() {
    let acts = [Activation::Relu, Activation::Sigmoid];
    run(
        CASES,
        (network(), 1e-4..=1.0f64),
        |((sizes, s1, s2), tau)| {
            let main = MlpParams::<f64>::init(&sizes, &acts, s1).unwrap();
            let target = MlpParams::<f64>::init(&sizes, &acts, s2).unwrap();
            let mut updated = target.clone();
            soft_update(&mut updated, &main, tau).unwrap();
            for ((t, u), m) in target.iter().zip(updated.iter()).zip(main.iter()) {
                let want = (1.0 - tau) * (t - m);
                prop_assert!(((u - m) - want).abs() <= 1e-12, "{} vs {want}", u - m);
            }
            Ok(())
        },
    );
}

pub fn actor_outputs_in_open_unit_interval() {
    let cfg = desk();
    let encoder = StateEncoder::new(&cfg);
    let config = DdpgConfig::default();
    run(
        CASES,
        (any::<u64>(), 0..6usize, 0..3usize),
        |(seed, activity, device)| {
            let agent = DdpgAgent::<f64>::new(encoder.dim(), cfg.metrics(), &config, seed).unwrap();
            let state = EnvState {
                activity: ActivityId(activity),
                device,
                f: cfg.devices[device].f,
                slot: 0,
            };
            for b in agent.policy(&encoder.encode(&state)).unwrap() {
                prop_assert!(b > 0.0 && b < 1.0, "{b}");
            }
            Ok(())
        },
    );
}

pub fn environment_determinism() {
    let cfg = Arc::new(desk());
    let m = cfg.metrics();
    run(
        200,
        (any::<u64>(), 0..3usize, vec(beta_strategy(m), 1..50)),
        |(seed, device, betas)| {
            let mut a = Env::new(cfg.clone(), device, Mode::Dynamic).unwrap();
            let mut b = Env::new(cfg.clone(), device, Mode::Dynamic).unwrap();
            prop_assert_eq!(a.reset(seed), b.reset(seed));
            for beta in betas {
                let beta = WeightVector::new(beta).unwrap();
                let (x, y) = (a.step(&beta).unwrap(), b.step(&beta).unwrap());
                prop_assert_eq!(x.reward.to_bits(), y.reward.to_bits());
                prop_assert_eq!(x, y);
            }
            Ok(())
        },
    );
}

/// Activity marginal of a long iid trace stays within 3 binomial sigmas.
pub fn trace_stationarity() {
    let mut cfg = desk();
    let g = cfg.activities();
    let slots = 100_000;
    cfg.dynamics = ActivityDynamics::uniform_iid(g);
    cfg.episode_length = slots;
    let mut env = Env::new(Arc::new(cfg), 0, Mode::Dynamic).unwrap();
    env.reset(2024);
    let beta = WeightVector::new(vec![0.0; 6]).unwrap();
    let mut counts = vec![0usize; g];
    for _ in 0..slots {
        counts[env.step(&beta).unwrap().info.activity.0] += 1;
    }
    let p = 1.0 / g as f64;
    let sigma = (slots as f64 * p * (1.0 - p)).sqrt();
    for (a, c) in counts.iter().enumerate() {
        let z = (*c as f64 - slots as f64 * p) / sigma;
        assert!(z.abs() <= 3.0, "activity {a}: {c} draws, z = {z:.2}");
    }
}

pub const ALL: [(&str, fn()); 13] = [
    ("relevance scale invariance", relevance_scale_invariance),
    ("relevance bounds", relevance_bounds),
    ("delay linearity", delay_linearity),
    ("energy proportionality", energy_proportionality),
    ("cost monotonicity", cost_monotonicity),
    (
        "threshold permutation equivariance",
        threshold_permutation_equivariance,
    ),
    ("replay uniformity", replay_uniformity),
    ("oracle dominance", oracle_dominance),
    ("reward decomposition", reward_decomposition),
    ("soft update contraction", soft_update_contraction),
    ("actor output range", actor_outputs_in_open_unit_interval),
    ("environment determinism", environment_determinism),
    ("trace stationarity", trace_stationarity),
];

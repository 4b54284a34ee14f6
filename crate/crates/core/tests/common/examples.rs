//! Hand-derived reference values, frozen as literals.

use daahm::agents::{Batch, DdpgAgent, DdpgConfig, Transition};
use daahm::domain::{
    compute_cost, compute_delay, compute_energy, compute_relevance, per_step_utility,
    threshold_select, ActivityId, DeviceSpec, ImportanceMatrix, SelectionVector, TaskSpec,
    WeightVector,
};
use daahm::env::{brute_force_best, ActivityDynamics, EnvConfig, EnvState};
use daahm::nn::{adam_step, soft_update, Activation, Dense, Gradients, MlpParams, OptState};

const TOL: f64 = 1e-9;

fn close(got: f64, want: f64) {
    assert!((got - want).abs() <= TOL, "got {got:.15}, want {want:.15}");
}

fn sel(bits: &[u8]) -> SelectionVector {
    SelectionVector::new(bits.iter().map(|b| *b == 1).collect())
}

pub fn delay_energy_cost_relevance_utility_chain() {
    let task = TaskSpec::new(vec![4e5, 2e5, 1e5, 1e5], vec![100.0, 200.0, 50.0, 50.0]).unwrap();
    let delay = compute_delay(&sel(&[1, 1, 0, 0]), &task, 1e8).unwrap();
    close(delay, 0.8);

    let dev = DeviceSpec::new(1e8, 1e-27, 3.0, 0.5).unwrap();
    let energy = compute_energy(&dev, 0.8).unwrap();
    close(energy, 8e-4);

    let cost = compute_cost(0.5, 8e-4, 0.8).unwrap();
    close(cost, 0.4004);

    let relevance = compute_relevance(&[1.0, 0.8, 0.6, 0.0], &sel(&[1, 1, 0, 0])).unwrap();
    close(relevance, 0.9);

    close(per_step_utility(0.9, 0.4004, 1.0).unwrap(), 0.4996);
    close(per_step_utility(0.0, 0.0, 3.0).unwrap(), 0.0);
}

pub fn relevance_of_empty_selection_is_zero() {
    assert_eq!(compute_relevance(&[0.3, 0.7], &sel(&[0, 0])).unwrap(), 0.0);
}

pub fn threshold_is_strict() {
    let beta = WeightVector::new(vec![0.5, 0.51, 0.2, 0.9]).unwrap();
    assert_eq!(threshold_select(&beta, 0.5).unwrap(), sel(&[0, 1, 0, 1]));
}

fn two_metric(lambda: f64) -> EnvConfig<f64> {
    EnvConfig {
        importance: ImportanceMatrix::new(vec![vec![1.0, 0.5]]).unwrap(),
        devices: vec![DeviceSpec::new(1e8, 1e-27, 3.0, 0.5).unwrap()],
        datasize_ranges: vec![[1e5, 1e5], [4e5, 4e5]],
        cycles: vec![100.0, 100.0],
        theta: 0.5,
        lambda,
        episode_length: 1,
        dynamics: ActivityDynamics::uniform_iid(1),
        seed: 0,
    }
}

pub fn two_metric_oracle() {
    // |I| = sqrt(1.25). Selecting metric 0 costs 0.5 * 1e-4 + 0.5 * 0.1.
    let u_best = 1.0 / 1.25f64.sqrt() - 0.05005;
    close(u_best, 0.844_377_190_999_259_6);

    let cfg = two_metric(1.0);
    let state = EnvState {
        activity: ActivityId(0),
        device: 0,
        f: 1e8,
        slot: 0,
    };
    let task = TaskSpec::new(vec![1e5, 4e5], vec![100.0, 100.0]).unwrap();
    let (alpha, u) = brute_force_best(&state, &task, &cfg).unwrap();
    assert_eq!(alpha, sel(&[1, 0]));
    close(u, u_best);

    let dev = &cfg.devices[0];
    let utility = |bits: &[u8]| {
        let a = sel(bits);
        let t = compute_delay(&a, &task, dev.f).unwrap();
        let c = compute_cost(dev.mu, compute_energy(dev, t).unwrap(), t).unwrap();
        per_step_utility(compute_relevance(&[1.0, 0.5], &a).unwrap(), c, 1.0).unwrap()
    };
    close(utility(&[0, 0]), 0.0);
    close(utility(&[0, 1]), 0.5 / 1.25f64.sqrt() - 0.2002);
    close(
        utility(&[1, 1]),
        1.5 / (1.25f64.sqrt() * 2f64.sqrt()) - 0.25025,
    );
    assert!((utility(&[0, 1]) - 0.24701).abs() < 1e-5);
    assert!((utility(&[1, 1]) - 0.69843).abs() < 1e-5);

    // With lambda = 0 the full selection has cosine 0.9487 > 0.8944.
    let (alpha, u) = brute_force_best(&state, &task, &two_metric(0.0)).unwrap();
    assert_eq!(alpha, sel(&[1, 1]));
    close(u, 1.5 / (1.25f64.sqrt() * 2f64.sqrt()));
}

fn constant_critic(inputs: usize, value: f64) -> MlpParams<f64> {
    MlpParams::from_layers(vec![Dense::new(
        inputs,
        1,
        vec![0.0; inputs],
        vec![value],
        Activation::Identity,
    )
    .unwrap()])
    .unwrap()
}

pub fn td_target() {
    let config = DdpgConfig::default();
    let mut agent = DdpgAgent::<f64>::new(3, 2, &config, 4).unwrap();
    agent.target_critic = constant_critic(5, 1.0);
    let t = Transition {
        state: vec![1.0, 0.0, 0.5],
        action: vec![0.2, 0.9],
        reward: 0.5,
        next_state: vec![0.0, 1.0, 1.0],
        done: false,
    };
    let batch = Batch::from_transitions([&t]).unwrap();
    close(agent.td_targets(&batch).unwrap()[0], 1.49);
}

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

pub fn soft_update_step() {
    let mut target = scalar_net(0.0);
    soft_update(&mut target, &scalar_net(1.0), 0.005).unwrap();
    close(target.layers()[0].weights()[0], 0.005);
}

pub fn adam_first_step() {
    let mut p = scalar_net(0.0);
    let mut opt = OptState::new(&p, 0.1);
    let g = Gradients {
        weights: vec![vec![1.0]],
        biases: vec![vec![0.0]],
    };
    adam_step(&mut p, &g, &mut opt).unwrap();
    // Bias-corrected moments are both 1: step = -lr / (1 + eps).
    let w = p.layers()[0].weights()[0];
    close(w, -0.1 / (1.0 + 1e-8));
    close(w, -0.099_999_999);
}

pub const ALL: [(&str, fn()); 7] = [
    (
        "delay, energy, cost, relevance and utility chain",
        delay_energy_cost_relevance_utility_chain,
    ),
    (
        "empty selection relevance",
        relevance_of_empty_selection_is_zero,
    ),
    ("strict threshold", threshold_is_strict),
    ("two-metric oracle", two_metric_oracle),
    ("TD target", td_target),
    ("soft update", soft_update_step),
    ("Adam first step", adam_first_step),
];

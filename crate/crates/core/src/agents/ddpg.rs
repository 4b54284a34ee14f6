use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::agents::replay::Batch;
use crate::domain::WeightVector;
use crate::error::{Error, Result};
use crate::nn::{adam_step, soft_update, Activation, MlpParams, OptState};
use crate::scalar::Scalar;

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdpgConfig {
    pub hidden: usize,
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub noise_start: f64,
    pub noise_end: f64,
    /// Fraction of all training steps over which the noise decays linearly.
    pub noise_decay_fraction: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            batch_size: 64,
            replay_capacity: 50_000,
            warmup: 1_000,
            noise_start: 0.2,
            noise_end: 0.02,
            noise_decay_fraction: 0.5,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::config("agent.hidden", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(
                "agent.gamma",
                format!("{} is outside [0, 1)", self.gamma),
            ));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(
                "agent.tau",
                format!("{} is outside (0, 1]", self.tau),
            ));
        }
        for (key, lr) in [
            ("agent.actor_lr", self.actor_lr),
            ("agent.critic_lr", self.critic_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(key, format!("{lr} is not a positive rate")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("agent.batch_size", "must be positive"));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::config(
                "agent.replay_capacity",
                format!(
                    "{} cannot hold one batch of {}",
                    self.replay_capacity, self.batch_size
                ),
            ));
        }
        for (key, s) in [
            ("agent.noise_start", self.noise_start),
            ("agent.noise_end", self.noise_end),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config(
                    key,
                    format!("{s} is not a valid noise scale"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_decay_fraction) {
            return Err(Error::config(
                "agent.noise_decay_fraction",
                format!("{} is outside [0, 1]", self.noise_decay_fraction),
            ));
        }
        Ok(())
    }

    /// Exploration scale at `step` of `total` training steps.
    pub fn noise_at(&self, step: usize, total: usize) -> f64 {
        let horizon = self.noise_decay_fraction * total as f64;
        if horizon <= 0.0 || step as f64 >= horizon {
            return self.noise_end;
        }
        let frac = step as f64 / horizon;
        self.noise_start + (self.noise_end - self.noise_start) * frac
    }
}

/// Losses reported by one [`DdpgAgent::update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats<T> {
    pub critic_loss: T,
    /// Mean critic value of the actor's own actions before its update.
    pub actor_objective: T,
}

/// Actor, critic, their target copies and optimiser states.
#[derive(Debug, Clone)]
pub struct DdpgAgent<T: Scalar> {
    pub actor: MlpParams<T>,
    pub critic: MlpParams<T>,
    pub target_actor: MlpParams<T>,
    pub target_critic: MlpParams<T>,
    actor_opt: OptState<T>,
    critic_opt: OptState<T>,
    gamma: T,
    tau: T,
}

impl<T: Scalar> DdpgAgent<T> {
    /// Actor `state -> hidden -> action` (ReLU, sigmoid); critic
    /// `state + action -> hidden -> 1` (ReLU, identity).
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        config: &DdpgConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let actor = MlpParams::init(
            &[state_dim, config.hidden, action_dim],
            &[Activation::Relu, Activation::Sigmoid],
            seed,
        )?;
        let critic = MlpParams::init(
            &[state_dim + action_dim, config.hidden, 1],
            &[Activation::Relu, Activation::Identity],
            seed.wrapping_add(1),
        )?;
        Self::from_networks(actor, critic, config)
    }

    /// Wraps existing main networks; targets start as exact copies.
    pub fn from_networks(
        actor: MlpParams<T>,
        critic: MlpParams<T>,
        config: &DdpgConfig,
    ) -> Result<Self> {
        let state_dim = actor.input_dim();
        let action_dim = actor.output_dim();
        if critic.input_dim() != state_dim + action_dim || critic.output_dim() != 1 {
            return Err(Error::invalid(format!(
                "critic takes {} inputs and gives {} outputs, expected {} and 1",
                critic.input_dim(),
                critic.output_dim(),
                state_dim + action_dim
            )));
        }
        Ok(Self {
            actor_opt: OptState::new(&actor, T::lit(config.actor_lr)),
            critic_opt: OptState::new(&critic, T::lit(config.critic_lr)),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            gamma: T::lit(config.gamma),
            tau: T::lit(config.tau),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// Replaces all four networks, e.g. after loading a checkpoint.
    pub fn set_networks(
        &mut self,
        actor: MlpParams<T>,
        critic: MlpParams<T>,
        target_actor: MlpParams<T>,
        target_critic: MlpParams<T>,
    ) -> Result<()> {
        if !(actor.same_shape(&self.actor)
            && critic.same_shape(&self.critic)
            && target_actor.same_shape(&actor)
            && target_critic.same_shape(&critic))
        {
            return Err(Error::invalid(
                "replacement networks do not match the agent's shapes",
            ));
        }
        self.actor = actor;
        self.critic = critic;
        self.target_actor = target_actor;
        self.target_critic = target_critic;
        Ok(())
    }

    /// Deterministic policy output.
    pub fn policy(&self, state: &[T]) -> Result<Vec<T>> {
        self.actor.predict(state)
    }

    /// Policy output plus `N(0, noise_scale^2)` per entry, clamped to `[0, 1]`.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &[T],
        noise_scale: T,
        rng: &mut R,
    ) -> Result<WeightVector<T>> {
        let mut beta = self.policy(state)?;
        if noise_scale > T::zero() {
            for b in &mut beta {
                let z: f64 = StandardNormal.sample(rng);
                *b += noise_scale * T::lit(z);
            }
        }
        Ok(WeightVector::clamped(beta))
    }

    /// Bootstrapped critic targets `r + gamma * (1 - done) * Q'(s', mu'(s'))`.
    pub fn td_targets(&self, batch: &Batch<T>) -> Result<Vec<T>> {
        self.check_batch(batch)?;
        let n = batch.len();
        let next_actions = self.target_actor.forward_batch(&batch.next_states, n)?;
        let critic_in = concat_rows(
            &batch.next_states,
            self.state_dim(),
            next_actions.output(),
            self.action_dim(),
            n,
        );
        let q_next = self.target_critic.forward_batch(&critic_in, n)?;
        Ok(batch
            .rewards
            .iter()
            .zip(&batch.dones)
            .zip(q_next.output())
            .map(|((&r, &done), q)| if done { r } else { r + self.gamma * *q })
            .collect())
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("update needs a non-empty batch"));
        }
        if batch.state_dim != self.state_dim()
            || batch.action_dim != self.action_dim()
            || !batch.is_consistent()
        {
            return Err(Error::invalid(
                "transition does not match the agent's dimensions",
            ));
        }
        Ok(())
    }

    /// One critic step, one actor step, then soft target updates.
    pub fn update(&mut self, batch: &Batch<T>) -> Result<UpdateStats<T>> {
        self.check_batch(batch)?;
        let n = batch.len();
        let (s_dim, a_dim) = (self.state_dim(), self.action_dim());
        let inv_n = T::one() / T::lit(n as f64);
        let targets = self.td_targets(batch)?;

        // critic: mean squared TD error
        let states = &batch.states;
        let critic_in = concat_rows(states, s_dim, &batch.actions, a_dim, n);
        let q = self.critic.forward_batch(&critic_in, n)?;
        let residual: Vec<T> = q
            .output()
            .iter()
            .zip(&targets)
            .map(|(q, y)| *q - *y)
            .collect();
        let critic_loss = residual.iter().map(|d| *d * *d).sum::<T>() * inv_n;
        if !critic_loss.is_finite() {
            return Err(Error::PoisonedUpdate(format!(
                "critic loss {critic_loss} (batch {n}, targets finite: {}, q finite: {})",
                targets.iter().all(|y| y.is_finite()),
                q.output().iter().all(|v| v.is_finite())
            )));
        }
        let d_q: Vec<T> = residual.iter().map(|d| T::lit(2.0) * *d * inv_n).collect();
        let critic_grads = self.critic.param_gradients(&q, &d_q)?;
        adam_step(&mut self.critic, &critic_grads, &mut self.critic_opt)?;

        // actor: ascend Q(s, mu(s)) through the critic's action gradient
        let policy = self.actor.forward_batch(states, n)?;
        let critic_in = concat_rows(states, s_dim, policy.output(), a_dim, n);
        let q_pi = self.critic.forward_batch(&critic_in, n)?;
        let actor_objective = q_pi.output().iter().copied().sum::<T>() * inv_n;
        if !actor_objective.is_finite() {
            return Err(Error::PoisonedUpdate(format!(
                "actor objective {actor_objective} (batch {n})"
            )));
        }
        let d_action = self
            .critic
            .input_gradient_from(&q_pi, &vec![-inv_n; n], s_dim)?;
        let actor_grads = self.actor.param_gradients(&policy, &d_action)?;
        adam_step(&mut self.actor, &actor_grads, &mut self.actor_opt)?;

        soft_update(&mut self.target_critic, &self.critic, self.tau)?;
        soft_update(&mut self.target_actor, &self.actor, self.tau)?;

        Ok(UpdateStats {
            critic_loss,
            actor_objective,
        })
    }
}

fn concat_rows<T: Scalar>(
    left: &[T],
    l_dim: usize,
    right: &[T],
    r_dim: usize,
    rows: usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * (l_dim + r_dim));
    for r in 0..rows {
        out.extend_from_slice(&left[r * l_dim..(r + 1) * l_dim]);
        out.extend_from_slice(&right[r * r_dim..(r + 1) * r_dim]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::replay::Transition;
    use crate::nn::Dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_agent() -> DdpgAgent<f64> {
        DdpgAgent::new(
            3,
            2,
            &DdpgConfig {
                hidden: 8,
                ..DdpgConfig::default()
            },
            5,
        )
        .unwrap()
    }

    /// Critic whose output is the constant 1 regardless of input.
    fn constant_critic(inputs: usize) -> MlpParams<f64> {
        MlpParams::from_layers(vec![Dense::new(
            inputs,
            1,
            vec![0.0; inputs],
            vec![1.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    fn transition(reward: f64, done: bool) -> Transition<f64> {
        Transition {
            state: vec![1.0, 0.0, 0.5],
            action: vec![0.3, 0.8],
            reward,
            next_state: vec![0.0, 1.0, 0.5],
            done,
        }
    }

    #[test]
    fn td_target_examples() {
        let mut agent = tiny_agent();
        agent.target_critic = constant_critic(5);
        let t = transition(0.5, false);
        let y = agent
            .td_targets(&Batch::from_transitions([&t]).unwrap())
            .unwrap();
        assert!((y[0] - 1.49).abs() < 1e-12);
        let t = transition(0.5, true);
        assert_eq!(
            agent
                .td_targets(&Batch::from_transitions([&t]).unwrap())
                .unwrap(),
            vec![0.5]
        );
    }

    #[test]
    fn targets_move_by_tau() {
        let mut agent = tiny_agent();
        let before_actor = agent.target_actor.clone();
        let before_critic = agent.target_critic.clone();
        let batch = [transition(0.2, false), transition(-0.1, true)];
        agent
            .update(&Batch::from_transitions(&batch).unwrap())
            .unwrap();
        for (before, target, main) in [
            (&before_actor, &agent.target_actor, &agent.actor),
            (&before_critic, &agent.target_critic, &agent.critic),
        ] {
            for ((b, t), m) in before.iter().zip(target.iter()).zip(main.iter()) {
                let expected = 0.005 * m + 0.995 * b;
                assert!((t - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn act_examples() {
        let mut agent = tiny_agent();
        let s = [0.0, 1.0, 0.7];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            agent.act(&s, 0.0, &mut rng).unwrap(),
            agent.act(&s, 0.0, &mut rng).unwrap()
        );

        agent.actor.iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(
            agent.act(&s, 0.0, &mut rng).unwrap().as_slice(),
            &[0.5, 0.5]
        );

        for _ in 0..200 {
            let beta = agent.act(&s, 50.0, &mut rng).unwrap();
            assert!(beta.as_slice().iter().all(|b| (0.0..=1.0).contains(b)));
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let mut agent = tiny_agent();
        assert!(agent.update(&Batch::default()).is_err());
    }

    #[test]
    fn noise_schedule() {
        let cfg = DdpgConfig::default();
        assert_eq!(cfg.noise_at(0, 1000), 0.2);
        assert!((cfg.noise_at(250, 1000) - 0.11).abs() < 1e-12);
        assert_eq!(cfg.noise_at(500, 1000), 0.02);
        assert_eq!(cfg.noise_at(999, 1000), 0.02);
    }

    #[test]
    fn nan_reward_poisons_update() {
        let mut agent = tiny_agent();
        let t = transition(f64::NAN, true);
        let batch = Batch::from_transitions([&t]).unwrap();
        assert!(matches!(
            agent.update(&batch),
            Err(Error::PoisonedUpdate(_))
        ));
    }
}

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One `(s, a, r, s', done)` experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
    pub reward: T,
    pub next_state: Vec<T>,
    pub done: bool,
}

/// Transitions laid out as row-major arrays, one row per transition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch<T> {
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<T>,
    pub actions: Vec<T>,
    pub rewards: Vec<T>,
    pub next_states: Vec<T>,
    pub dones: Vec<bool>,
}

impl<T: Scalar> Batch<T> {
    fn with_capacity(state_dim: usize, action_dim: usize, rows: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            states: Vec::with_capacity(rows * state_dim),
            actions: Vec::with_capacity(rows * action_dim),
            rewards: Vec::with_capacity(rows),
            next_states: Vec::with_capacity(rows * state_dim),
            dones: Vec::with_capacity(rows),
        }
    }

    /// Packs transitions that share one state and action width.
    pub fn from_transitions<'a, I>(transitions: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Transition<T>>,
    {
        let mut out: Option<Self> = None;
        for t in transitions {
            let batch =
                out.get_or_insert_with(|| Self::with_capacity(t.state.len(), t.action.len(), 0));
            batch.check(t)?;
            batch.append(t);
        }
        Ok(out.unwrap_or_default())
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Whether every array holds exactly `len()` rows.
    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        self.states.len() == n * self.state_dim
            && self.next_states.len() == n * self.state_dim
            && self.actions.len() == n * self.action_dim
            && self.dones.len() == n
    }

    pub fn transition(&self, i: usize) -> Transition<T> {
        let (s, a) = (self.state_dim, self.action_dim);
        Transition {
            state: self.states[i * s..(i + 1) * s].to_vec(),
            action: self.actions[i * a..(i + 1) * a].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * s..(i + 1) * s].to_vec(),
            done: self.dones[i],
        }
    }

    fn check(&self, t: &Transition<T>) -> Result<()> {
        if t.state.len() != self.state_dim
            || t.next_state.len() != self.state_dim
            || t.action.len() != self.action_dim
        {
            return Err(Error::invalid(format!(
                "transition with state {}/{} and action {} does not fit rows of state {} and action {}",
                t.state.len(),
                t.next_state.len(),
                t.action.len(),
                self.state_dim,
                self.action_dim
            )));
        }
        Ok(())
    }

    fn append(&mut self, t: &Transition<T>) {
        self.states.extend_from_slice(&t.state);
        self.actions.extend_from_slice(&t.action);
        self.rewards.push(t.reward);
        self.next_states.extend_from_slice(&t.next_state);
        self.dones.push(t.done);
    }

    fn overwrite(&mut self, i: usize, t: &Transition<T>) {
        let (s, a) = (self.state_dim, self.action_dim);
        self.states[i * s..(i + 1) * s].copy_from_slice(&t.state);
        self.actions[i * a..(i + 1) * a].copy_from_slice(&t.action);
        self.rewards[i] = t.reward;
        self.next_states[i * s..(i + 1) * s].copy_from_slice(&t.next_state);
        self.dones[i] = t.done;
    }

    fn copy_row(&mut self, from: &Self, i: usize) {
        let (s, a) = (from.state_dim, from.action_dim);
        self.states
            .extend_from_slice(&from.states[i * s..(i + 1) * s]);
        self.actions
            .extend_from_slice(&from.actions[i * a..(i + 1) * a]);
        self.rewards.push(from.rewards[i]);
        self.next_states
            .extend_from_slice(&from.next_states[i * s..(i + 1) * s]);
        self.dones.push(from.dones[i]);
    }
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
/// The first push fixes the state and action widths.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    rows: Batch<T>,
    capacity: usize,
    cursor: usize,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(Self {
            rows: Batch::default(),
            capacity,
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition<T>) -> Result<()> {
        if self.rows.is_empty() {
            let rows = self.capacity.min(1 << 16);
            self.rows = Batch::with_capacity(t.state.len(), t.action.len(), rows);
        }
        self.rows.check(&t)?;
        if self.rows.len() < self.capacity {
            self.rows.append(&t);
        } else {
            self.rows.overwrite(self.cursor, &t);
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch<T>> {
        let len = self.rows.len();
        if batch == 0 || len < batch {
            return Err(Error::NotReady { len, batch });
        }
        let mut out = Batch::with_capacity(self.rows.state_dim, self.rows.action_dim, batch);
        for _ in 0..batch {
            out.copy_row(&self.rows, rng.random_range(0..len));
        }
        Ok(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = Transition<T>> + '_ {
        (0..self.len()).map(|i| self.rows.transition(i))
    }
}

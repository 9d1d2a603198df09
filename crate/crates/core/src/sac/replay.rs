use alloc::vec::Vec;

use rand::Rng;

use super::SacError;
use crate::rng::PushRng;

/// Packed minibatch. `dones[i]` is 1 for success/failure termination and 0
/// otherwise, truncation included.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub dones: Vec<f64>,
}

impl Batch {
    pub fn new(obs_dim: usize, action_dim: usize) -> Self {
        Self { obs_dim, action_dim, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, next_obs: &[f64], done: bool) {
        self.obs.extend_from_slice(obs);
        self.actions.extend_from_slice(action);
        self.rewards.push(reward);
        self.next_obs.extend_from_slice(next_obs);
        self.dones.push(if done { 1.0 } else { 0.0 });
    }
}

/// Ring buffer of transitions; the oldest entries are overwritten first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Batch,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(obs_dim: usize, action_dim: usize, capacity: usize) -> Self {
        Self { capacity, data: Batch::new(obs_dim, action_dim), next: 0, inserted: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, next_obs: &[f64], done: bool) -> Result<(), SacError> {
        let (o, a) = (self.data.obs_dim, self.data.action_dim);
        if obs.len() != o || next_obs.len() != o || action.len() != a {
            return Err(SacError::Dimension("replay transition"));
        }
        if !(obs.iter().chain(action).chain(next_obs).all(|v| v.is_finite()) && reward.is_finite()) {
            return Err(SacError::NonFinite("replay transition"));
        }
        if self.data.len() < self.capacity {
            self.data.push(obs, action, reward, next_obs, done);
        } else {
            let i = self.next;
            self.data.obs[i * o..(i + 1) * o].copy_from_slice(obs);
            self.data.actions[i * a..(i + 1) * a].copy_from_slice(action);
            self.data.rewards[i] = reward;
            self.data.next_obs[i * o..(i + 1) * o].copy_from_slice(next_obs);
            self.data.dones[i] = if done { 1.0 } else { 0.0 };
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
        Ok(())
    }

    /// Row `i` as `(obs, action, reward, next_obs, done)`.
    pub fn get(&self, i: usize) -> (&[f64], &[f64], f64, &[f64], bool) {
        let (o, a) = (self.data.obs_dim, self.data.action_dim);
        (
            &self.data.obs[i * o..(i + 1) * o],
            &self.data.actions[i * a..(i + 1) * a],
            self.data.rewards[i],
            &self.data.next_obs[i * o..(i + 1) * o],
            self.data.dones[i] != 0.0,
        )
    }

    /// Uniform draw with replacement.
    pub fn sample(&self, n: usize, rng: &mut PushRng) -> Batch {
        let mut b = Batch::new(self.data.obs_dim, self.data.action_dim);
        if self.is_empty() {
            return b;
        }
        for _ in 0..n {
            let (o, a, r, no, d) = self.get(rng.random_range(0..self.len()));
            b.push(o, a, r, no, d);
        }
        b
    }
}

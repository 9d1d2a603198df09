use alloc::vec::Vec;

use super::SacError;
use crate::env::{Action, GoalChoice, PolicyObservation, PushEnv};
use crate::rng::{self, Rng};

/// Outcome of one environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Success or failure: the value of the next state is not bootstrapped.
    pub terminated: bool,
    /// Time limit: the episode ends but bootstrapping continues.
    pub truncated: bool,
    pub success: bool,
}

/// Goal-conditioned episodic task with actions normalized to `[-1, 1]`.
pub trait GoalEnv {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Start an episode; `seed` fixes its goal.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, SacError>;
    fn step(&mut self, action: &[f64]) -> Result<EnvStep, SacError>;
}

/// Per-component scale bringing the tactile observation to unit order:
/// contact offsets are millimetres, goal offsets decimetres.
pub const PUSH_OBS_SCALE: [f64; 6] = [50.0, 50.0, 1.0, 5.0, 5.0, 1.0];

/// Pushing environment seen through the goal-aware observation.
#[derive(Debug, Clone)]
pub struct PushTask {
    env: PushEnv,
}

impl PushTask {
    pub fn new(env: PushEnv) -> Self {
        Self { env }
    }

    pub fn env(&self) -> &PushEnv {
        &self.env
    }

    pub fn into_inner(self) -> PushEnv {
        self.env
    }

    pub fn scale(obs: &PolicyObservation) -> Vec<f64> {
        obs.to_array().iter().zip(PUSH_OBS_SCALE).map(|(v, s)| v * s).collect()
    }
}

impl GoalEnv for PushTask {
    fn observation_dim(&self) -> usize {
        PolicyObservation::DIM
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, SacError> {
        let (obs, _) = self.env.reset(GoalChoice::Seeded(seed))?;
        Ok(Self::scale(&obs))
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, SacError> {
        if action.len() != 2 {
            return Err(SacError::Dimension("push action"));
        }
        let a = Action::from_normalized(action, self.env.config());
        let r = self.env.step(a)?;
        Ok(EnvStep {
            observation: Self::scale(&r.observation),
            reward: r.reward,
            terminated: r.terminated || r.failed,
            truncated: r.truncated,
            success: r.terminated,
        })
    }
}

/// One-step contextual bandit: context `s ∈ [-1, 1]²`, reward
/// `−‖a − a*(s)‖²` with `a*(s) = (0.6 s₀, 0.2 − 0.5 s₁)`. Success means
/// landing within 0.1 of the optimum.
#[derive(Debug, Clone, Default)]
pub struct BanditEnv {
    context: [f64; 2],
}

impl BanditEnv {
    pub fn optimum(context: &[f64]) -> [f64; 2] {
        [0.6 * context[0], 0.2 - 0.5 * context[1]]
    }
}

impl GoalEnv for BanditEnv {
    fn observation_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, SacError> {
        let mut r = rng::seeded(seed);
        self.context = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        Ok(self.context.to_vec())
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, SacError> {
        if action.len() != 2 {
            return Err(SacError::Dimension("bandit action"));
        }
        let o = Self::optimum(&self.context);
        let (e0, e1) = (action[0] - o[0], action[1] - o[1]);
        let d2 = e0 * e0 + e1 * e1;
        Ok(EnvStep { observation: self.context.to_vec(), reward: -d2, terminated: true, truncated: false, success: d2 < 0.01 })
    }
}

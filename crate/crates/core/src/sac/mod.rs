//! Off-policy maximum-entropy actor-critic: tanh-squashed Gaussian policy,
//! twin critics with soft-updated targets and a learned temperature.

mod agent;
mod policy;
mod replay;
mod task;
mod train;

pub use agent::{actor_loss, critic_loss, critic_targets, ActorLoss, SacAgent, TwinCritic, UpdateStats};
pub use policy::{squash_log_det, PolicyNet, PolicySample, LOG_STD_MAX, LOG_STD_MIN};
pub use replay::{Batch, ReplayBuffer};
pub use task::{BanditEnv, EnvStep, GoalEnv, PushTask, PUSH_OBS_SCALE};
pub use train::{sac_train, SacEpisode, SacEval, SacLog, SacOutcome, EVAL_TAG};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::EnvError;
use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SacError {
    #[error("invalid sac config: {0}")]
    Config(&'static str),
    #[error("batch of {0} transitions is too small (need at least 2)")]
    BatchTooSmall(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Uniform-random actions before the policy takes over.
    pub initial_random_steps: usize,
    /// Defaults to `−action_dim` when absent.
    pub target_entropy: Option<f64>,
    pub initial_alpha: f64,
    /// Temperature is learned when set, fixed at `initial_alpha` otherwise.
    pub learn_alpha: bool,
    pub updates_per_step: usize,
    pub hidden: Vec<usize>,
    /// Environment steps between deterministic evaluations; 0 disables.
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            batch_size: 256,
            replay_capacity: 1_000_000,
            initial_random_steps: 10_000,
            target_entropy: None,
            initial_alpha: 1.0,
            learn_alpha: true,
            updates_per_step: 1,
            hidden: vec![256, 256],
            eval_interval: 10_000,
            eval_episodes: 10,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(SacError::Config("gamma must lie in [0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(SacError::Config("tau must lie in (0, 1]"));
        }
        if [self.actor_lr, self.critic_lr, self.alpha_lr, self.initial_alpha].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(SacError::Config("learning rates and initial_alpha must be positive"));
        }
        if self.batch_size < 2 || self.replay_capacity == 0 || self.updates_per_step == 0 {
            return Err(SacError::Config("batch_size >= 2, replay_capacity and updates_per_step must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(SacError::Config("hidden layers must be non-empty and non-zero"));
        }
        if self.eval_interval > 0 && self.eval_episodes == 0 {
            return Err(SacError::Config("eval_episodes must be positive when evaluating"));
        }
        Ok(())
    }

    pub fn target_entropy_for(&self, action_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(action_dim as f64))
    }
}

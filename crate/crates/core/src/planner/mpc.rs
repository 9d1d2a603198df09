use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{cem_plan, mppi_plan, push_reward, ActionBox, CemConfig, Ensemble, EnsembleObjective, MppiConfig, Objective, PlannerError};
use crate::env::{Action, EnvConfig, Goal, ModelState};
use crate::rng::PushRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Cem(CemConfig),
    Mppi(MppiConfig),
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Cem(CemConfig::default())
    }
}

impl Optimizer {
    pub fn horizon(&self) -> usize {
        match self {
            Optimizer::Cem(c) => c.horizon,
            Optimizer::Mppi(m) => m.horizon,
        }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        match self {
            Optimizer::Cem(c) => c.validate(),
            Optimizer::Mppi(m) => m.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub optimizer: Optimizer,
    /// TS1 particles per candidate.
    pub particles: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { optimizer: Optimizer::default(), particles: 20 }
    }
}

/// Receding-horizon controller: plan, apply the first action, keep the
/// shifted remainder as the next warm start.
#[derive(Debug, Clone)]
pub struct Mpc {
    config: MpcConfig,
    bounds: ActionBox,
    warm: Vec<f64>,
    last_plan: Option<Vec<f64>>,
}

impl Mpc {
    pub fn new(config: MpcConfig, bounds: ActionBox) -> Result<Self, PlannerError> {
        config.optimizer.validate()?;
        if config.particles == 0 {
            return Err(PlannerError::Config("particles must be positive"));
        }
        let warm = bounds.center_sequence(config.optimizer.horizon());
        Ok(Self { config, bounds, warm, last_plan: None })
    }

    pub fn for_env(config: MpcConfig, env: &EnvConfig) -> Result<Self, PlannerError> {
        let (lo, hi) = env.action_bounds();
        Self::new(config, ActionBox::new(lo.to_vec(), hi.to_vec())?)
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn bounds(&self) -> &ActionBox {
        &self.bounds
    }

    pub fn horizon(&self) -> usize {
        self.config.optimizer.horizon()
    }

    pub fn warm_start(&self) -> &[f64] {
        &self.warm
    }

    pub fn last_plan(&self) -> Option<&[f64]> {
        self.last_plan.as_deref()
    }

    /// Forget the warm start (new episode).
    pub fn reset(&mut self) {
        self.warm = self.bounds.center_sequence(self.horizon());
        self.last_plan = None;
    }

    /// Plan against an arbitrary objective and return the first action.
    pub fn act_with(&mut self, objective: &mut impl Objective, rng: &mut PushRng) -> Result<Vec<f64>, PlannerError> {
        let plan = match &self.config.optimizer {
            Optimizer::Cem(c) => cem_plan(objective, &self.bounds, c, &self.warm, rng)?,
            Optimizer::Mppi(m) => mppi_plan(objective, &self.bounds, m, &self.warm, rng)?,
        };
        let a = self.bounds.dim();
        let mut seq = plan.actions;
        self.bounds.clamp_sequence(&mut seq);
        let first = seq[..a].to_vec();
        let mut warm = seq[a..].to_vec();
        warm.extend_from_slice(&seq[seq.len() - a..]);
        self.warm = warm;
        self.last_plan = Some(seq);
        Ok(first)
    }

    /// Plan through the ensemble under the pushing reward.
    pub fn act(
        &mut self,
        ensemble: &Ensemble,
        state: &ModelState,
        goal: Goal,
        env: &EnvConfig,
        rng: &mut PushRng,
    ) -> Result<Action, PlannerError> {
        let mut objective = EnsembleObjective {
            ensemble,
            start: state.to_array().to_vec(),
            horizon: self.horizon(),
            particles: self.config.particles,
            reward: push_reward(goal, env),
        };
        let a = self.act_with(&mut objective, rng)?;
        Ok(Action::new(a[0], a[1]))
    }
}

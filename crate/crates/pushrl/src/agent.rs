//! Uniform controller interface over the planner, the learned policy and a
//! scripted baseline.

use std::sync::Arc;

use pushrl_core::env::{Action, EnvConfig, Goal, ModelState, PolicyObservation};
use pushrl_core::planner::Mpc;
use pushrl_core::rng::{self, PushRng};
use pushrl_core::sac::{PushTask, SacAgent};

use crate::checkpoint::{MbModel, TrainedModel};
use crate::error::Result;

/// Episode-scoped controller. `reset` runs before every episode with that
/// episode's seed; `fork` yields an independent copy for another worker.
pub trait Agent: Send {
    fn name(&self) -> &str;
    fn reset(&mut self, env: &EnvConfig, seed: u64) -> Result<()>;
    fn act(&mut self, obs: &PolicyObservation, state: &ModelState, goal: Goal) -> Result<Action>;
    fn fork(&self) -> Box<dyn Agent>;
}

/// Ensemble + MPC. Planning noise comes from the episode seed.
pub struct MbAgent {
    model: Arc<MbModel>,
    env: EnvConfig,
    mpc: Option<Mpc>,
    rng: PushRng,
}

impl MbAgent {
    pub fn new(model: Arc<MbModel>) -> Self {
        Self { model, env: EnvConfig::default(), mpc: None, rng: rng::seeded(0) }
    }
}

impl Agent for MbAgent {
    fn name(&self) -> &str {
        "mb"
    }

    fn reset(&mut self, env: &EnvConfig, seed: u64) -> Result<()> {
        self.env = env.clone();
        self.mpc = Some(Mpc::for_env(self.model.mpc.clone(), env)?);
        self.rng = rng::stream(seed, 2);
        Ok(())
    }

    fn act(&mut self, _obs: &PolicyObservation, state: &ModelState, goal: Goal) -> Result<Action> {
        let mpc = match &mut self.mpc {
            Some(m) => m,
            None => self.mpc.insert(Mpc::for_env(self.model.mpc.clone(), &self.env)?),
        };
        Ok(mpc.act(&self.model.ensemble, state, goal, &self.env, &mut self.rng)?)
    }

    fn fork(&self) -> Box<dyn Agent> {
        Box::new(Self::new(self.model.clone()))
    }
}

/// Deterministic (mean) action of the squashed-Gaussian policy.
pub struct MfAgent {
    agent: Arc<SacAgent>,
    env: EnvConfig,
    rng: PushRng,
}

impl MfAgent {
    pub fn new(agent: Arc<SacAgent>) -> Self {
        Self { agent, env: EnvConfig::default(), rng: rng::seeded(0) }
    }
}

impl Agent for MfAgent {
    fn name(&self) -> &str {
        "mf"
    }

    fn reset(&mut self, env: &EnvConfig, seed: u64) -> Result<()> {
        self.env = env.clone();
        self.rng = rng::stream(seed, 2);
        Ok(())
    }

    fn act(&mut self, obs: &PolicyObservation, _state: &ModelState, _goal: Goal) -> Result<Action> {
        let a = self.agent.act(&PushTask::scale(obs), true, &mut self.rng)?;
        Ok(Action::from_normalized(&a, &self.env))
    }

    fn fork(&self) -> Box<dyn Agent> {
        Box::new(Self::new(self.agent.clone()))
    }
}

/// Always pushes straight ahead.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroAgent;

impl Agent for ZeroAgent {
    fn name(&self) -> &str {
        "zero"
    }

    fn reset(&mut self, _env: &EnvConfig, _seed: u64) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, _obs: &PolicyObservation, _state: &ModelState, _goal: Goal) -> Result<Action> {
        Ok(Action::new(0.0, 0.0))
    }

    fn fork(&self) -> Box<dyn Agent> {
        Box::new(*self)
    }
}

pub fn agent_for(model: TrainedModel) -> Box<dyn Agent> {
    match model {
        TrainedModel::Mb(m) => Box::new(MbAgent::new(Arc::new(m))),
        TrainedModel::Mf(a) => Box::new(MfAgent::new(Arc::new(a))),
    }
}

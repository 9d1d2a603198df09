use alloc::vec::Vec;
use core::ops::ControlFlow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{train_ensemble, Ensemble, EnsembleConfig, Mpc, MpcConfig, PlannerError, StateEncoding, TrainSettings, TransitionBuffer};
use crate::env::{Action, GoalChoice, ModelState, PushEnv};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PetsConfig {
    pub initial_random_episodes: usize,
    pub episodes_per_iteration: usize,
    pub train: TrainSettings,
    /// Hard cap on environment steps, random phase included.
    pub env_step_budget: usize,
    pub ensemble: EnsembleConfig,
    pub mpc: MpcConfig,
    pub buffer_capacity: usize,
}

impl Default for PetsConfig {
    fn default() -> Self {
        Self {
            initial_random_episodes: 5,
            episodes_per_iteration: 1,
            train: TrainSettings::default(),
            env_step_budget: 50_000,
            ensemble: EnsembleConfig::default(),
            mpc: MpcConfig::default(),
            buffer_capacity: 1_000_000,
        }
    }
}

impl PetsConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.env_step_budget == 0 {
            return Err(PlannerError::Config("env_step_budget must be positive"));
        }
        if self.episodes_per_iteration == 0 || self.buffer_capacity == 0 {
            return Err(PlannerError::Config("episodes_per_iteration and buffer_capacity must be positive"));
        }
        if !(self.train.holdout_fraction > 0.0 && self.train.holdout_fraction < 1.0) {
            return Err(PlannerError::Config("holdout_fraction must lie in (0, 1)"));
        }
        self.mpc.optimizer.validate()
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PetsIteration {
    pub iteration: usize,
    /// Cumulative environment steps after this iteration.
    pub env_steps: usize,
    pub episode_return: f64,
    pub success: bool,
    pub holdout_nll: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PetsLog {
    /// Steps spent in the random-action phase.
    pub random_steps: usize,
    pub iterations: Vec<PetsIteration>,
}

pub struct PetsOutcome {
    pub ensemble: Ensemble,
    pub log: PetsLog,
    pub buffer: TransitionBuffer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub steps: usize,
    pub episode_return: f64,
    pub success: bool,
}

/// Run one episode, recording every transition. Stops early when `budget`
/// steps have been taken.
fn collect_episode(
    env: &mut PushEnv,
    goal_seed: u64,
    budget: usize,
    buffer: &mut TransitionBuffer,
    mut policy: impl FnMut(&ModelState, &mut PushEnv) -> Result<Action, PlannerError>,
) -> Result<EpisodeSummary, PlannerError> {
    let (_, mut state) = env.reset(GoalChoice::Seeded(goal_seed))?;
    let mut out = EpisodeSummary { steps: 0, episode_return: 0.0, success: false };
    while out.steps < budget {
        let action = policy(&state, env)?;
        let r = env.step(action)?;
        buffer.push(&state.to_array(), &action.clamped(env.config()).to_array(), &r.model_state.to_array())?;
        out.steps += 1;
        out.episode_return += r.reward;
        state = r.model_state;
        if r.done() {
            out.success = r.terminated;
            break;
        }
    }
    Ok(out)
}

/// Random-action data collection followed by alternating model fitting and
/// MPC episodes until the step budget is spent. `on_iteration` may stop the
/// loop early.
pub fn pets_train(
    env: &mut PushEnv,
    config: &PetsConfig,
    seed: u64,
    mut on_iteration: impl FnMut(&PetsIteration, &Ensemble) -> ControlFlow<()>,
) -> Result<PetsOutcome, PlannerError> {
    config.validate()?;
    let mut init_rng = rng::stream(seed, 0);
    let mut train_rng = rng::stream(seed, 1);
    let mut plan_rng = rng::stream(seed, 2);
    let mut act_rng = rng::stream(seed, 3);
    let goal_seed = |episode: u64| rng::derive_seed(seed, episode);

    let mut ensemble = Ensemble::new(StateEncoding::ContactFrame, 2, &config.ensemble, &mut init_rng)?;
    let mut buffer = TransitionBuffer::new(ModelState::DIM, 2, config.buffer_capacity);
    let mut log = PetsLog::default();
    let mut steps = 0usize;
    let mut episode = 0u64;
    let env_cfg = env.config().clone();

    for _ in 0..config.initial_random_episodes {
        if steps >= config.env_step_budget {
            break;
        }
        let s = collect_episode(env, goal_seed(episode), config.env_step_budget - steps, &mut buffer, |_, _| {
            Ok(Action::new(
                act_rng.random_range(-env_cfg.dy_max..=env_cfg.dy_max),
                act_rng.random_range(-env_cfg.dtheta_max..=env_cfg.dtheta_max),
            ))
        })?;
        steps += s.steps;
        episode += 1;
    }
    log.random_steps = steps;

    let mut mpc = Mpc::for_env(config.mpc.clone(), &env_cfg)?;
    let mut iteration = 0;
    while steps < config.env_step_budget {
        let report = train_ensemble(&mut ensemble, &buffer, &config.train, &mut train_rng)?;
        let holdout_nll = report.final_holdout_nll();
        let mut last = EpisodeSummary { steps: 0, episode_return: 0.0, success: false };
        for _ in 0..config.episodes_per_iteration {
            if steps >= config.env_step_budget {
                break;
            }
            mpc.reset();
            last = collect_episode(env, goal_seed(episode), config.env_step_budget - steps, &mut buffer, |s, env| {
                let goal = env.goal().expect("reset");
                mpc.act(&ensemble, s, goal, &env_cfg, &mut plan_rng)
            })?;
            steps += last.steps;
            episode += 1;
        }
        let row = PetsIteration { iteration, env_steps: steps, episode_return: last.episode_return, success: last.success, holdout_nll };
        iteration += 1;
        let flow = on_iteration(&row, &ensemble);
        log.iterations.push(row);
        if flow.is_break() {
            break;
        }
    }
    // Final fit on everything collected.
    train_ensemble(&mut ensemble, &buffer, &config.train, &mut train_rng)?;
    Ok(PetsOutcome { ensemble, log, buffer })
}

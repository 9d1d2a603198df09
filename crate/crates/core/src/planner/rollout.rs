use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Ensemble, Objective, PlannerError};
use crate::env::{model_state_reward, EnvConfig, Goal, ModelState};
use crate::rng::PushRng;

/// Reward of reaching a predicted state, and whether the task ends there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReward {
    pub reward: f64,
    pub terminal: bool,
}

/// Pushing reward on predicted model states; reaching the goal ends the
/// trajectory and later steps score zero.
pub fn push_reward(goal: Goal, config: &EnvConfig) -> impl Fn(&[f64]) -> StepReward + '_ {
    move |s: &[f64]| {
        let state = ModelState::from_slice(s);
        let dx = state.x_o - goal.x;
        let dy = state.y_o - goal.y;
        StepReward { reward: model_state_reward(&state, &goal, config), terminal: libm::hypot(dx, dy) <= config.success_tolerance }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Per particle, `(horizon + 1) × state_dim` packed states.
    pub states: Vec<Vec<f64>>,
    /// Per particle return.
    pub returns: Vec<f64>,
    pub mean_return: f64,
}

/// TS1 propagation of `particles` copies of `start` under one action
/// sequence: every particle re-draws its ensemble member at every step.
pub fn rollout_ts1_with(
    ensemble: &Ensemble,
    start: &[f64],
    actions: &[f64],
    horizon: usize,
    particles: usize,
    reward: impl Fn(&[f64]) -> StepReward,
    rng: &mut PushRng,
) -> Result<Rollout, PlannerError> {
    let sd = ensemble.state_dim();
    let ad = ensemble.action_dim();
    if start.len() != sd {
        return Err(PlannerError::Dimension("start state"));
    }
    if actions.len() != horizon * ad {
        return Err(PlannerError::Dimension("action sequence length vs horizon"));
    }
    if particles == 0 {
        return Err(PlannerError::Config("particles must be positive"));
    }
    let mut states: Vec<Vec<f64>> = vec![start.to_vec(); particles];
    let mut cur = start.repeat(particles);
    let mut returns = vec![0.0; particles];
    let mut alive = vec![true; particles];
    let mut members = vec![0usize; particles];
    let mut acts = vec![0.0; particles * ad];
    for k in 0..horizon {
        for p in 0..particles {
            members[p] = rng.random_range(0..ensemble.len());
            acts[p * ad..(p + 1) * ad].copy_from_slice(&actions[k * ad..(k + 1) * ad]);
        }
        ensemble.step_batch(&mut cur, &acts, &members, true, rng);
        for p in 0..particles {
            let s = &cur[p * sd..(p + 1) * sd];
            states[p].extend_from_slice(s);
            if alive[p] {
                let r = reward(s);
                returns[p] += r.reward;
                alive[p] = !r.terminal;
            }
        }
    }
    let mean_return = returns.iter().sum::<f64>() / particles as f64;
    Ok(Rollout { states, returns, mean_return })
}

/// [`rollout_ts1_with`] scored by the pushing reward.
#[allow(clippy::too_many_arguments)]
pub fn rollout_ts1(
    ensemble: &Ensemble,
    start: &ModelState,
    actions: &[f64],
    horizon: usize,
    particles: usize,
    goal: Goal,
    config: &EnvConfig,
    rng: &mut PushRng,
) -> Result<Rollout, PlannerError> {
    rollout_ts1_with(ensemble, &start.to_array(), actions, horizon, particles, push_reward(goal, config), rng)
}

/// Candidate scoring by batched TS1 rollouts through the ensemble.
pub struct EnsembleObjective<'a, F: Fn(&[f64]) -> StepReward> {
    pub ensemble: &'a Ensemble,
    pub start: Vec<f64>,
    pub horizon: usize,
    pub particles: usize,
    pub reward: F,
}

impl<F: Fn(&[f64]) -> StepReward> Objective for EnsembleObjective<'_, F> {
    fn evaluate(&mut self, candidates: &[f64], count: usize, rng: &mut PushRng) -> Vec<f64> {
        let sd = self.ensemble.state_dim();
        let ad = self.ensemble.action_dim();
        let len = self.horizon * ad;
        let rows = count * self.particles;
        let mut cur = self.start.repeat(rows);
        let mut totals = vec![0.0; rows];
        let mut alive = vec![true; rows];
        let mut members = vec![0usize; rows];
        let mut acts = vec![0.0; rows * ad];
        for k in 0..self.horizon {
            for r in 0..rows {
                let c = r / self.particles;
                members[r] = rng.random_range(0..self.ensemble.len());
                acts[r * ad..(r + 1) * ad].copy_from_slice(&candidates[c * len + k * ad..c * len + (k + 1) * ad]);
            }
            self.ensemble.step_batch(&mut cur, &acts, &members, true, rng);
            for r in 0..rows {
                if alive[r] {
                    let s = (self.reward)(&cur[r * sd..(r + 1) * sd]);
                    totals[r] += s.reward;
                    alive[r] = !s.terminal;
                }
            }
        }
        totals.chunks_exact(self.particles).map(|c| c.iter().sum::<f64>() / self.particles as f64).collect()
    }
}

use alloc::vec::Vec;
use core::ops::ControlFlow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GoalEnv, ReplayBuffer, SacAgent, SacConfig, SacError};
use crate::planner::ActionBox;
use crate::rng::{self, PushRng};

/// Goal seeds of evaluation episodes live in their own range so they never
/// coincide with training goals.
pub const EVAL_TAG: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacEpisode {
    /// Cumulative environment steps at the end of the episode.
    pub env_steps: usize,
    pub episode_return: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacEval {
    pub env_steps: usize,
    pub mean_return: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SacLog {
    pub episodes: Vec<SacEpisode>,
    pub evals: Vec<SacEval>,
}

pub struct SacOutcome {
    pub agent: SacAgent,
    pub log: SacLog,
    pub env_steps: usize,
    pub replay: ReplayBuffer,
}

/// Deterministic-policy evaluation on the fixed evaluation goal set.
fn evaluate<E: GoalEnv>(agent: &SacAgent, env: &mut E, seed: u64, episodes: usize, rng: &mut PushRng) -> Result<(f64, f64), SacError> {
    let mut total = 0.0;
    let mut successes = 0;
    for k in 0..episodes {
        let mut obs = env.reset(rng::derive_seed(seed, EVAL_TAG + k as u64))?;
        loop {
            let a = agent.act(&obs, true, rng)?;
            let s = env.step(&a)?;
            total += s.reward;
            obs = s.observation;
            if s.terminated || s.truncated {
                successes += s.success as usize;
                break;
            }
        }
    }
    Ok((total / episodes as f64, successes as f64 / episodes as f64))
}

/// Act, store, update until `budget_steps` environment steps are spent.
/// Evaluations every `eval_interval` steps are passed to `on_eval`, which may
/// stop training early.
pub fn sac_train<E: GoalEnv>(
    mut make_env: impl FnMut() -> Result<E, SacError>,
    config: &SacConfig,
    budget_steps: usize,
    seed: u64,
    mut on_eval: impl FnMut(&SacEval, &SacAgent) -> ControlFlow<()>,
) -> Result<SacOutcome, SacError> {
    config.validate()?;
    if budget_steps == 0 {
        return Err(SacError::Config("budget_steps must be positive"));
    }
    let mut env = make_env()?;
    let mut eval_env = make_env()?;
    let (od, ad) = (env.observation_dim(), env.action_dim());
    let mut init_rng = rng::stream(seed, 0);
    let mut act_rng = rng::stream(seed, 1);
    let mut update_rng = rng::stream(seed, 2);
    let mut eval_rng = rng::stream(seed, 3);

    let bounds = ActionBox::symmetric(&alloc::vec![1.0; ad]);
    let mut agent = SacAgent::new(od, bounds, config.clone(), &mut init_rng)?;
    let mut replay = ReplayBuffer::new(od, ad, config.replay_capacity);
    let mut log = SacLog::default();

    let mut episode = 0u64;
    let mut obs = env.reset(rng::derive_seed(seed, episode))?;
    let mut ret = 0.0;
    let mut steps = 0;
    while steps < budget_steps {
        let action: Vec<f64> = if steps < config.initial_random_steps {
            (0..ad).map(|_| act_rng.random_range(-1.0..=1.0)).collect()
        } else {
            agent.act(&obs, false, &mut act_rng)?
        };
        let s = env.step(&action)?;
        replay.push(&obs, &action, s.reward, &s.observation, s.terminated)?;
        steps += 1;
        ret += s.reward;
        obs = s.observation;
        if s.terminated || s.truncated {
            log.episodes.push(SacEpisode { env_steps: steps, episode_return: ret, success: s.success });
            episode += 1;
            obs = env.reset(rng::derive_seed(seed, episode))?;
            ret = 0.0;
        }

        if steps >= config.initial_random_steps && replay.len() >= config.batch_size {
            for _ in 0..config.updates_per_step {
                let batch = replay.sample(config.batch_size, &mut update_rng);
                agent.update(&batch, &mut update_rng)?;
            }
        }

        if config.eval_interval > 0 && steps % config.eval_interval == 0 {
            let (mean_return, success_rate) = evaluate(&agent, &mut eval_env, seed, config.eval_episodes, &mut eval_rng)?;
            let e = SacEval { env_steps: steps, mean_return, success_rate };
            let flow = on_eval(&e, &agent);
            log.evals.push(e);
            if flow.is_break() {
                break;
            }
        }
    }
    Ok(SacOutcome { agent, log, env_steps: steps, replay })
}

//! Evaluation protocol: goal sets, disturbances, parallel episode runs and
//! summary statistics.

use std::path::PathBuf;
use std::time::Instant;

use pushrl_core::env::{Action, EnvConfig, Goal, GoalChoice, PushEnv, Workspace};
use pushrl_core::geom::{Pose2, Vec2};
use pushrl_core::physics::{ContactMode, PusherParams};
use pushrl_core::rng;
use serde::{Deserialize, Serialize};

use crate::agent::{agent_for, Agent, ZeroAgent};
use crate::checkpoint::{load_model, AgentKind};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::objects::ObjectLibrary;

/// Seed tag of held-out band goals; training episodes use small tags.
const HELD_OUT_TAG: u64 = 1 << 41;

pub const BUILTIN_SCENARIOS: [&str; 6] =
    ["cube-grid", "cube-band", "disturb-angle-pos", "disturb-angle-neg", "disturb-cof", "objects-grid"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Disturbance {
    None,
    /// Object rotated about the initial contact point.
    ContactAngleOffset {
        radians: f64,
    },
    /// Center of friction displaced in the body frame.
    CofOffset {
        offset: Vec2,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum GoalSpec {
    List {
        goals: Vec<Goal>,
    },
    /// Cell-centred lattice, `counts = [nx, ny]`.
    Grid {
        counts: [usize; 2],
        min_distance: f64,
    },
    /// Draws from the training goal distribution under seeds disjoint from
    /// the training episodes.
    Band {
        count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRef {
    Mb,
    Mf,
    Zero,
}

impl AgentRef {
    pub const NAMES: [&'static str; 3] = ["mb", "mf", "zero"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mb" => Ok(AgentRef::Mb),
            "mf" => Ok(AgentRef::Mf),
            "zero" => Ok(AgentRef::Zero),
            _ => Err(Error::unknown("agent", name, Self::NAMES)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: AgentRef,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub object: String,
    pub goals: GoalSpec,
    pub trials: usize,
    pub disturbance: Disturbance,
    pub agent: AgentSpec,
    pub seed: u64,
}

/// Everything a scenario needs besides its spec.
#[derive(Debug, Clone)]
pub struct ScenarioContext {
    pub env: EnvConfig,
    pub library: ObjectLibrary,
    pub pusher: PusherParams,
    /// Worker cap; 0 means one per available core.
    pub threads: usize,
}

impl ScenarioContext {
    pub fn new(env: EnvConfig) -> Self {
        Self { env, library: ObjectLibrary::builtin(), pusher: PusherParams::default(), threads: 0 }
    }

    fn workers(&self, episodes: usize) -> usize {
        let cap = if self.threads == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { self.threads };
        cap.clamp(1, episodes.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    ContactLost,
    Timeout,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Success => "success",
            Status::ContactLost => "contact_lost",
            Status::Timeout => "timeout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "success" => Some(Status::Success),
            "contact_lost" => Some(Status::ContactLost),
            "timeout" => Some(Status::Timeout),
            _ => None,
        }
    }
}

/// State after step `step`. Row 0 is the reset state: zero action, zero
/// reward and no contact mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub pusher: Pose2,
    pub object: Pose2,
    pub contact: Pose2,
    /// Action as applied, after clamping.
    pub action: Action,
    pub reward: f64,
    pub mode: Option<ContactMode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode_id: usize,
    pub goal: Goal,
    pub seed: u64,
    pub status: Status,
    /// `steps[k].step == k`; never empty.
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn env_steps(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Polyline length of the contact point trajectory.
    pub fn path_length(&self) -> f64 {
        self.steps.windows(2).map(|w| (w[1].contact.position() - w[0].contact.position()).norm()).sum()
    }

    /// Distance from the first to the last contact point.
    pub fn straight_line(&self) -> f64 {
        match (self.steps.first(), self.steps.last()) {
            (Some(a), Some(b)) => (b.contact.position() - a.contact.position()).norm(),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryStats {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    /// Population standard deviation.
    pub std_return: f64,
    /// Over successful episodes; absent without any.
    pub mean_path_length: Option<f64>,
    pub mean_steps: f64,
}

impl SummaryStats {
    pub fn from_logs(logs: &[EpisodeLog]) -> Self {
        let n = logs.len();
        let successes = logs.iter().filter(|l| l.status == Status::Success).count();
        let mean = |xs: &mut dyn Iterator<Item = f64>, k: usize| if k == 0 { 0.0 } else { xs.sum::<f64>() / k as f64 };
        let mean_return = mean(&mut logs.iter().map(|l| l.episode_return()), n);
        let var = mean(&mut logs.iter().map(|l| (l.episode_return() - mean_return).powi(2)), n);
        let mean_path_length =
            (successes > 0).then(|| mean(&mut logs.iter().filter(|l| l.status == Status::Success).map(|l| l.path_length()), successes));
        Self {
            episodes: n,
            successes,
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            mean_return,
            std_return: var.sqrt(),
            mean_path_length,
            mean_steps: mean(&mut logs.iter().map(|l| l.env_steps() as f64), n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub logs: Vec<EpisodeLog>,
    pub stats: SummaryStats,
    pub wall_clock_s: f64,
}

/// Cell-centred `nx × ny` lattice over the workspace, x-major, keeping goals
/// at least `min_distance` from `start`.
pub fn goal_grid(workspace: &Workspace, counts: [usize; 2], min_distance: f64, start: Vec2) -> Vec<Goal> {
    let [nx, ny] = counts;
    let mut goals = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let g = Goal::new(
                workspace.x_min + workspace.width() * (i as f64 + 0.5) / nx as f64,
                workspace.y_min + workspace.height() * (j as f64 + 0.5) / ny as f64,
            );
            if (g.position() - start).norm() >= min_distance {
                goals.push(g);
            }
        }
    }
    goals
}

/// Held-out goals from the training distribution of `env`.
pub fn band_goals(env: &EnvConfig, count: usize, seed: u64) -> Vec<Goal> {
    (0..count).map(|k| env.sample_goal(&mut rng::seeded(rng::derive_seed(seed, HELD_OUT_TAG + k as u64)))).collect()
}

impl ScenarioSpec {
    pub fn goals(&self, env: &EnvConfig) -> Vec<Goal> {
        match &self.goals {
            GoalSpec::List { goals } => goals.clone(),
            GoalSpec::Grid { counts, min_distance } => goal_grid(&env.workspace, *counts, *min_distance, Vec2::ZERO),
            GoalSpec::Band { count } => band_goals(env, *count, self.seed),
        }
    }

    pub fn validate(&self, env: &EnvConfig) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario `{}`: {m}", self.name)));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if let Some(g) = self.goals(env).iter().find(|g| !env.workspace.contains(g.position())) {
            return bad(format!("goal ({}, {}) outside the workspace", g.x, g.y));
        }
        match self.disturbance {
            Disturbance::ContactAngleOffset { radians } if !radians.is_finite() => bad("angle offset must be finite".into()),
            Disturbance::CofOffset { offset } if !offset.is_finite() => bad("cof offset must be finite".into()),
            _ => Ok(()),
        }
    }

    /// The environment this scenario runs in.
    pub fn build_env(&self, ctx: &ScenarioContext) -> Result<PushEnv> {
        let entry = ctx.library.get(&self.object)?;
        let mut slider = entry.slider;
        let mut angle = 0.0;
        match self.disturbance {
            Disturbance::None => {}
            Disturbance::ContactAngleOffset { radians } => angle = radians,
            Disturbance::CofOffset { offset } => slider.cof_offset = offset,
        }
        let env = PushEnv::new(ctx.env.clone(), entry.shape.clone(), slider, ctx.pusher)?;
        Ok(env.with_contact_angle_offset(angle))
    }
}

/// Named scenarios built from the shared knobs. `objects-grid` yields one
/// spec per library object.
pub fn builtin_scenarios(
    name: &str,
    knobs: &ScenarioConfig,
    library: &ObjectLibrary,
    agent: AgentSpec,
    seed: u64,
) -> Result<Vec<ScenarioSpec>> {
    let grid = GoalSpec::Grid { counts: knobs.grid, min_distance: knobs.min_distance };
    let band = GoalSpec::Band { count: knobs.band_goals };
    let spec = |object: &str, goals: GoalSpec, trials, disturbance| ScenarioSpec {
        name: name.to_string(),
        object: object.to_string(),
        goals,
        trials,
        disturbance,
        agent: agent.clone(),
        seed,
    };
    let angle = knobs.angle_offset_deg.to_radians();
    Ok(match name {
        "cube-grid" => vec![spec("square", grid, knobs.trials, Disturbance::None)],
        "cube-band" => vec![spec("square", band, 1, Disturbance::None)],
        "disturb-angle-pos" => vec![spec("square", band, 1, Disturbance::ContactAngleOffset { radians: angle })],
        "disturb-angle-neg" => vec![spec("square", band, 1, Disturbance::ContactAngleOffset { radians: -angle })],
        "disturb-cof" => vec![spec("square", band, 1, Disturbance::CofOffset { offset: knobs.cof_offset })],
        "objects-grid" => library.names().map(|o| spec(o, grid.clone(), knobs.trials, Disturbance::None)).collect(),
        _ => return Err(Error::unknown("scenario", name, BUILTIN_SCENARIOS)),
    })
}

fn record(env: &PushEnv, step: usize, action: Action, reward: f64, mode: Option<ContactMode>) -> Result<StepRecord> {
    let missing = || Error::format("episode", "environment has no state");
    Ok(StepRecord {
        step,
        pusher: env.pusher_pose().ok_or_else(missing)?,
        object: env.object_pose().ok_or_else(missing)?,
        contact: env.contact().ok_or_else(missing)?.frame(),
        action,
        reward,
        mode,
    })
}

/// One episode towards `goal`; the agent is reset with `seed` first.
pub fn run_episode(env: &mut PushEnv, agent: &mut dyn Agent, goal: Goal, episode_id: usize, seed: u64) -> Result<EpisodeLog> {
    agent.reset(env.config(), seed)?;
    let (mut obs, mut state) = env.reset(GoalChoice::Fixed(goal))?;
    let mut steps = vec![record(env, 0, Action::new(0.0, 0.0), 0.0, None)?];
    loop {
        let action = agent.act(&obs, &state, goal)?.clamped(env.config());
        let r = env.step(action)?;
        steps.push(record(env, steps.len(), action, r.reward, Some(r.info.mode))?);
        (obs, state) = (r.observation, r.model_state);
        let status = if r.terminated {
            Status::Success
        } else if r.failed {
            Status::ContactLost
        } else if r.truncated {
            Status::Timeout
        } else {
            continue;
        };
        return Ok(EpisodeLog { episode_id, goal, seed, status, steps });
    }
}

/// Loads the agent named by the spec, then runs it.
pub fn run_scenario(spec: &ScenarioSpec, ctx: &ScenarioContext) -> Result<ScenarioRun> {
    let agent: Box<dyn Agent> = match spec.agent.kind {
        AgentRef::Zero => Box::new(ZeroAgent),
        kind => {
            let path = spec.agent.checkpoint.as_ref().ok_or_else(|| Error::Config(format!("agent `{kind:?}` needs a checkpoint path")))?;
            let model = load_model(path)?;
            let want = if kind == AgentRef::Mb { AgentKind::Mb } else { AgentKind::Mf };
            if model.kind() != want {
                return Err(Error::Config(format!(
                    "{} holds a `{}` agent, not `{}`",
                    path.display(),
                    model.kind().as_str(),
                    want.as_str()
                )));
            }
            agent_for(model)
        }
    };
    run_scenario_with(spec, ctx, agent.as_ref())
}

/// Runs `trials` episodes per goal, goal-major. Episode `i` is seeded by
/// `derive_seed(spec.seed, i)` and runs on a forked agent, so the result does
/// not depend on the worker count.
pub fn run_scenario_with(spec: &ScenarioSpec, ctx: &ScenarioContext, agent: &dyn Agent) -> Result<ScenarioRun> {
    spec.validate(&ctx.env)?;
    let env = spec.build_env(ctx)?;
    let jobs: Vec<(usize, Goal)> = spec.goals(&ctx.env).into_iter().flat_map(|g| std::iter::repeat_n(g, spec.trials)).enumerate().collect();
    let workers = ctx.workers(jobs.len());
    let started = Instant::now();

    let mut slots: Vec<Option<Result<EpisodeLog>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (jobs, mut env, mut agent) = (&jobs, env.clone(), agent.fork());
                s.spawn(move || {
                    jobs.iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|&(i, g)| (i, run_episode(&mut env, agent.as_mut(), g, i, rng::derive_seed(spec.seed, i as u64))))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("episode worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    let logs = slots.into_iter().map(|r| r.expect("every episode ran")).collect::<Result<Vec<_>>>()?;
    let stats = SummaryStats::from_logs(&logs);
    Ok(ScenarioRun { logs, stats, wall_clock_s: started.elapsed().as_secs_f64() })
}

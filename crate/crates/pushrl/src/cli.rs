//! Subcommand implementations behind the `pushrl` binary.

use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pushrl_core::env::{Goal, PushEnv};
use pushrl_core::planner::{pets_train, PetsLog};
use pushrl_core::sac::{sac_train, PushTask, SacLog};

use crate::agent::{agent_for, Agent, ZeroAgent};
use crate::checkpoint::{load_model, save_model, AgentKind, MbModel, TrainedModel};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::export::{export, import};
use crate::harness::{builtin_scenarios, run_scenario_with, AgentRef, AgentSpec, Disturbance, GoalSpec, ScenarioContext, ScenarioSpec};
use crate::selfcheck::{format_table, run_all, Faults, SelfcheckConfig};
use crate::svg::write_svg;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EVAL_LOG_FILE: &str = "eval_log.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const SVG_FILE: &str = "trajectories.svg";

/// Exit code of a failed self-check.
pub const SELFCHECK_FAILED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "pushrl", version, about = "Train and evaluate goal-conditioned pushing agents")]
pub struct Cli {
    /// Upper bound on worker threads for evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent and write a checkpoint plus training logs.
    Train(TrainArgs),
    /// Run a builtin scenario and write episodes.csv and summary.json.
    Eval(EvalArgs),
    /// Run one episode towards a given goal.
    Rollout(RolloutArgs),
    /// Render an exported run as SVG.
    Plot(PlotArgs),
    /// Gradient, physics, reward and planner checks.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentArg {
    Mb,
    Mf,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainAgentArg {
    Mb,
    Mf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    /// Scale analytic gradients by 1.01.
    Gradient,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Agent kind (overrides `agent.kind`).
    #[arg(long, value_enum)]
    pub agent: Option<TrainAgentArg>,
    /// Environment step budget (overrides `agent.steps`).
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Checkpoint written by `train`; not needed for `--agent zero`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Agent kind; inferred from the checkpoint when omitted.
    #[arg(long, value_enum)]
    pub agent: Option<AgentArg>,
    /// cube-grid, cube-band, disturb-angle-pos, disturb-angle-neg, disturb-cof or objects-grid.
    #[arg(long)]
    pub scenario: String,
    /// Also write trajectories.svg.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub agent: Option<AgentArg>,
    /// Goal as `x,y` in meters.
    #[arg(long, value_parser = parse_goal)]
    pub goal: Goal,
    /// Object name (overrides `physics.object`).
    #[arg(long)]
    pub object: Option<String>,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Directory holding episodes.csv and summary.json.
    #[arg(long)]
    pub input: PathBuf,
    /// SVG file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Config whose workspace frames the plot.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    /// Deliberate defect for testing the gate itself.
    #[arg(long, value_enum)]
    pub inject_fault: Option<FaultArg>,
}

fn parse_goal(s: &str) -> std::result::Result<Goal, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
    Ok(Goal::new(p(x)?, p(y)?))
}

fn load_config(args: &ConfigArgs) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_seed_env()?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    Ok((cfg, out))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// `iteration,env_steps,episode_return,success,holdout_nll_0..`; iteration
/// 0 is the random-action phase.
pub fn pets_log_csv(log: &PetsLog) -> String {
    let members = log.iterations.first().map_or(0, |it| it.holdout_nll.len());
    let mut s = String::from("iteration,env_steps,episode_return,success");
    for k in 0..members {
        s += &format!(",holdout_nll_{k}");
    }
    s += &format!("\n0,{},,", log.random_steps);
    s += &",".repeat(members);
    s.push('\n');
    for it in &log.iterations {
        s += &format!("{},{},{},{}", it.iteration, it.env_steps, num(it.episode_return), it.success as u8);
        for v in &it.holdout_nll {
            s += &format!(",{}", num(*v));
        }
        s.push('\n');
    }
    s
}

pub fn sac_episodes_csv(log: &SacLog) -> String {
    let mut s = String::from("episode,env_steps,episode_return,success\n");
    for (i, e) in log.episodes.iter().enumerate() {
        s += &format!("{},{},{},{}\n", i + 1, e.env_steps, num(e.episode_return), e.success as u8);
    }
    s
}

pub fn sac_evals_csv(log: &SacLog) -> String {
    let mut s = String::from("env_steps,mean_return,success_rate\n");
    for e in &log.evals {
        s += &format!("{},{},{}\n", e.env_steps, num(e.mean_return), num(e.success_rate));
    }
    s
}

fn training_env(cfg: &RunConfig) -> Result<PushEnv> {
    let lib = cfg.library()?;
    let entry = lib.get(&cfg.physics.object)?;
    Ok(PushEnv::new(cfg.env.clone(), entry.shape.clone(), entry.slider, cfg.physics.pusher)?)
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let (mut cfg, out) = load_config(&args.common)?;
    if let Some(a) = args.agent {
        cfg.agent.kind = if a == TrainAgentArg::Mb { AgentKind::Mb } else { AgentKind::Mf };
    }
    if let Some(s) = args.steps {
        cfg.agent.steps = s;
    }
    cfg.validate()?;
    let mut env = training_env(&cfg)?;
    write_file(&out.join(CONFIG_FILE), &cfg.to_json())?;
    let model = match cfg.agent.kind {
        AgentKind::Mb => {
            let pets = pushrl_core::planner::PetsConfig { env_step_budget: cfg.agent.steps, ..cfg.agent.pets.clone() };
            let outcome = pets_train(&mut env, &pets, cfg.seed, |it, _| {
                eprintln!(
                    "iteration {:>4}  steps {:>7}  return {:>9.2}  success {}",
                    it.iteration, it.env_steps, it.episode_return, it.success
                );
                ControlFlow::Continue(())
            })?;
            write_file(&out.join(TRAIN_LOG_FILE), &pets_log_csv(&outcome.log))?;
            TrainedModel::Mb(MbModel { ensemble: outcome.ensemble, mpc: pets.mpc })
        }
        AgentKind::Mf => {
            let base = env.clone();
            let outcome = sac_train(
                || Ok(PushTask::new(base.clone())),
                &cfg.agent.sac,
                cfg.agent.steps,
                cfg.seed,
                |e, _| {
                    eprintln!("eval  steps {:>7}  return {:>9.2}  success {:.2}", e.env_steps, e.mean_return, e.success_rate);
                    ControlFlow::Continue(())
                },
            )?;
            write_file(&out.join(TRAIN_LOG_FILE), &sac_episodes_csv(&outcome.log))?;
            write_file(&out.join(EVAL_LOG_FILE), &sac_evals_csv(&outcome.log))?;
            TrainedModel::Mf(outcome.agent)
        }
    };
    let ck = out.join(CHECKPOINT_FILE);
    save_model(&model, &ck)?;
    println!("wrote {}", ck.display());
    Ok(())
}

/// Loads the requested agent; `zero` needs no checkpoint, others must match
/// the checkpoint's kind.
fn resolve_agent(agent: Option<AgentArg>, checkpoint: Option<&PathBuf>) -> Result<(Box<dyn Agent>, AgentSpec)> {
    if agent == Some(AgentArg::Zero) {
        return Ok((Box::new(ZeroAgent), AgentSpec { kind: AgentRef::Zero, checkpoint: None }));
    }
    let path = checkpoint.ok_or_else(|| Error::Config("--checkpoint is required unless --agent zero".into()))?;
    let model = load_model(path)?;
    let kind = model.kind();
    if let Some(a) = agent {
        let want = if a == AgentArg::Mb { AgentKind::Mb } else { AgentKind::Mf };
        if want != kind {
            return Err(Error::Config(format!("{} holds a `{}` agent, not `{}`", path.display(), kind.as_str(), want.as_str())));
        }
    }
    let r = if kind == AgentKind::Mb { AgentRef::Mb } else { AgentRef::Mf };
    Ok((agent_for(model), AgentSpec { kind: r, checkpoint: Some(path.clone()) }))
}

fn run_and_export(spec: &ScenarioSpec, ctx: &ScenarioContext, agent: &dyn Agent, dir: &Path, svg: bool) -> Result<()> {
    let run = run_scenario_with(spec, ctx, agent)?;
    export(&run.logs, &run.stats, Some(spec), dir)?;
    if svg {
        write_svg(&dir.join(SVG_FILE), &ctx.env.workspace, &run.logs, &spec.goals(&ctx.env))?;
    }
    let s = &run.stats;
    println!(
        "{:<18} {:<13} success {:>3}/{:<3} ({:.3})  mean steps {:>7.1}  [{:.1}s]",
        spec.name, spec.object, s.successes, s.episodes, s.success_rate, s.mean_steps, run.wall_clock_s
    );
    Ok(())
}

fn context(cfg: &RunConfig, threads: usize) -> Result<ScenarioContext> {
    Ok(ScenarioContext { env: cfg.env.clone(), library: cfg.library()?, pusher: cfg.physics.pusher, threads })
}

pub fn cmd_eval(args: &EvalArgs, threads: usize) -> Result<()> {
    let (cfg, out) = load_config(&args.common)?;
    let ctx = context(&cfg, threads)?;
    let (agent, spec) = resolve_agent(args.agent, args.checkpoint.as_ref())?;
    let specs = builtin_scenarios(&args.scenario, &cfg.scenario, &ctx.library, spec, cfg.seed)?;
    let single = specs.len() == 1;
    for s in &specs {
        let dir = if single { out.clone() } else { out.join(&s.object) };
        run_and_export(s, &ctx, agent.as_ref(), &dir, args.svg)?;
    }
    Ok(())
}

pub fn cmd_rollout(args: &RolloutArgs, threads: usize) -> Result<()> {
    let (cfg, out) = load_config(&args.common)?;
    let ctx = context(&cfg, threads)?;
    let (agent, agent_spec) = resolve_agent(args.agent, args.checkpoint.as_ref())?;
    let spec = ScenarioSpec {
        name: "rollout".into(),
        object: args.object.clone().unwrap_or_else(|| cfg.physics.object.clone()),
        goals: GoalSpec::List { goals: vec![args.goal] },
        trials: 1,
        disturbance: Disturbance::None,
        agent: agent_spec,
        seed: cfg.seed,
    };
    run_and_export(&spec, &ctx, agent.as_ref(), &out, args.svg)
}

pub fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let (logs, _) = import(&args.input)?;
    let mut goals: Vec<Goal> = Vec::new();
    for l in &logs {
        if !goals.contains(&l.goal) {
            goals.push(l.goal);
        }
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_svg(&args.out, &cfg.env.workspace, &logs, &goals)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Returns whether every check passed.
pub fn cmd_selfcheck(args: &SelfcheckArgs) -> bool {
    let faults = Faults { gradient: args.inject_fault == Some(FaultArg::Gradient) };
    let results = run_all(&SelfcheckConfig::default(), faults);
    print!("{}", format_table(&results));
    let _ = std::io::stdout().flush();
    results.iter().all(|r| r.passed())
}

/// Runs a parsed command line and maps the outcome to an exit code.
pub fn run(cli: Cli) -> u8 {
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a, cli.threads),
        Command::Rollout(a) => cmd_rollout(a, cli.threads),
        Command::Plot(a) => cmd_plot(a),
        Command::Selfcheck(a) => {
            return if cmd_selfcheck(a) { 0 } else { SELFCHECK_FAILED };
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

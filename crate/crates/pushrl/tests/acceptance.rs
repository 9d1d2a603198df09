//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line to stderr (bypassing libtest capture).

use std::io::Write;
use std::ops::ControlFlow;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use pushrl::agent::{Agent, MbAgent, MfAgent};
use pushrl::checkpoint::{Checkpoint, MbModel, TrainedModel};
use pushrl::config::RunConfig;
use pushrl::export::{export, import};
use pushrl::harness::*;
use pushrl::selfcheck::{self, CheckResult, Faults};
use pushrl_core::env::{EnvConfig, GoalChoice, PushEnv};
use pushrl_core::geom::Vec2;
use pushrl_core::planner::*;
use pushrl_core::rng::{self, Rng};
use pushrl_core::sac::{sac_train, PushTask, SacConfig, EVAL_TAG};

const SEED: u64 = 7;

/// Environment steps for the shared model-based agent; the criterion allows 50k.
const MB_BUDGET: usize = 15_000;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "[criterion {id:>2}] {verdict}  {name}: {detail}");
}

fn finish(id: u32, name: &str, checks: &[CheckResult], limit_s: f64) {
    let seconds: f64 = checks.iter().map(|c| c.seconds).sum();
    let pass = checks.iter().all(CheckResult::passed) && seconds < limit_s;
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed()).map(|c| format!("{} ({})", c.name, c.detail)).collect();
    let detail = if failed.is_empty() {
        let cases: usize = checks.iter().map(|c| c.cases).sum();
        let limit = if limit_s.is_finite() { format!(" (limit {limit_s}s)") } else { String::new() };
        format!("{} checks, {cases} cases, 0 violations, {seconds:.1}s{limit}", checks.len())
    } else {
        format!("failed: {}; {seconds:.1}s", failed.join("; "))
    };
    report(id, name, pass, &detail);
    assert!(pass, "{detail}");
}

fn shipped_config() -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/cube-mb.json")).unwrap()
}

fn make_env(cfg: &RunConfig, env: EnvConfig, object: &str) -> PushEnv {
    let lib = cfg.library().unwrap();
    let e = lib.get(object).unwrap();
    PushEnv::new(env, e.shape.clone(), e.slider, cfg.physics.pusher).unwrap()
}

struct Trained {
    model: Arc<MbModel>,
    env_steps: usize,
    seconds: f64,
}

/// Model-based agent trained once on the square and shared by criteria 6 to 8 and 10.
fn trained_mb() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = shipped_config();
        let pets = PetsConfig { env_step_budget: MB_BUDGET, ..cfg.agent.pets.clone() };
        let mut env = make_env(&cfg, cfg.env.clone(), &cfg.physics.object);
        let t = Instant::now();
        let out = pets_train(&mut env, &pets, cfg.seed, |_, _| ControlFlow::Continue(())).unwrap();
        let env_steps = out.log.iterations.last().map_or(out.log.random_steps, |i| i.env_steps);
        Trained { model: Arc::new(MbModel { ensemble: out.ensemble, mpc: pets.mpc }), env_steps, seconds: t.elapsed().as_secs_f64() }
    })
}

fn evaluate_mb(object: &str, goals: GoalSpec, disturbance: Disturbance) -> ScenarioRun {
    let t = trained_mb();
    let cfg = shipped_config();
    let spec = ScenarioSpec {
        name: "acceptance".into(),
        object: object.into(),
        goals,
        trials: 1,
        disturbance,
        agent: AgentSpec { kind: AgentRef::Mb, checkpoint: None },
        seed: SEED,
    };
    let ctx = ScenarioContext { library: cfg.library().unwrap(), ..ScenarioContext::new(cfg.env.clone()) };
    run_scenario_with(&spec, &ctx, &MbAgent::new(t.model.clone())).unwrap()
}

fn held_out() -> GoalSpec {
    GoalSpec::Band { count: 20 }
}

fn tally(run: &ScenarioRun) -> String {
    let t = trained_mb();
    format!(
        "{}/{} successes, mean {:.0} steps (agent: {} env steps, trained in {:.0}s; eval {:.0}s)",
        run.stats.successes, run.stats.episodes, run.stats.mean_steps, t.env_steps, t.seconds, run.wall_clock_s
    )
}

// ------------------------------------------------------------ criteria 1-4

#[test]
fn criterion_01_gradient_correctness() {
    finish(1, "gradient correctness", &[selfcheck::gradient_check(100, SEED, Faults::default())], 60.0);
}

#[test]
fn criterion_02_physics_invariants() {
    finish(2, "physics invariant suite", &selfcheck::physics_invariants(10_000, SEED), 60.0);
}

#[test]
fn criterion_03_reward_algebra() {
    finish(3, "reward algebra", &selfcheck::reward_algebra(1000, SEED), f64::INFINITY);
}

#[test]
fn criterion_04_planner_oracles() {
    finish(4, "planner oracles", &selfcheck::optimizer_oracles(5, SEED), f64::INFINITY);
}

// ---------------------------------------------------------------- criterion 5

const A: [[f64; 2]; 2] = [[0.9, 0.2], [-0.1, 0.8]];
const B: [[f64; 2]; 2] = [[0.5, 0.0], [0.3, -0.4]];

fn linear_gaussian(n: usize, sigma: f64, seed: u64) -> TransitionBuffer {
    let mut r = rng::seeded(seed);
    let mut buf = TransitionBuffer::new(2, 2, n);
    for _ in 0..n {
        let s = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let u = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let next: Vec<f64> =
            (0..2).map(|j| A[j][0] * s[0] + A[j][1] * s[1] + B[j][0] * u[0] + B[j][1] * u[1] + sigma * rng::normal(&mut r)).collect();
        buf.push(&s, &u, &next).unwrap();
    }
    buf
}

#[test]
fn criterion_05_ensemble_fidelity() {
    let t = Instant::now();
    let sigma = 0.5;
    let (train, test) = (linear_gaussian(5000, sigma, 1), linear_gaussian(2000, sigma, 2));
    let cfg = EnsembleConfig { members: 5, hidden: vec![64, 64], ..EnsembleConfig::default() };
    let mut ens = Ensemble::new(StateEncoding::Plain { state_dim: 2, angle_dims: vec![] }, 2, &cfg, &mut rng::seeded(3)).unwrap();
    let settings = TrainSettings { epochs: 40, batch_size: 32, patience: 8, ..TrainSettings::default() };
    train_ensemble(&mut ens, &train, &settings, &mut rng::seeded(4)).unwrap();

    let mut se = 0.0;
    for i in 0..test.len() {
        for (j, t) in test.next_state(i).iter().enumerate() {
            let mean: f64 =
                (0..ens.len()).map(|k| ens.predict_mean(test.state(i), test.action(i), k).unwrap()[j]).sum::<f64>() / ens.len() as f64;
            se += (mean - t).powi(2);
        }
    }
    let rmse = (se / (2 * test.len()) as f64).sqrt();
    // Differential entropy of the two-dimensional noise.
    let floor = (2.0 * std::f64::consts::PI * sigma * sigma).ln() + 1.0;
    let nll = evaluate_nll(&ens, &test);
    let worst = nll.iter().map(|v| (v - floor).abs() / floor).fold(0.0, f64::max);
    let seconds = t.elapsed().as_secs_f64();
    let pass = rmse <= 1.2 * sigma && worst <= 0.1 && seconds < 300.0;
    let detail = format!(
        "holdout rmse {rmse:.4} (limit {:.2}), worst member nll off floor {floor:.4} by {:.1}% (limit 10%), {seconds:.0}s",
        1.2 * sigma,
        100.0 * worst
    );
    report(5, "ensemble fidelity", pass, &detail);
    assert!(pass, "{detail}");
}

// ------------------------------------------------------- criteria 6-8, 10

#[test]
fn criterion_06_end_to_end_model_based() {
    let run = evaluate_mb("square", held_out(), Disturbance::None);
    let pass = trained_mb().env_steps <= 50_000 && run.stats.success_rate >= 0.8;
    report(6, "end-to-end model-based, held-out band goals (need >= 0.8)", pass, &tally(&run));
    assert!(pass);
}

#[test]
fn criterion_07_generalization() {
    let mut pass = true;
    let mut parts = Vec::new();
    for object in ["circle", "hexagon", "thin-box"] {
        let run = evaluate_mb(object, held_out(), Disturbance::None);
        pass &= run.stats.success_rate >= 0.7;
        parts.push(format!("{object} {}/{}", run.stats.successes, run.stats.episodes));
    }
    report(7, "unseen objects (each needs >= 0.7)", pass, &parts.join(", "));
    assert!(pass);
}

#[test]
fn criterion_08_distant_goals() {
    let env = EnvConfig::default();
    let far = goal_grid(&env.workspace, [6, 9], 0.11, Vec2::ZERO);
    let goals: Vec<_> = (0..20).map(|k| far[k * far.len() / 20]).collect();
    assert!(goals.iter().all(|g| g.position().norm() >= 0.11));
    let run = evaluate_mb("square", GoalSpec::List { goals }, Disturbance::None);
    let pass = run.stats.successes >= 19;
    report(8, "goals >= 0.11 m from start (need >= 19/20)", pass, &tally(&run));
    assert!(pass);
}

#[test]
fn criterion_10_disturbance_robustness() {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, d) in [
        ("+20deg", Disturbance::ContactAngleOffset { radians: 20f64.to_radians() }),
        ("-20deg", Disturbance::ContactAngleOffset { radians: -20f64.to_radians() }),
        ("cof 0.015 m", Disturbance::CofOffset { offset: Vec2::new(0.0, 0.015) }),
    ] {
        let run = evaluate_mb("square", held_out(), d);
        pass &= run.stats.successes >= 14;
        parts.push(format!("{name} {}/{}", run.stats.successes, run.stats.episodes));
    }
    report(10, "disturbances (each needs >= 14/20)", pass, &parts.join(", "));
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 9

const C9_EVAL_EPISODES: usize = 10;
const C9_CAP: usize = 500_000;

/// Deterministic-policy success rate on the same seeded goals the
/// model-free learner is evaluated on.
fn fixed_goal_success(agent: &mut dyn Agent, env: &mut PushEnv, seed: u64) -> f64 {
    let mut successes = 0;
    for k in 0..C9_EVAL_EPISODES {
        let s = rng::derive_seed(seed, EVAL_TAG + k as u64);
        let (mut obs, mut state) = env.reset(GoalChoice::Seeded(s)).unwrap();
        let goal = env.goal().unwrap();
        agent.reset(env.config(), s).unwrap();
        loop {
            let r = env.step(agent.act(&obs, &state, goal).unwrap()).unwrap();
            (obs, state) = (r.observation, r.model_state);
            if r.done() {
                successes += r.terminated as usize;
                break;
            }
        }
    }
    successes as f64 / C9_EVAL_EPISODES as f64
}

#[test]
fn criterion_09_sample_efficiency_gap() {
    let cfg = shipped_config();
    let mut reduced = cfg.env.clone();
    reduced.workspace.x_max = 0.2;
    let env = make_env(&cfg, reduced, "square");
    let seed = cfg.seed;

    let pets = PetsConfig { env_step_budget: 50_000, ..cfg.agent.pets.clone() };
    let mut eval_env = env.clone();
    let mut mb_steps = None;
    pets_train(&mut env.clone(), &pets, seed, |it, ens| {
        let mut agent = MbAgent::new(Arc::new(MbModel { ensemble: ens.clone(), mpc: pets.mpc.clone() }));
        if fixed_goal_success(&mut agent, &mut eval_env, seed) >= 0.7 {
            mb_steps = Some(it.env_steps);
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    })
    .unwrap();
    let Some(mb_steps) = mb_steps else {
        report(9, "sample-efficiency gap", false, "model-based agent never reached 0.7 within 50k steps");
        panic!("model-based agent never reached 0.7");
    };

    let sac = SacConfig {
        hidden: vec![64, 64],
        batch_size: 128,
        initial_random_steps: 5000,
        eval_interval: 2000,
        eval_episodes: C9_EVAL_EPISODES,
        ..SacConfig::default()
    };
    let t = Instant::now();
    let mut mf_steps = None;
    let outcome = sac_train(
        || Ok(PushTask::new(env.clone())),
        &sac,
        C9_CAP,
        seed,
        |e, agent| {
            if e.success_rate >= 0.7 {
                // Cross-check with the harness-facing wrapper.
                let mut wrapped = MfAgent::new(Arc::new(agent.clone()));
                assert_eq!(fixed_goal_success(&mut wrapped, &mut env.clone(), seed), e.success_rate);
                mf_steps = Some(e.env_steps);
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        },
    )
    .unwrap();
    let ratio = mf_steps.unwrap_or(C9_CAP) as f64 / mb_steps as f64;
    let pass = ratio >= 10.0;
    let mf = match mf_steps {
        Some(s) => format!("model-free {s}"),
        None => format!("model-free not reached within {} (cap)", outcome.env_steps),
    };
    let detail = format!(
        "steps to first 0.7 on x in [0, 0.2]: model-based {mb_steps}, {mf}; ratio {ratio:.1}x (need >= 10x); model-free {:.0}s",
        t.elapsed().as_secs_f64()
    );
    report(9, "sample-efficiency gap", pass, &detail);
    assert!(pass, "{detail}");
}

// --------------------------------------------------------------- criterion 11

fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig { seed: 11, ..RunConfig::default() };
    let p = &mut cfg.agent.pets;
    p.initial_random_episodes = 2;
    p.env_step_budget = 1500;
    p.train = TrainSettings { epochs: 3, batch_size: 32, max_epoch_rows: 1000, ..TrainSettings::default() };
    p.ensemble = EnsembleConfig { members: 2, hidden: vec![16], ..EnsembleConfig::default() };
    p.mpc = MpcConfig {
        optimizer: Optimizer::Cem(CemConfig { horizon: 4, population: 12, elites: 3, iterations: 2, ..CemConfig::default() }),
        particles: 2,
    };
    cfg.agent.sac = SacConfig {
        hidden: vec![16],
        batch_size: 32,
        initial_random_steps: 200,
        eval_interval: 500,
        eval_episodes: 2,
        ..SacConfig::default()
    };
    cfg
}

fn train_tiny(cfg: &RunConfig) -> (Vec<u8>, Vec<u8>, String) {
    let mut env = make_env(cfg, cfg.env.clone(), "square");
    let pets = pets_train(&mut env, &cfg.agent.pets, cfg.seed, |_, _| ControlFlow::Continue(())).unwrap();
    let mb = TrainedModel::Mb(MbModel { ensemble: pets.ensemble, mpc: cfg.agent.pets.mpc.clone() });
    let sac = sac_train(|| Ok(PushTask::new(env.clone())), &cfg.agent.sac, 1500, cfg.seed, |_, _| ControlFlow::Continue(())).unwrap();
    let mf = TrainedModel::Mf(sac.agent);
    let logs = format!("{:?}{:?}", pets.log, sac.log);
    (Checkpoint::from_model(&mb).to_bytes(), Checkpoint::from_model(&mf).to_bytes(), logs)
}

fn exported_bytes(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    (std::fs::read(dir.join("episodes.csv")).unwrap(), std::fs::read(dir.join("summary.json")).unwrap())
}

#[test]
fn criterion_11_determinism_and_round_trips() {
    let cfg = tiny_config();
    let mut failures = Vec::new();

    let (mb1, mf1, log1) = train_tiny(&cfg);
    let (mb2, mf2, log2) = train_tiny(&cfg);
    if (mb1 != mb2) || (mf1 != mf2) || (log1 != log2) {
        failures.push("training differs between identical runs");
    }

    // Checkpoint bytes -> model -> bytes.
    let mut models = Vec::new();
    for bytes in [&mb1, &mf1] {
        let model = Checkpoint::from_bytes(bytes).unwrap().to_model().unwrap();
        if &Checkpoint::from_model(&model).to_bytes() != bytes {
            failures.push("checkpoint round trip changed bytes");
        }
        models.push(model);
    }

    // Evaluation twice, with different worker counts, then export/import.
    let dir = tempfile::tempdir().unwrap();
    for (i, model) in models.into_iter().enumerate() {
        let kind = if i == 0 { AgentRef::Mb } else { AgentRef::Mf };
        let spec = ScenarioSpec {
            name: "determinism".into(),
            object: "square".into(),
            goals: GoalSpec::Grid { counts: [2, 2], min_distance: 0.1 },
            trials: 2,
            disturbance: Disturbance::None,
            agent: AgentSpec { kind, checkpoint: None },
            seed: cfg.seed,
        };
        let agent = pushrl::agent::agent_for(model);
        let mut outputs = Vec::new();
        for threads in [1, 3] {
            let ctx = ScenarioContext { threads, ..ScenarioContext::new(cfg.env.clone()) };
            let run = run_scenario_with(&spec, &ctx, agent.as_ref()).unwrap();
            let out = dir.path().join(format!("{i}-{threads}"));
            export(&run.logs, &run.stats, Some(&spec), &out).unwrap();
            let (logs, summary) = import(&out).unwrap();
            if logs != run.logs || summary.stats != run.stats || summary.scenario.as_ref() != Some(&spec) {
                failures.push("csv/json import differs from the exported run");
            }
            let again = dir.path().join(format!("{i}-{threads}-again"));
            export(&logs, &summary.stats, summary.scenario.as_ref(), &again).unwrap();
            if exported_bytes(&out) != exported_bytes(&again) {
                failures.push("re-export changed bytes");
            }
            outputs.push(exported_bytes(&out));
        }
        if outputs[0] != outputs[1] {
            failures.push("evaluation output depends on worker count");
        }
    }

    let pass = failures.is_empty();
    let detail = if pass {
        format!("training, checkpoints ({} + {} bytes), evaluation and csv/json exports byte-identical", mb1.len(), mf1.len())
    } else {
        failures.join("; ")
    };
    report(11, "determinism and round trips", pass, &detail);
    assert!(pass, "{detail}");
}

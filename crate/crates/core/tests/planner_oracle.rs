use core::f64::consts::PI;
use std::cell::RefCell;
use std::ops::ControlFlow;

use proptest::prelude::*;
use pushrl_core::env::*;
use pushrl_core::geom::wrap_angle;
use pushrl_core::nn::{Activation, Mlp, LOG_VAR_MIN};
use pushrl_core::physics::{ConvexShape, PusherParams, SliderParams};
use pushrl_core::planner::*;
use pushrl_core::rng::{self, Rng};

// ---------------------------------------------------------------- helpers

/// Member computing `delta = m · [s, a]` exactly, with the log-variance
/// output pinned to `log_var`. Hidden layer is `[relu(x), relu(−x)]`.
fn linear_member(m: &[Vec<f64>], log_var: f64) -> Mlp {
    let out = m.len();
    let n = m[0].len();
    let dims = [n, 2 * n, 2 * out];
    let mut net = Mlp::zeros(&dims, Activation::Relu).unwrap();
    let p = net.params_mut();
    for i in 0..n {
        p[i * 2 * n + i] = 1.0;
        p[i * 2 * n + n + i] = -1.0;
    }
    let off = n * 2 * n + 2 * n;
    for j in 0..out {
        for i in 0..n {
            p[off + i * 2 * out + j] = m[j][i];
            p[off + (n + i) * 2 * out + j] = -m[j][i];
        }
    }
    let bias = off + 2 * n * 2 * out;
    for j in 0..out {
        p[bias + out + j] = log_var;
    }
    net
}

/// Plain ensemble of identical linear members. `scale` is the output
/// normalizer std, so the sampling std is `exp(log_var / 2) · scale`.
fn linear_ensemble(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2], members: usize, log_var: f64, scale: f64) -> Ensemble {
    // delta = (A − I) s + B a, expressed in normalized output units.
    let m: Vec<Vec<f64>> = (0..2)
        .map(|j| {
            let mut row = vec![0.0; 4];
            for i in 0..2 {
                row[i] = (a[j][i] - if i == j { 1.0 } else { 0.0 }) / scale;
                row[2 + i] = b[j][i] / scale;
            }
            row
        })
        .collect();
    let nets = (0..members).map(|_| linear_member(&m, log_var)).collect();
    let input = Normalizer::identity(4);
    let output = Normalizer { mean: vec![0.0; 2], std: vec![scale; 2] };
    Ensemble::from_parts(StateEncoding::Plain { state_dim: 2, angle_dims: vec![] }, 2, nets, input, output).unwrap()
}

const A: [[f64; 2]; 2] = [[0.9, 0.2], [-0.1, 0.8]];
const B: [[f64; 2]; 2] = [[0.5, 0.0], [0.3, -0.4]];

fn linear_step(s: [f64; 2], u: [f64; 2]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for j in 0..2 {
        out[j] = A[j][0] * s[0] + A[j][1] * s[1] + B[j][0] * u[0] + B[j][1] * u[1];
    }
    out
}

fn linear_gaussian_buffer(n: usize, sigma: f64, seed: u64) -> TransitionBuffer {
    let mut r = rng::seeded(seed);
    let mut buf = TransitionBuffer::new(2, 2, n);
    for _ in 0..n {
        let s = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let u = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let mean = linear_step(s, u);
        let next = [mean[0] + sigma * rng::normal(&mut r), mean[1] + sigma * rng::normal(&mut r)];
        buf.push(&s, &u, &next).unwrap();
    }
    buf
}

fn small_ensemble(seed: u64) -> Ensemble {
    let cfg = EnsembleConfig { members: 5, hidden: vec![64, 64], ..EnsembleConfig::default() };
    Ensemble::new(StateEncoding::Plain { state_dim: 2, angle_dims: vec![] }, 2, &cfg, &mut rng::seeded(seed)).unwrap()
}

fn cube_env() -> PushEnv {
    let shape = ConvexShape::square("square", 0.075).unwrap();
    let slider = SliderParams::for_shape(&shape);
    PushEnv::new(EnvConfig::default(), shape, slider, PusherParams::default()).unwrap()
}

fn tiny_pets(budget: usize) -> PetsConfig {
    PetsConfig {
        initial_random_episodes: 2,
        env_step_budget: budget,
        train: TrainSettings { epochs: 2, batch_size: 64, ..TrainSettings::default() },
        ensemble: EnsembleConfig { members: 2, hidden: vec![8], ..EnsembleConfig::default() },
        mpc: MpcConfig {
            optimizer: Optimizer::Cem(CemConfig { horizon: 3, population: 8, elites: 2, iterations: 2, ..CemConfig::default() }),
            particles: 2,
        },
        ..PetsConfig::default()
    }
}

fn quadratic(target: Vec<f64>) -> impl FnMut(&[f64]) -> f64 {
    move |a: &[f64]| -a.iter().zip(&target).map(|(x, t)| (x - t) * (x - t)).sum::<f64>()
}

// ------------------------------------------------------------- ensemble

#[test]
fn linear_gaussian_fit_reaches_noise_floor() {
    let sigma = 0.5;
    let train = linear_gaussian_buffer(5000, sigma, 1);
    let test = linear_gaussian_buffer(2000, sigma, 2);
    let mut ens = small_ensemble(3);
    let settings = TrainSettings { epochs: 40, batch_size: 32, patience: 8, ..TrainSettings::default() };
    let report = train_ensemble(&mut ens, &train, &settings, &mut rng::seeded(4)).unwrap();

    // Mean prediction of the ensemble on fresh data.
    let mut se = 0.0;
    for i in 0..test.len() {
        let mut mean = [0.0; 2];
        for k in 0..ens.len() {
            let p = ens.predict_mean(test.state(i), test.action(i), k).unwrap();
            mean[0] += p[0] / ens.len() as f64;
            mean[1] += p[1] / ens.len() as f64;
        }
        let t = test.next_state(i);
        se += (mean[0] - t[0]).powi(2) + (mean[1] - t[1]).powi(2);
    }
    let rmse = (se / (2 * test.len()) as f64).sqrt();
    assert!(rmse <= 1.2 * sigma, "rmse {rmse}");

    // Differential entropy of N(0, σ² I) in two dimensions.
    let floor = (2.0 * PI * sigma * sigma).ln() + 1.0;
    for nll in report.final_holdout_nll().iter().chain(&evaluate_nll(&ens, &test)) {
        assert!((nll - floor).abs() <= 0.1 * floor, "nll {nll} floor {floor}");
    }
}

#[test]
fn training_is_deterministic_under_seed() {
    let buf = linear_gaussian_buffer(500, 0.1, 7);
    let settings = TrainSettings { epochs: 3, ..TrainSettings::default() };
    let run = || {
        let mut e = small_ensemble(8);
        let r = train_ensemble(&mut e, &buf, &settings, &mut rng::seeded(9)).unwrap();
        (e, r)
    };
    let (e1, r1) = run();
    let (e2, r2) = run();
    assert_eq!(r1, r2);
    assert_eq!(e1, e2);
}

#[test]
fn zero_noise_holdout_nll_mostly_decreases() {
    let buf = linear_gaussian_buffer(3000, 0.0, 11);
    let mut ens = small_ensemble(12);
    // Large batches: with zero noise the log-variance heads sharpen the loss
    // and small-batch Adam oscillates once they approach the floor.
    let settings = TrainSettings { epochs: 40, batch_size: 1024, learning_rate: 3e-4, patience: 40, ..TrainSettings::default() };
    let report = train_ensemble(&mut ens, &buf, &settings, &mut rng::seeded(13)).unwrap();
    for m in &report.members {
        let h = &m.holdout_nll;
        let ups = h.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(ups as f64 <= 0.05 * (h.len() - 1) as f64, "{ups} increases in {h:?}");
    }
}

#[test]
fn empty_buffer_is_rejected() {
    let mut ens = small_ensemble(1);
    let buf = TransitionBuffer::new(2, 2, 10);
    assert_eq!(train_ensemble(&mut ens, &buf, &TrainSettings::default(), &mut rng::seeded(1)), Err(PlannerError::EmptyBuffer));
}

#[test]
fn normalizer_std_is_floored() {
    let n = Normalizer::fit(&[1.0, 2.0, 1.0, 3.0, 1.0, 4.0], 2);
    assert_eq!(n.std[0], STD_FLOOR);
    assert!(n.std[1] > 0.5);
}

#[test]
fn floor_variance_sample_matches_mean() {
    let ens = linear_ensemble(&A, &B, 3, LOG_VAR_MIN, 0.01);
    let mut r = rng::seeded(2);
    for _ in 0..1000 {
        let s = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let u = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let sample = ens.predict(&s, &u, 1, &mut r).unwrap();
        let mean = ens.predict_mean(&s, &u, 1).unwrap();
        for k in 0..2 {
            assert!((sample[k] - mean[k]).abs() < 1e-3);
        }
    }
}

#[test]
fn predict_is_seed_deterministic_and_checks_member() {
    let ens = small_ensemble(5);
    let a = ens.predict(&[0.1, 0.2], &[0.3, -0.1], 2, &mut rng::seeded(4)).unwrap();
    let b = ens.predict(&[0.1, 0.2], &[0.3, -0.1], 2, &mut rng::seeded(4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(ens.predict(&[0.1, 0.2], &[0.3, -0.1], 5, &mut rng::seeded(4)), Err(PlannerError::MemberIndex(5, 5)));
}

#[test]
fn sampled_moments_match_predicted_gaussian() {
    let log_var = -1.3;
    let scale = 0.2;
    let ens = linear_ensemble(&A, &B, 1, log_var, scale);
    let s = [0.4, -0.7];
    let u = [0.2, 0.9];
    let mean = linear_step(s, u);
    let var = log_var.exp() * scale * scale;
    let n = 100_000;
    let mut r = rng::seeded(6);
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    for _ in 0..n {
        let p = ens.predict(&s, &u, 0, &mut r).unwrap();
        for k in 0..2 {
            sum[k] += p[k];
            sq[k] += (p[k] - mean[k]).powi(2);
        }
    }
    let nf = n as f64;
    for k in 0..2 {
        let m = sum[k] / nf;
        assert!((m - mean[k]).abs() <= 3.0 * (var / nf).sqrt(), "mean {m} vs {}", mean[k]);
        let v = sq[k] / nf;
        assert!((v - var).abs() <= 3.0 * var * (2.0 / nf).sqrt(), "var {v} vs {var}");
    }
    let (m, v) = ens.delta_distribution(&s, &u, 0).unwrap();
    assert!((m[0] + s[0] - mean[0]).abs() < 1e-12);
    assert!((v[1] - var).abs() < 1e-15);
}

#[test]
fn wrapped_angle_transitions_train_without_jumps() {
    // θ' = wrap(θ + 0.1): the wrapped delta is constant even across ±π.
    let mut r = rng::seeded(21);
    let mut buf = TransitionBuffer::new(1, 1, 2000);
    for _ in 0..2000 {
        let th: f64 = r.random_range(-PI..PI);
        buf.push(&[th], &[r.random_range(-1.0..1.0)], &[wrap_angle(th + 0.1)]).unwrap();
    }
    let encoding = StateEncoding::Plain { state_dim: 1, angle_dims: vec![0] };
    let mut d = Vec::new();
    encoding.delta(&[3.1], &[wrap_angle(3.2)], &mut d);
    assert!((d[0] - 0.1).abs() < 1e-12);

    let cfg = EnsembleConfig { members: 2, hidden: vec![16], ..EnsembleConfig::default() };
    let mut ens = Ensemble::new(encoding, 1, &cfg, &mut rng::seeded(22)).unwrap();
    let settings = TrainSettings { epochs: 10, ..TrainSettings::default() };
    train_ensemble(&mut ens, &buf, &settings, &mut rng::seeded(23)).unwrap();
    for k in 0..2 {
        let p = ens.predict_mean(&[3.1], &[0.0], k).unwrap()[0];
        assert!(p > -PI && p <= PI);
        assert!((wrap_angle(p - (3.2 - 2.0 * PI))).abs() < 0.01, "predicted {p}");
    }
}

#[test]
fn contact_frame_inputs_exclude_goal_and_world_pose() {
    let enc = StateEncoding::ContactFrame;
    assert_eq!(enc.state_dim(), ModelState::DIM);
    let mut a = Vec::new();
    let mut b = Vec::new();
    enc.features(&[0.001, -0.002, 0.3, 0.5, 0.1, 1.0], &mut a);
    enc.features(&[0.001, -0.002, 0.3, -0.2, 0.4, -2.0], &mut b);
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn contact_frame_delta_round_trips(s in prop::array::uniform6(-3.0f64..3.0), n in prop::array::uniform6(-3.0f64..3.0)) {
        let mut s = s;
        let mut n = n;
        for v in [&mut s, &mut n] {
            v[2] = wrap_angle(v[2]);
            v[5] = wrap_angle(v[5]);
        }
        let enc = StateEncoding::ContactFrame;
        let mut d = Vec::new();
        enc.delta(&s, &n, &mut d);
        let mut back = [0.0; 6];
        enc.apply(&s, &d, &mut back);
        for k in 0..6 {
            let err = if k == 2 || k == 5 { wrap_angle(back[k] - n[k]) } else { back[k] - n[k] };
            prop_assert!(err.abs() < 1e-12);
        }
    }
}

// -------------------------------------------------------------- rollouts

#[test]
fn ts1_rollout_matches_linear_oracle() {
    let ens = linear_ensemble(&A, &B, 4, LOG_VAR_MIN, 1e-6);
    let start = [0.3, -0.5];
    let actions = [0.1, 0.2, -0.3, 0.4, 0.5, -0.5, 0.0, 0.7];
    let reward = |s: &[f64]| StepReward { reward: -(s[0] * s[0] + 2.0 * s[1] * s[1]), terminal: false };
    let out = rollout_ts1_with(&ens, &start, &actions, 4, 20, reward, &mut rng::seeded(1)).unwrap();

    let mut s = start;
    let mut expected = vec![s];
    let mut ret = 0.0;
    for k in 0..4 {
        s = linear_step(s, [actions[2 * k], actions[2 * k + 1]]);
        ret -= s[0] * s[0] + 2.0 * s[1] * s[1];
        expected.push(s);
    }
    assert!((out.mean_return - ret).abs() < 1e-6);
    for traj in &out.states {
        assert_eq!(traj.len(), 5 * 2);
        for (k, e) in expected.iter().enumerate() {
            assert!((traj[2 * k] - e[0]).abs() < 1e-6 && (traj[2 * k + 1] - e[1]).abs() < 1e-6);
        }
    }

    let one = rollout_ts1_with(&ens, &start, &actions, 4, 1, reward, &mut rng::seeded(2)).unwrap();
    assert!((one.mean_return - out.mean_return).abs() < 1e-6);
}

#[test]
fn empty_action_sequence_returns_zero() {
    let ens = linear_ensemble(&A, &B, 2, LOG_VAR_MIN, 1e-6);
    let out = rollout_ts1_with(&ens, &[1.0, 2.0], &[], 0, 3, |_: &[f64]| StepReward { reward: 1.0, terminal: false }, &mut rng::seeded(1))
        .unwrap();
    assert_eq!(out.mean_return, 0.0);
    assert!(out.states.iter().all(|t| t == &vec![1.0, 2.0]));
}

#[test]
fn rollout_length_mismatch_is_an_error() {
    let ens = linear_ensemble(&A, &B, 2, LOG_VAR_MIN, 1e-6);
    let r =
        rollout_ts1_with(&ens, &[1.0, 2.0], &[0.0; 5], 3, 1, |_: &[f64]| StepReward { reward: 0.0, terminal: false }, &mut rng::seeded(1));
    assert!(matches!(r, Err(PlannerError::Dimension(_))));
}

#[test]
fn push_rollout_return_is_env_reward_on_predicted_states() {
    let cfg = EnsembleConfig { members: 3, hidden: vec![8], ..EnsembleConfig::default() };
    let ens = Ensemble::new(StateEncoding::ContactFrame, 2, &cfg, &mut rng::seeded(3)).unwrap();
    let env_cfg = EnvConfig::default();
    let goal = Goal::new(0.4, 0.1);
    let start = ModelState::from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let actions: Vec<f64> = (0..10).flat_map(|k| [0.001 * (k as f64 - 5.0), 0.01]).collect();
    let out = rollout_ts1(&ens, &start, &actions, 10, 1, goal, &env_cfg, &mut rng::seeded(4)).unwrap();
    let states = &out.states[0];
    let mut ret = 0.0;
    for k in 1..=10 {
        let s = ModelState::from_slice(&states[6 * k..6 * (k + 1)]);
        ret += model_state_reward(&s, &goal, &env_cfg);
        if (s.x_o - goal.x).hypot(s.y_o - goal.y) <= env_cfg.success_tolerance {
            break;
        }
    }
    assert_eq!(out.mean_return, ret);
}

#[test]
fn reaching_the_goal_ends_the_predicted_return() {
    // Member predicting a fixed +1 cm object step along x.
    let ens = linear_ensemble(&[[1.0, 0.0], [0.0, 1.0]], &[[0.0, 0.0], [0.0, 0.0]], 1, LOG_VAR_MIN, 1e-6);
    let reward = |s: &[f64]| StepReward { reward: -1.0, terminal: s[0] >= 0.0 };
    let out = rollout_ts1_with(&ens, &[0.0, 0.0], &[0.0; 10], 5, 1, reward, &mut rng::seeded(1)).unwrap();
    assert!((out.mean_return + 1.0).abs() < 1e-12);
}

// ------------------------------------------------------------ optimizers

#[test]
fn cem_recovers_quadratic_optimum() {
    let bounds = ActionBox::symmetric(&[1.0, 1.0]);
    let cfg = CemConfig { horizon: 5, iterations: 10, ..CemConfig::default() };
    let mut r = rng::seeded(30);
    for trial in 0..5 {
        let target: Vec<f64> = (0..10).map(|_| r.random_range(-0.8..0.8)).collect();
        let plan = cem_plan(&mut quadratic(target.clone()), &bounds, &cfg, &bounds.center_sequence(5), &mut r).unwrap();
        for (a, t) in plan.actions.iter().zip(&target) {
            assert!((a - t).abs() < 1e-2, "trial {trial}: {a} vs {t}");
        }
    }
}

#[test]
fn cem_zero_iterations_returns_warm_start() {
    let bounds = ActionBox::symmetric(&[1.0, 2.0]);
    let cfg = CemConfig { horizon: 3, iterations: 0, ..CemConfig::default() };
    let warm = vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6];
    let plan = cem_plan(&mut quadratic(vec![0.0; 6]), &bounds, &cfg, &warm, &mut rng::seeded(1)).unwrap();
    assert_eq!(plan.actions, warm);
}

#[test]
fn cem_full_elite_set_uses_population_mean() {
    let bounds = ActionBox::symmetric(&[100.0, 100.0]);
    let cfg = CemConfig { horizon: 2, population: 30, elites: 30, iterations: 1, alpha: 0.1, ..CemConfig::default() };
    let warm = vec![0.5, -0.5, 1.0, 2.0];
    let seen = RefCell::new(Vec::<Vec<f64>>::new());
    let mut obj = |a: &[f64]| {
        seen.borrow_mut().push(a.to_vec());
        -a[0].abs()
    };
    let plan = cem_plan(&mut obj, &bounds, &cfg, &warm, &mut rng::seeded(3)).unwrap();
    let seen = seen.into_inner();
    assert_eq!(seen.len(), 30);
    for i in 0..4 {
        let pop_mean = seen.iter().map(|s| s[i]).sum::<f64>() / 30.0;
        let expected = 0.1 * warm[i] + 0.9 * pop_mean;
        assert!((plan.actions[i] - expected).abs() < 1e-12);
    }
}

#[test]
fn cem_elite_mean_never_decreases() {
    let bounds = ActionBox::symmetric(&[1.0, 1.0]);
    let cfg = CemConfig { horizon: 4, population: 60, elites: 6, iterations: 8, ..CemConfig::default() };
    let mut r = rng::seeded(31);
    for _ in 0..20 {
        let phase: f64 = r.random_range(0.0..6.0);
        let mut obj = |a: &[f64]| a.iter().enumerate().map(|(i, x)| (3.0 * x + phase * i as f64).sin()).sum::<f64>();
        let plan = cem_plan(&mut obj, &bounds, &cfg, &bounds.center_sequence(4), &mut r).unwrap();
        assert_eq!(plan.elite_values.len(), 8);
        assert!(plan.elite_values.windows(2).all(|w| w[1] >= w[0]), "{:?}", plan.elite_values);
    }
}

#[test]
fn cem_rejects_invalid_config() {
    let bounds = ActionBox::symmetric(&[1.0]);
    for cfg in [
        CemConfig { elites: 0, ..CemConfig::default() },
        CemConfig { elites: 401, ..CemConfig::default() },
        CemConfig { horizon: 0, ..CemConfig::default() },
        CemConfig { init_std: Some(vec![0.0]), ..CemConfig::default() },
    ] {
        let warm = bounds.center_sequence(cfg.horizon);
        assert!(matches!(cem_plan(&mut quadratic(vec![]), &bounds, &cfg, &warm, &mut rng::seeded(1)), Err(PlannerError::Config(_))));
    }
}

#[test]
fn cem_is_seed_deterministic() {
    let bounds = ActionBox::symmetric(&[1.0, 1.0]);
    let cfg = CemConfig { horizon: 3, population: 50, elites: 5, ..CemConfig::default() };
    let run = |seed| cem_plan(&mut quadratic(vec![0.3; 6]), &bounds, &cfg, &bounds.center_sequence(3), &mut rng::seeded(seed)).unwrap();
    assert_eq!(run(5), run(5));
}

#[test]
fn mppi_tiny_temperature_picks_best_sample() {
    let samples = [0.1, 0.2, -0.4, 0.5, 0.9, -0.9, 0.0, 0.3];
    let out = mppi_average(&samples, &[0.0, 1.0, 5.0, 2.0], 1e-3);
    assert!((out[0] - 0.9).abs() < 1e-12 && (out[1] + 0.9).abs() < 1e-12);
}

#[test]
fn mppi_equal_returns_average_samples() {
    let samples = [0.1, 0.2, -0.4, 0.5, 0.9, -0.9, 0.0, 0.3];
    for v in [1.7, f64::NEG_INFINITY] {
        let out = mppi_average(&samples, &[v; 4], 0.5);
        assert!((out[0] - 0.15).abs() < 1e-12 && (out[1] - 0.025).abs() < 1e-12);
    }
}

#[test]
fn mppi_recovers_quadratic_optimum() {
    let bounds = ActionBox::symmetric(&[1.0, 1.0]);
    let cfg = MppiConfig { horizon: 5, samples: 2000, lambda: 0.1, sigma: 0.3, iterations: 10 };
    let mut r = rng::seeded(40);
    for _ in 0..5 {
        let target: Vec<f64> = (0..10).map(|_| r.random_range(-0.8..0.8)).collect();
        let plan = mppi_plan(&mut quadratic(target.clone()), &bounds, &cfg, &bounds.center_sequence(5), &mut r).unwrap();
        for (a, t) in plan.actions.iter().zip(&target) {
            assert!((a - t).abs() < 5e-2, "{a} vs {t}");
        }
    }
}

#[test]
fn mppi_rejects_nonpositive_temperature_and_noise() {
    for cfg in [MppiConfig { lambda: 0.0, ..MppiConfig::default() }, MppiConfig { sigma: -1.0, ..MppiConfig::default() }] {
        assert!(cfg.validate().is_err());
    }
}

// -------------------------------------------------------------------- MPC

#[test]
fn mpc_shifts_plan_into_warm_start() {
    for optimizer in [
        Optimizer::Cem(CemConfig { horizon: 4, population: 40, elites: 4, ..CemConfig::default() }),
        Optimizer::Mppi(MppiConfig { horizon: 4, samples: 40, ..MppiConfig::default() }),
    ] {
        let mut mpc = Mpc::new(MpcConfig { optimizer, particles: 1 }, ActionBox::symmetric(&[1.0, 0.5])).unwrap();
        let mut obj = quadratic(vec![0.2, 0.1, -0.3, 0.2, 0.4, -0.1, 0.0, 0.3]);
        let first = mpc.act_with(&mut obj, &mut rng::seeded(1)).unwrap();
        let plan = mpc.last_plan().unwrap().to_vec();
        assert_eq!(first, plan[..2].to_vec());
        let mut shifted = plan[2..].to_vec();
        shifted.extend_from_slice(&plan[6..]);
        assert_eq!(mpc.warm_start(), shifted.as_slice());
        mpc.reset();
        assert_eq!(mpc.warm_start(), &[0.0; 8]);
    }
}

#[test]
fn horizon_one_plan_finds_grid_argmax() {
    let bounds = ActionBox::symmetric(&[1.0, 1.0]);
    let f = |a: &[f64]| -((a[0] - 0.3).powi(2) + 3.0 * (a[1] + 0.6).powi(2)) + 0.05 * (7.0 * a[0]).sin();
    let grid: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
    let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
    for &x in &grid {
        for &y in &grid {
            let v = f(&[x, y]);
            if v > best.0 {
                best = (v, [x, y]);
            }
        }
    }
    let cfg = MpcConfig { optimizer: Optimizer::Cem(CemConfig { horizon: 1, iterations: 8, ..CemConfig::default() }), particles: 1 };
    let mut mpc = Mpc::new(cfg, bounds).unwrap();
    let a = mpc.act_with(&mut f.clone(), &mut rng::seeded(5)).unwrap();
    let snap = |v: f64| ((v + 1.0) / 0.1).round() * 0.1 - 1.0;
    assert!((snap(a[0]) - best.1[0]).abs() < 1e-9 && (snap(a[1]) - best.1[1]).abs() < 1e-9, "{a:?} vs {:?}", best.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn mpc_actions_stay_in_bounds(seed in any::<u64>(), t in prop::collection::vec(-5.0f64..5.0, 6), mppi in any::<bool>()) {
        let bounds = ActionBox::new(vec![-0.002, -0.1], vec![0.002, 0.1]).unwrap();
        let optimizer = if mppi {
            Optimizer::Mppi(MppiConfig { horizon: 3, samples: 30, sigma: 2.0, ..MppiConfig::default() })
        } else {
            Optimizer::Cem(CemConfig { horizon: 3, population: 30, elites: 3, init_std: Some(vec![1.0, 1.0]), ..CemConfig::default() })
        };
        let mut mpc = Mpc::new(MpcConfig { optimizer, particles: 1 }, bounds.clone()).unwrap();
        let mut r = rng::seeded(seed);
        let mut obj = quadratic(t);
        for _ in 0..3 {
            let a = mpc.act_with(&mut obj, &mut r).unwrap();
            prop_assert!(bounds.contains_sequence(&a));
            prop_assert!(bounds.contains_sequence(mpc.last_plan().unwrap()));
        }
    }
}

// ------------------------------------------------------------------- PETS

#[test]
fn pets_log_is_seed_deterministic() {
    let mut cfg = tiny_pets(1000);
    cfg.initial_random_episodes = 1;
    let run = || {
        let mut env = cube_env();
        let out = pets_train(&mut env, &cfg, 17, |_, _| ControlFlow::Continue(())).unwrap();
        (out.log, out.ensemble)
    };
    let (l1, e1) = run();
    let (l2, e2) = run();
    assert_eq!(l1, l2);
    assert_eq!(e1, e2);
    assert!(!l1.iterations.is_empty());
    assert!(l1.iterations.last().unwrap().env_steps <= 1000);
}

#[test]
fn pets_random_phase_covers_action_box() {
    let mut cfg = tiny_pets(3000);
    cfg.initial_random_episodes = 8;
    let mut env = cube_env();
    let out = pets_train(&mut env, &cfg, 3, |_, _| ControlFlow::Break(())).unwrap();
    let (lo, hi) = env.config().action_bounds();
    let n = out.log.random_steps;
    assert!(n >= 500, "random phase too short: {n}");
    for k in 0..2 {
        let vals: Vec<f64> = (0..n).map(|i| out.buffer.action(i)[k]).collect();
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min >= lo[k] && max <= hi[k]);
        assert!((max - min) >= 0.95 * (hi[k] - lo[k]), "dim {k}: [{min}, {max}]");
    }
}

#[test]
fn pets_zero_budget_is_an_error() {
    let mut env = cube_env();
    let r = pets_train(&mut env, &tiny_pets(0), 1, |_, _| ControlFlow::Continue(()));
    assert!(matches!(r, Err(PlannerError::Config(_))));
}

#[test]
fn pets_respects_step_budget() {
    let mut env = cube_env();
    let out = pets_train(&mut env, &tiny_pets(150), 2, |_, _| ControlFlow::Continue(())).unwrap();
    assert!(out.buffer.len() <= 150);
    assert_eq!(out.buffer.inserted(), out.log.iterations.last().map_or(out.log.random_steps, |i| i.env_steps) as u64);
}

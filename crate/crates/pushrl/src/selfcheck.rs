//! Release gate: gradient checks, physics invariants, reward algebra and
//! optimizer oracles on randomized cases.

use std::f64::consts::PI;
use std::fmt::Write;
use std::time::Instant;

use pushrl_core::env::{bearing, reward, EnvConfig, Goal};
use pushrl_core::geom::{Pose2, Vec2};
use pushrl_core::nn::check::{max_relative_error, numeric_gradient};
use pushrl_core::nn::{gaussian_nll, Activation, GaussianHead, Mlp, Tensor};
use pushrl_core::physics::{
    quasi_static_step, solve_contact_motion, Contact, ContactMode, ConvexShape, PusherMotion, PusherParams, SliderParams,
};
use pushrl_core::planner::{cem_plan, mppi_plan, ActionBox, CemConfig, MppiConfig};
use pushrl_core::rng::{self, PushRng, Rng};
use pushrl_core::sac::{actor_loss, critic_loss, PolicyNet, TwinCritic};

/// Deliberate defects used to prove the checks can fail.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    /// Scales every analytic gradient by 1.01 before comparison.
    pub gradient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Worst observed error or a short note.
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfcheckConfig {
    pub seed: u64,
    pub gradient_pairs: usize,
    pub physics_cases: usize,
    pub reward_cases: usize,
    pub optimizer_trials: usize,
}

impl Default for SelfcheckConfig {
    fn default() -> Self {
        Self { seed: 7, gradient_pairs: 100, physics_cases: 10_000, reward_cases: 1000, optimizer_trials: 5 }
    }
}

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
/// Relative-error floor: gradients below this are compared absolutely.
const FD_FLOOR: f64 = 1e-6;

fn timed(name: &'static str, f: impl FnOnce() -> (usize, usize, String)) -> CheckResult {
    let t = Instant::now();
    let (cases, failures, detail) = f();
    CheckResult { name, cases, failures, detail, seconds: t.elapsed().as_secs_f64() }
}

fn uniform(r: &mut PushRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn net(r: &mut PushRng, dims: &[usize]) -> Mlp {
    Mlp::new(dims, Activation::Tanh, r).expect("valid dims")
}

/// Worst relative error of one (net, input) pair for loss family `kind`.
fn gradient_pair(kind: usize, r: &mut PushRng, faults: Faults) -> f64 {
    let (analytic, numeric) = match kind {
        0 => {
            // Weighted squared output, parameters and inputs.
            let dims = [r.random_range(1..5), r.random_range(2..8), r.random_range(2..6), r.random_range(1..4)];
            let mut m = net(r, &dims);
            let n = 3;
            let x = Tensor::new(vec![n, dims[0]], uniform(r, n * dims[0])).expect("shape");
            let w = uniform(r, n * dims[3]);
            let loss = |m: &Mlp, x: &Tensor| m.predict(x).expect("shape").data().iter().zip(&w).map(|(y, w)| w * y * y).sum::<f64>();
            let (y, trace) = m.forward(&x).expect("shape");
            let g = Tensor::new(y.shape().to_vec(), y.data().iter().zip(&w).map(|(y, w)| 2.0 * w * y).collect()).expect("shape");
            let (mut grads, dx) = m.backward(&trace, &g).expect("shape");
            grads.extend_from_slice(dx.data());
            let mut p = m.params().to_vec();
            let mut num = numeric_gradient(&mut p, FD_STEP, |p| {
                m.params_mut().copy_from_slice(p);
                loss(&m, &x)
            });
            m.params_mut().copy_from_slice(&p);
            let mut xs = x.data().to_vec();
            num.extend(numeric_gradient(&mut xs, FD_STEP, |v| loss(&m, &Tensor::new(x.shape().to_vec(), v.to_vec()).expect("shape"))));
            (grads, num)
        }
        1 => {
            // Gaussian NLL through a network.
            let d = r.random_range(1..4);
            let mut m = net(r, &[3, 8, 8, 2 * d]);
            let x = Tensor::new(vec![5, 3], uniform(r, 15)).expect("shape");
            let t = Tensor::new(vec![5, d], uniform(r, 5 * d)).expect("shape");
            let loss = |m: &Mlp| {
                let head = GaussianHead::from_output(&m.predict(&x).expect("shape")).expect("even width");
                gaussian_nll(&head, &t).expect("shape").loss
            };
            let (raw, trace) = m.forward(&x).expect("shape");
            let head = GaussianHead::from_output(&raw).expect("even width");
            let nll = gaussian_nll(&head, &t).expect("shape");
            let g = GaussianHead::output_gradient(&raw, &nll.grad_mean, &nll.grad_log_var);
            let (grads, _) = m.backward(&trace, &g).expect("shape");
            let mut p = m.params().to_vec();
            let num = numeric_gradient(&mut p, FD_STEP, |p| {
                m.params_mut().copy_from_slice(p);
                loss(&m)
            });
            (grads, num)
        }
        2 => {
            // Critic regression loss.
            let mut q = net(r, &[5, 10, 10, 1]);
            let (obs, act, y) = (uniform(r, 18), uniform(r, 12), uniform(r, 6));
            let (_, grads) = critic_loss(&q, &obs, &act, &y).expect("shape");
            let mut p = q.params().to_vec();
            let num = numeric_gradient(&mut p, FD_STEP, |p| {
                q.params_mut().copy_from_slice(p);
                critic_loss(&q, &obs, &act, &y).expect("shape").0
            });
            (grads, num)
        }
        _ => {
            // Actor loss through both critics.
            let bounds = ActionBox::symmetric(&[1.0, 1.0]);
            let mut policy = PolicyNet::from_parts(net(r, &[3, 10, 4]), bounds).expect("shape");
            let d = [5, 12, 12, 1];
            let critics = TwinCritic::from_parts([net(r, &d), net(r, &d)], [net(r, &d), net(r, &d)]).expect("shape");
            let obs = uniform(r, 15);
            let noise: Vec<f64> = (0..10).map(|_| rng::normal(r)).collect();
            let alpha = r.random_range(0.05..1.0);
            let grads = actor_loss(&policy, &critics, &obs, &noise, alpha).expect("shape").grads;
            let mut p = policy.net().params().to_vec();
            let num = numeric_gradient(&mut p, FD_STEP, |p| {
                policy.net_mut().params_mut().copy_from_slice(p);
                actor_loss(&policy, &critics, &obs, &noise, alpha).expect("shape").loss
            });
            (grads, num)
        }
    };
    let scale = if faults.gradient { 1.01 } else { 1.0 };
    let analytic: Vec<f64> = analytic.iter().map(|g| g * scale).collect();
    max_relative_error(&analytic, &numeric, FD_FLOOR)
}

/// `pairs` random (net, input) pairs cycling through MLP output, NLL, critic
/// and actor losses.
pub fn gradient_check(pairs: usize, seed: u64, faults: Faults) -> CheckResult {
    timed("gradients vs central differences", || {
        let mut r = rng::stream(seed, 100);
        let errs: Vec<f64> = (0..pairs).map(|i| gradient_pair(i % 4, &mut r, faults)).collect();
        let worst = errs.iter().copied().fold(0.0, f64::max);
        let bad = errs.iter().filter(|e| !(**e < GRADIENT_TOLERANCE)).count();
        (pairs, bad, format!("max rel err {worst:.2e} (tol {GRADIENT_TOLERANCE:.0e})"))
    })
}

struct Scene {
    object: Pose2,
    slider: SliderParams,
    contact: Contact,
    velocity: Vec2,
}

/// Box face contact with a random slider and contact velocity, withdrawal
/// included.
fn scene(r: &mut PushRng) -> Scene {
    loop {
        let (dx, dy) = (r.random_range(0.03..0.12), r.random_range(0.03..0.12));
        let Ok(shape) = ConvexShape::rectangle("box", dx, dy) else { continue };
        let cof_offset = Vec2::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)) * (0.5 * shape.inradius());
        let slider = SliderParams { mu_contact: r.random_range(0.05..1.0), c_ls: 0.6 * shape.circumradius(), cof_offset };
        if slider.validate(&shape).is_err() {
            continue;
        }
        let object = Pose2::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), r.random_range(-PI..PI));
        let s: f64 = r.random_range(-0.99..0.99);
        let contact = Contact {
            point: object.transform_point(Vec2::new(-dx / 2.0, s * dy / 2.0)),
            normal: object.transform_vector(Vec2::new(-1.0, 0.0)),
            depth: 0.001,
            edge_index: 0,
            mode: ContactMode::Sticking,
        };
        let velocity = (-contact.normal).rotate(r.random_range(-PI..PI)) * r.random_range(0.0..0.002);
        return Scene { object, slider, contact, velocity };
    }
}

fn invariant(name: &'static str, cases: usize, seed: u64, tag: u64, mut ok: impl FnMut(&Scene) -> bool) -> CheckResult {
    timed(name, || {
        let mut r = rng::stream(seed, tag);
        let bad = (0..cases).filter(|_| !ok(&scene(&mut r))).count();
        (cases, bad, format!("{bad} violations"))
    })
}

/// Sticking velocity match, friction-cone containment, mirror symmetry,
/// no-pull and zero rotation under a push through the center of friction.
pub fn physics_invariants(cases: usize, seed: u64) -> Vec<CheckResult> {
    let solve = |s: &Scene, c: &Contact, v: Vec2| solve_contact_motion(&s.object, &s.slider, c, v);
    vec![
        invariant("sticking velocity match", cases, seed, 200, |s| match solve(s, &s.contact, s.velocity) {
            Ok(sol) if sol.mode == ContactMode::Sticking => {
                (sol.twist.point_velocity(s.contact.point - sol.cof) - s.velocity).norm() < 1e-9
            }
            Ok(_) => true,
            Err(_) => false,
        }),
        invariant("friction cone containment", cases, seed, 201, |s| {
            let Ok(sol) = solve(s, &s.contact, s.velocity) else { return false };
            let inward = -s.contact.normal;
            if s.velocity.dot(inward) <= 0.0 {
                return sol.mode == ContactMode::Separated;
            }
            let angle = inward.cross(sol.force).atan2(inward.dot(sol.force)).abs();
            let half = s.slider.mu_contact.atan();
            let sliding = matches!(sol.mode, ContactMode::SlidingLeft | ContactMode::SlidingRight);
            angle <= half + 1e-9 && (!sliding || (angle - half).abs() < 1e-9)
        }),
        invariant("mirror symmetry", cases, seed, 202, |s| {
            let m = |v: Vec2| Vec2::new(v.x, -v.y);
            let object = Pose2::new(s.object.x, -s.object.y, -s.object.theta);
            let slider = SliderParams { cof_offset: m(s.slider.cof_offset), ..s.slider };
            let contact = Contact { point: m(s.contact.point), normal: m(s.contact.normal), ..s.contact };
            let (Ok(a), Ok(b)) = (solve(s, &s.contact, s.velocity), solve_contact_motion(&object, &slider, &contact, m(s.velocity))) else {
                return false;
            };
            let swapped = match a.mode {
                ContactMode::SlidingLeft => ContactMode::SlidingRight,
                ContactMode::SlidingRight => ContactMode::SlidingLeft,
                other => other,
            };
            (a.twist.v.x - b.twist.v.x).abs() < 1e-9
                && (a.twist.v.y + b.twist.v.y).abs() < 1e-9
                && (a.twist.omega + b.twist.omega).abs() < 1e-9
                && b.mode == swapped
        }),
        invariant("no pull on withdrawal", cases, seed, 203, |s| {
            let inward = -s.contact.normal;
            let away = if s.velocity.dot(inward) > 0.0 { -s.velocity } else { s.velocity };
            let pose = Pose2::from_parts(s.contact.point, inward.angle());
            let local = pose.inverse_transform_vector(away);
            let motion = PusherMotion::new(local.x, local.y, 0.0);
            match quasi_static_step(&s.object, &s.slider, &s.contact, &pose, &PusherParams::default(), &motion) {
                Ok(step) => step.object_pose == s.object && step.mode == ContactMode::Separated,
                Err(_) => false,
            }
        }),
        invariant("push through COF does not rotate", cases, seed, 204, |s| {
            let inward = -s.contact.normal;
            let cof = s.object.transform_point(s.slider.cof_offset);
            let contact = Contact { point: cof - inward * 0.05, ..s.contact };
            match solve(s, &contact, inward * (s.velocity.norm() + 1e-4)) {
                Ok(sol) => sol.mode == ContactMode::Sticking && sol.twist.omega.abs() < 1e-12,
                Err(_) => false,
            }
        }),
    ]
}

/// Direct evaluation of the two-zone reward from its definition.
pub fn reward_oracle(o: (f64, f64, f64), pusher_theta: f64, g: (f64, f64), approach: f64) -> f64 {
    let (dx, dy) = (g.0 - o.0, g.1 - o.1);
    let dist = (dx * dx + dy * dy).sqrt();
    let normal = 1.0 - (pusher_theta - o.2).cos();
    if dist > approach {
        let b = if dist == 0.0 { 0.0 } else { dy.atan2(dx) };
        -((1.0 - (o.2 - b).cos()) + normal)
    } else {
        -(dist + normal)
    }
}

pub fn reward_algebra(cases: usize, seed: u64) -> Vec<CheckResult> {
    let cfg = EnvConfig::default();
    let branches = timed("reward branches vs oracle", || {
        let mut r = rng::stream(seed, 300);
        let ws = cfg.workspace;
        let mut worst = 0.0f64;
        let mut bad = 0;
        for _ in 0..cases {
            let o = (r.random_range(ws.x_min..ws.x_max), r.random_range(ws.y_min..ws.y_max), r.random_range(-PI..PI));
            // Half the goals inside the approach zone.
            let g = if r.random_bool(0.5) {
                let (d, a) = (r.random_range(0.0..cfg.approach_distance), r.random_range(-PI..PI));
                (o.0 + d * a.cos(), o.1 + d * a.sin())
            } else {
                (r.random_range(ws.x_min..ws.x_max), r.random_range(ws.y_min..ws.y_max))
            };
            let p = r.random_range(-PI..PI);
            let got = reward(&Pose2::new(o.0, o.1, o.2), p, &Goal::new(g.0, g.1), &cfg);
            let err = (got - reward_oracle(o, p, g, cfg.approach_distance)).abs();
            worst = worst.max(err);
            bad += usize::from(!(err <= 1e-12));
        }
        (cases, bad, format!("max abs err {worst:.1e}"))
    });
    let sweep = timed("far-zone monotone in misalignment", || {
        let mut r = rng::stream(seed, 301);
        let trials = 20;
        let mut bad = 0;
        for _ in 0..trials {
            let goal = Goal::new(r.random_range(0.2..0.4), r.random_range(-0.3..0.3));
            let b = bearing(Vec2::ZERO, goal.position());
            let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
            let mut prev = reward(&Pose2::new(0.0, 0.0, b), b, &goal, &cfg);
            for deg in 1..=180 {
                let theta = b + sign * (deg as f64).to_radians();
                let v = reward(&Pose2::new(0.0, 0.0, theta), theta, &goal, &cfg);
                bad += usize::from(!(v < prev));
                prev = v;
            }
        }
        (trials * 180, bad, format!("{bad} non-decreasing steps"))
    });
    vec![branches, sweep]
}

fn quadratic(target: Vec<f64>) -> impl FnMut(&[f64]) -> f64 {
    move |a: &[f64]| -a.iter().zip(&target).map(|(x, t)| (x - t) * (x - t)).sum::<f64>()
}

/// CEM within 1e-2 and MPPI within 5e-2 of a quadratic optimum per action
/// dimension; CEM elite means never decrease.
type Planner<'a> = &'a dyn Fn(&mut dyn FnMut(&[f64]) -> f64, &mut PushRng) -> Vec<f64>;

pub fn optimizer_oracles(trials: usize, seed: u64) -> Vec<CheckResult> {
    let bounds = ActionBox::symmetric(&[1.0, 1.0]);
    let horizon = 5;
    let recover = |name, tol: f64, tag, plan: Planner| {
        timed(name, || {
            let mut r = rng::stream(seed, tag);
            let mut worst = 0.0f64;
            for _ in 0..trials {
                let target: Vec<f64> = (0..2 * horizon).map(|_| r.random_range(-0.8..0.8)).collect();
                let mut q = quadratic(target.clone());
                let a = plan(&mut q, &mut r);
                worst = a.iter().zip(&target).map(|(a, t)| (a - t).abs()).fold(worst, f64::max);
            }
            (trials, usize::from(!(worst < tol)), format!("max |a - a*| {worst:.1e} (tol {tol:.0e})"))
        })
    };
    let cem_cfg = CemConfig { horizon, iterations: 10, ..CemConfig::default() };
    let mppi_cfg = MppiConfig { horizon, samples: 2000, lambda: 0.1, sigma: 0.3, iterations: 10 };
    let warm = bounds.center_sequence(horizon);
    let cem = recover("CEM quadratic optimum", 1e-2, 400, &|f, r| {
        cem_plan(&mut |a: &[f64]| f(a), &bounds, &cem_cfg, &warm, r).map(|p| p.actions).unwrap_or_default()
    });
    let mppi = recover("MPPI quadratic optimum", 5e-2, 401, &|f, r| {
        mppi_plan(&mut |a: &[f64]| f(a), &bounds, &mppi_cfg, &warm, r).map(|p| p.actions).unwrap_or_default()
    });
    let elites = timed("CEM elite mean non-decreasing", || {
        let mut r = rng::stream(seed, 402);
        let cfg = CemConfig { horizon: 4, population: 60, elites: 6, iterations: 8, ..CemConfig::default() };
        let n = 20;
        let bad = (0..n)
            .filter(|_| {
                let phase: f64 = r.random_range(0.0..6.0);
                let mut obj = |a: &[f64]| a.iter().enumerate().map(|(i, x)| (3.0 * x + phase * i as f64).sin()).sum::<f64>();
                match cem_plan(&mut obj, &bounds, &cfg, &bounds.center_sequence(4), &mut r) {
                    Ok(p) => !p.elite_values.windows(2).all(|w| w[1] >= w[0]),
                    Err(_) => true,
                }
            })
            .count();
        (n, bad, format!("{bad} decreasing runs"))
    });
    vec![cem, mppi, elites]
}

pub fn run_all(config: &SelfcheckConfig, faults: Faults) -> Vec<CheckResult> {
    let mut out = vec![gradient_check(config.gradient_pairs, config.seed, faults)];
    out.extend(physics_invariants(config.physics_cases, config.seed));
    out.extend(reward_algebra(config.reward_cases, config.seed));
    out.extend(optimizer_oracles(config.optimizer_trials, config.seed));
    out
}

pub fn format_table(results: &[CheckResult]) -> String {
    let mut s = String::new();
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in results {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(s, "{verdict}  {:<width$}  {:>6} cases  {:>6.2}s  {}", r.name, r.cases, r.seconds, r.detail);
    }
    s
}

use alloc::vec;
use alloc::vec::Vec;

use super::{Batch, PolicyNet, SacConfig, SacError, LOG_STD_MAX, LOG_STD_MIN};
use crate::nn::{Activation, Adam, AdamConfig, Mlp};
use crate::planner::ActionBox;
use crate::rng::{self, PushRng};

/// Two independent Q-functions over `[obs, action]` and their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinCritic {
    pub q: [Mlp; 2],
    pub target: [Mlp; 2],
}

fn concat_rows(obs: &[f64], act: &[f64], n: usize) -> Vec<f64> {
    let o = obs.len() / n.max(1);
    let a = act.len() / n.max(1);
    let mut x = Vec::with_capacity(n * (o + a));
    for r in 0..n {
        x.extend_from_slice(&obs[r * o..(r + 1) * o]);
        x.extend_from_slice(&act[r * a..(r + 1) * a]);
    }
    x
}

impl TwinCritic {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut PushRng) -> Result<Self, SacError> {
        let mut dims = vec![obs_dim + action_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let q1 = Mlp::new(&dims, Activation::Relu, rng)?;
        let q2 = Mlp::new(&dims, Activation::Relu, rng)?;
        Ok(Self { target: [q1.clone(), q2.clone()], q: [q1, q2] })
    }

    pub fn from_parts(q: [Mlp; 2], target: [Mlp; 2]) -> Result<Self, SacError> {
        let d = q[0].dims();
        if q[0].output_dim() != 1 || [&q[1], &target[0], &target[1]].iter().any(|m| m.dims() != d) {
            return Err(SacError::Dimension("critic architectures must match and output one value"));
        }
        Ok(Self { q, target })
    }

    pub fn input_dim(&self) -> usize {
        self.q[0].input_dim()
    }

    /// `target ← τ·main + (1 − τ)·target`.
    pub fn soft_update(&mut self, tau: f64) {
        for (t, q) in self.target.iter_mut().zip(&self.q) {
            t.soft_update_from(q, tau);
        }
    }

    pub fn q_values(&self, obs: &[f64], act: &[f64], n: usize) -> [Vec<f64>; 2] {
        let x = concat_rows(obs, act, n);
        [self.q[0].forward_slice(&x, n), self.q[1].forward_slice(&x, n)]
    }

    pub fn min_target(&self, obs: &[f64], act: &[f64], n: usize) -> Vec<f64> {
        let x = concat_rows(obs, act, n);
        let a = self.target[0].forward_slice(&x, n);
        let b = self.target[1].forward_slice(&x, n);
        a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect()
    }
}

/// Soft Bellman targets `r + γ(1 − done)(min Q̄(s', a') − α log π(a'|s'))`
/// with `a'` drawn from the policy using `noise`.
pub fn critic_targets(
    policy: &PolicyNet,
    critics: &TwinCritic,
    batch: &Batch,
    gamma: f64,
    alpha: f64,
    noise: &[f64],
) -> Result<Vec<f64>, SacError> {
    let n = batch.len();
    let next = policy.sample_with_noise(&batch.next_obs, n, noise)?;
    let q = critics.min_target(&batch.next_obs, &next.actions, n);
    Ok((0..n).map(|i| batch.rewards[i] + gamma * (1.0 - batch.dones[i]) * (q[i] - alpha * next.log_prob[i])).collect())
}

/// `½ mean (Q(s, a) − y)²` and its parameter gradient.
pub fn critic_loss(critic: &Mlp, obs: &[f64], act: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>), SacError> {
    let n = targets.len();
    if critic.output_dim() != 1 || obs.len() + act.len() != n * critic.input_dim() {
        return Err(SacError::Dimension("critic batch"));
    }
    let x = concat_rows(obs, act, n);
    let (q, trace) = critic.forward_slice_traced(&x, n);
    let mut loss = 0.0;
    let mut g = Vec::with_capacity(n);
    for (qi, yi) in q.iter().zip(targets) {
        let e = qi - yi;
        loss += 0.5 * e * e / n as f64;
        g.push(e / n as f64);
    }
    let mut grads = vec![0.0; critic.num_params()];
    critic.backward_slice(&trace, &g, &mut grads)?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub mean_log_prob: f64,
}

/// `mean(α log π(a|s) − min Q(s, a))` with `a` reparameterized by fixed
/// `noise`, and its gradient with respect to the policy parameters.
pub fn actor_loss(policy: &PolicyNet, critics: &TwinCritic, obs: &[f64], noise: &[f64], alpha: f64) -> Result<ActorLoss, SacError> {
    let ad = policy.action_dim();
    let n = noise.len() / ad;
    if obs.len() != n * policy.obs_dim() || noise.len() != n * ad || critics.input_dim() != policy.obs_dim() + ad {
        return Err(SacError::Dimension("actor batch"));
    }
    let (raw, trace) = policy.net().forward_slice_traced(obs, n);
    let s = policy.sample_from_raw(&raw, noise);

    // dQmin/da per row through whichever critic is smaller.
    let x = concat_rows(obs, &s.actions, n);
    let (q1, t1) = critics.q[0].forward_slice_traced(&x, n);
    let (q2, t2) = critics.q[1].forward_slice_traced(&x, n);
    let pick1: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| if a <= b { 1.0 } else { 0.0 }).collect();
    let pick2: Vec<f64> = pick1.iter().map(|p| 1.0 - p).collect();
    let mut scratch = vec![0.0; critics.q[0].num_params()];
    let dx1 = critics.q[0].backward_slice(&t1, &pick1, &mut scratch)?;
    let dx2 = critics.q[1].backward_slice(&t2, &pick2, &mut scratch)?;
    let in_dim = critics.input_dim();
    let od = policy.obs_dim();
    let half = policy.bounds().half_range();

    let nf = n as f64;
    let mut loss = 0.0;
    let mut grad_out = vec![0.0; n * 2 * ad];
    for r in 0..n {
        loss += (alpha * s.log_prob[r] - q1[r].min(q2[r])) / nf;
        for j in 0..ad {
            let k = r * ad + j;
            let dq = dx1[r * in_dim + od + j] + dx2[r * in_dim + od + j];
            let t = libm::tanh(s.pre_squash[k]);
            let sigma = libm::exp(s.log_std[k]);
            let da_du = half[j] * (1.0 - t * t);
            // ∂ log π / ∂u = 2 tanh(u) through the squash correction.
            let dl_du = alpha * 2.0 * t - dq * da_du;
            grad_out[r * 2 * ad + j] = dl_du / nf;
            let raw_ls = raw[r * 2 * ad + ad + j];
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_ls) {
                grad_out[r * 2 * ad + ad + j] = (dl_du * sigma * noise[k] - alpha) / nf;
            }
        }
    }
    let mut grads = vec![0.0; policy.net().num_params()];
    policy.net().backward_slice(&trace, &grad_out, &mut grads)?;
    let mean_log_prob = s.log_prob.iter().sum::<f64>() / nf;
    Ok(ActorLoss { loss, grads, mean_log_prob })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_loss: [f64; 2],
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub mean_log_prob: f64,
}

/// Policy, critics, temperature and their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    config: SacConfig,
    policy: PolicyNet,
    critics: TwinCritic,
    log_alpha: f64,
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    alpha_opt: Adam,
    updates: u64,
}

impl SacAgent {
    pub fn new(obs_dim: usize, bounds: ActionBox, config: SacConfig, rng: &mut PushRng) -> Result<Self, SacError> {
        config.validate()?;
        let policy = PolicyNet::new(obs_dim, bounds.clone(), &config.hidden, rng)?;
        let critics = TwinCritic::new(obs_dim, bounds.dim(), &config.hidden, rng)?;
        Self::from_parts(config, policy, critics, None)
    }

    /// Fresh optimizer state around given networks. `log_alpha` defaults to
    /// `ln(initial_alpha)`.
    pub fn from_parts(config: SacConfig, policy: PolicyNet, critics: TwinCritic, log_alpha: Option<f64>) -> Result<Self, SacError> {
        config.validate()?;
        if critics.input_dim() != policy.obs_dim() + policy.action_dim() {
            return Err(SacError::Dimension("critic input vs policy"));
        }
        let adam = |n: usize, lr: f64| Adam::new(n, AdamConfig { lr, ..AdamConfig::default() });
        Ok(Self {
            actor_opt: adam(policy.net().num_params(), config.actor_lr),
            critic_opts: [adam(critics.q[0].num_params(), config.critic_lr), adam(critics.q[1].num_params(), config.critic_lr)],
            alpha_opt: adam(1, config.alpha_lr),
            log_alpha: log_alpha.unwrap_or_else(|| libm::log(config.initial_alpha)),
            config,
            policy,
            critics,
            updates: 0,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn policy(&self) -> &PolicyNet {
        &self.policy
    }

    pub fn critics(&self) -> &TwinCritic {
        &self.critics
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn alpha(&self) -> f64 {
        libm::exp(self.log_alpha)
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn act(&self, obs: &[f64], deterministic: bool, rng: &mut PushRng) -> Result<Vec<f64>, SacError> {
        self.policy.act(obs, deterministic, rng)
    }

    /// One gradient step on critics, actor and temperature, then a soft
    /// target update.
    pub fn update(&mut self, batch: &Batch, rng: &mut PushRng) -> Result<UpdateStats, SacError> {
        let n = batch.len();
        if n < 2 {
            return Err(SacError::BatchTooSmall(n));
        }
        let ad = self.policy.action_dim();
        if batch.obs_dim != self.policy.obs_dim() || batch.action_dim != ad {
            return Err(SacError::Dimension("batch vs agent"));
        }
        let alpha = self.alpha();
        let mut stats = UpdateStats::default();

        let next_noise: Vec<f64> = (0..n * ad).map(|_| rng::normal(rng)).collect();
        let y = critic_targets(&self.policy, &self.critics, batch, self.config.gamma, alpha, &next_noise)?;
        for i in 0..2 {
            let (loss, grads) = critic_loss(&self.critics.q[i], &batch.obs, &batch.actions, &y)?;
            self.critic_opts[i].step(self.critics.q[i].params_mut(), &grads)?;
            stats.critic_loss[i] = loss;
        }

        let noise: Vec<f64> = (0..n * ad).map(|_| rng::normal(rng)).collect();
        let actor = actor_loss(&self.policy, &self.critics, &batch.obs, &noise, alpha)?;
        self.actor_opt.step(self.policy.net_mut().params_mut(), &actor.grads)?;
        stats.actor_loss = actor.loss;
        stats.mean_log_prob = actor.mean_log_prob;

        if self.config.learn_alpha {
            let gap = actor.mean_log_prob + self.config.target_entropy_for(ad);
            stats.alpha_loss = -self.log_alpha * gap;
            let mut la = [self.log_alpha];
            self.alpha_opt.step(&mut la, &[-gap])?;
            self.log_alpha = la[0];
        }
        stats.alpha = self.alpha();

        self.critics.soft_update(self.config.tau);
        self.updates += 1;
        Ok(stats)
    }
}

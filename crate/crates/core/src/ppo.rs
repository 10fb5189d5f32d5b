//! Proximal policy optimisation: rollouts, GAE, clipped surrogate updates.

use std::collections::VecDeque;
use std::io::Write as _;
use std::path::{Path as FsPath, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Env, Observation, OBS_DIM};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ActionMode, EvalSettings};
use crate::kpi::{KpiSet, DEFAULT_CHECKPOINTS, DEFAULT_REACH_TOLERANCE};
use crate::net::{log_softmax, sample_action, softmax, DenseNet};
use crate::path::Path;
use crate::scenario::Scenario;
use crate::vehicle::ACTION_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Steps per environment per rollout (T).
    pub n_steps: usize,
    /// Parallel environments (E).
    pub n_envs: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub clip_range: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    /// Decay the learning rate linearly to zero over the run.
    pub anneal_lr: bool,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    /// Clip the policy and value gradients to `max_grad_norm` separately
    /// instead of by their combined norm.
    pub clip_per_network: bool,
    pub adam_eps: f64,
    pub total_timesteps: usize,
    pub normalize_advantages: bool,
    /// Divide rewards by a running std of the discounted return before
    /// they enter the buffer (logged returns stay unscaled).
    pub scale_rewards: bool,
    /// Updates between greedy KPI evaluations; 0 disables them.
    pub eval_interval: usize,
    /// Updates between weight checkpoints; 0 disables them.
    pub checkpoint_interval: usize,
}

impl Default for PpoConfig {
    /// The usual PPO2 settings, except for a larger, linearly annealed
    /// learning rate and per-network gradient clipping. With one global
    /// clip the value loss (returns of several hundred) dominates the norm
    /// and the policy barely moves within 1e6 steps.
    fn default() -> Self {
        Self {
            n_steps: 128,
            n_envs: 8,
            epochs: 4,
            minibatches: 4,
            clip_range: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 2e-3,
            anneal_lr: true,
            ent_coef: 0.01,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            clip_per_network: true,
            adam_eps: 1e-5,
            total_timesteps: 1_000_000,
            normalize_advantages: true,
            scale_rewards: false,
            eval_interval: 50,
            checkpoint_interval: 100,
        }
    }
}

impl PpoConfig {
    pub fn batch_size(&self) -> usize {
        self.n_steps * self.n_envs
    }

    pub fn minibatch_size(&self) -> usize {
        self.batch_size() / self.minibatches
    }

    /// Whole rollouts that fit into `total_timesteps`.
    pub fn update_count(&self) -> usize {
        self.total_timesteps / self.batch_size()
    }

    /// Learning rate for 1-based update `update`.
    pub fn learning_rate_at(&self, update: usize) -> f64 {
        if !self.anneal_lr {
            return self.learning_rate;
        }
        let n = self.update_count().max(1) as f64;
        self.learning_rate * (1.0 - (update.saturating_sub(1) as f64 / n)).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_steps == 0 || self.n_envs == 0 || self.epochs == 0 || self.minibatches == 0 {
            return bad("n_steps, n_envs, epochs and minibatches must be positive".into());
        }
        if self.batch_size() % self.minibatches != 0 {
            return bad(format!(
                "minibatches ({}) must divide n_steps * n_envs ({})",
                self.minibatches,
                self.batch_size()
            ));
        }
        if !(self.clip_range > 0.0 && self.clip_range < 1.0) {
            return bad(format!("clip_range must lie in (0, 1), got {}", self.clip_range));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad(format!("gae_lambda must lie in (0, 1], got {}", self.gae_lambda));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("ent_coef", self.ent_coef),
            ("vf_coef", self.vf_coef),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.max_grad_norm > 0.0) || !(self.adam_eps > 0.0) {
            return bad("max_grad_norm and adam_eps must be positive".into());
        }
        if self.total_timesteps < self.batch_size() {
            return bad(format!(
                "total_timesteps ({}) is smaller than one rollout ({})",
                self.total_timesteps,
                self.batch_size()
            ));
        }
        Ok(())
    }
}

/// Advantages and returns of one trajectory slice.
///
/// `dones[t]` marks that the episode ended after step `t`; `bootstrap` is
/// the value estimate of the state following the last step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::InvalidArgument(format!(
            "GAE inputs differ in length: {} rewards, {} values, {} dones",
            n,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to mean 0, std 1 (std guarded at 1e-8).
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

/// Running reward scale: each environment's discounted return feeds a
/// running variance, and rewards are divided by its square root.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardScaler {
    gamma: f64,
    clip: f64,
    returns: Vec<f64>,
    count: f64,
    mean: f64,
    var: f64,
}

impl RewardScaler {
    pub fn new(n_envs: usize, gamma: f64) -> Self {
        Self {
            gamma,
            clip: 10.0,
            returns: vec![0.0; n_envs],
            // tiny prior so the first update is well defined
            count: 1e-4,
            mean: 0.0,
            var: 1.0,
        }
    }

    pub fn std(&self) -> f64 {
        (self.var + 1e-8).sqrt()
    }

    /// Scaled reward of environment `env`; `done` resets its return.
    pub fn scale(&mut self, env: usize, reward: f64, done: bool) -> f64 {
        let g = self.returns[env] * self.gamma + reward;
        let delta = g - self.mean;
        let total = self.count + 1.0;
        self.mean += delta / total;
        self.var = (self.var * self.count + delta * delta * self.count / total) / total;
        self.count = total;
        self.returns[env] = if done { 0.0 } else { g };
        (reward / self.std()).clamp(-self.clip, self.clip)
    }
}

/// Rollout storage for T steps of E environments, step-major
/// (index `t * E + e`).
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    n_steps: usize,
    n_envs: usize,
    pub observations: Vec<[f64; OBS_DIM]>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_steps: usize, n_envs: usize) -> Self {
        let cap = n_steps * n_envs;
        Self {
            n_steps,
            n_envs,
            observations: Vec::with_capacity(cap),
            actions: Vec::with_capacity(cap),
            log_probs: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
            rewards: Vec::with_capacity(cap),
            dones: Vec::with_capacity(cap),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.n_steps * self.n_envs
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.capacity()
    }

    pub fn clear(&mut self) {
        self.observations.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.values.clear();
        self.rewards.clear();
        self.dones.clear();
        self.advantages.clear();
        self.returns.clear();
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if self.is_full() {
            return Err(Error::InvalidState("rollout buffer is full".into()));
        }
        self.observations.push(t.observation);
        self.actions.push(t.action);
        self.log_probs.push(t.log_prob);
        self.values.push(t.value);
        self.rewards.push(t.reward);
        self.dones.push(t.done);
        Ok(())
    }

    /// Fills advantages and returns; `last_values[e]` bootstraps env `e`.
    pub fn finish(&mut self, last_values: &[f64], gamma: f64, lambda: f64) -> Result<()> {
        if !self.is_full() {
            return Err(Error::InvalidState(format!(
                "advantages need a full buffer ({} of {} steps)",
                self.len(),
                self.capacity()
            )));
        }
        if last_values.len() != self.n_envs {
            return Err(Error::InvalidArgument(format!(
                "{} bootstrap values for {} environments",
                last_values.len(),
                self.n_envs
            )));
        }
        let (t_max, e_max) = (self.n_steps, self.n_envs);
        self.advantages = vec![0.0; self.capacity()];
        self.returns = vec![0.0; self.capacity()];
        for e in 0..e_max {
            let col = |v: &[f64]| (0..t_max).map(|t| v[t * e_max + e]).collect::<Vec<_>>();
            let dones: Vec<bool> = (0..t_max).map(|t| self.dones[t * e_max + e]).collect();
            let (adv, ret) = compute_gae(
                &col(&self.rewards),
                &col(&self.values),
                &dones,
                last_values[e],
                gamma,
                lambda,
            )?;
            for t in 0..t_max {
                self.advantages[t * e_max + e] = adv[t];
                self.returns[t * e_max + e] = ret[t];
            }
        }
        Ok(())
    }
}

/// One environment step as stored in the buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub observation: [f64; OBS_DIM],
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Loss terms and gradients of one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchGrad {
    pub policy_grad: Vec<f64>,
    pub value_grad: Vec<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

impl MinibatchGrad {
    pub fn loss(&self, config: &PpoConfig) -> f64 {
        self.policy_loss + config.vf_coef * self.value_loss - config.ent_coef * self.entropy
    }
}

/// Gradients of the clipped PPO loss over the samples `idx` of `buffer`,
/// using `advantages` in place of the buffer's own.
pub fn minibatch_gradients(
    buffer: &RolloutBuffer,
    advantages: &[f64],
    idx: &[usize],
    policy: &DenseNet,
    value: &DenseNet,
    config: &PpoConfig,
) -> Result<MinibatchGrad> {
    let b = idx.len() as f64;
    let eps = config.clip_range;
    let mut out = MinibatchGrad {
        policy_grad: vec![0.0; policy.param_count()],
        value_grad: vec![0.0; value.param_count()],
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        clip_fraction: 0.0,
        approx_kl: 0.0,
    };
    let mut gz = vec![0.0; policy.output_dim()];
    for &i in idx {
        let obs = &buffer.observations[i];
        let a = buffer.actions[i];
        let adv = advantages[i];

        let trace = policy.forward_trace(obs)?;
        let logp = log_softmax(&trace.raw);
        let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let entropy: f64 = -p.iter().zip(&logp).map(|(pi, li)| pi * li).sum::<f64>();
        let log_ratio = logp[a] - buffer.log_probs[i];
        let ratio = log_ratio.exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        out.policy_loss -= unclipped.min(clipped) / b;
        out.entropy += entropy / b;
        out.approx_kl -= log_ratio / b;
        if (ratio - 1.0).abs() > eps {
            out.clip_fraction += 1.0 / b;
        }

        // ∂/∂z of −min(ρA, clip(ρ)A)/B: the clipped branch is flat in z.
        let surrogate_active = unclipped <= clipped;
        let coef = if surrogate_active { -ratio * adv / b } else { 0.0 };
        // ∂/∂z of −c_e·H/B, with ∂H/∂z_k = −p_k (log p_k + H).
        for k in 0..gz.len() {
            let onehot = if k == a { 1.0 } else { 0.0 };
            gz[k] = coef * (onehot - p[k]) + config.ent_coef / b * p[k] * (logp[k] + entropy);
        }
        policy.backward_raw(&trace, &gz, &mut out.policy_grad);

        let vtrace = value.forward_trace(obs)?;
        let v = vtrace.raw[0];
        let err = v - buffer.returns[i];
        out.value_loss += err * err / b;
        value.backward_raw(&vtrace, &[config.vf_coef * 2.0 * err / b], &mut out.value_grad);
    }
    Ok(out)
}

/// Per-update statistics, averaged over minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Networks plus their optimiser states.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub policy: DenseNet,
    pub value: DenseNet,
    policy_opt: Adam,
    value_opt: Adam,
}

impl Learner {
    pub fn new(policy: DenseNet, value: DenseNet, config: &PpoConfig) -> Self {
        let policy_opt = Adam::new(policy.param_count(), config.learning_rate, config.adam_eps);
        let value_opt = Adam::new(value.param_count(), config.learning_rate, config.adam_eps);
        Self {
            policy,
            value,
            policy_opt,
            value_opt,
        }
    }

    /// Fresh orthogonally initialised networks.
    pub fn init(config: &PpoConfig, rng: &mut impl Rng) -> Self {
        let policy = DenseNet::policy(OBS_DIM, ACTION_COUNT, rng);
        let value = DenseNet::value(OBS_DIM, rng);
        Self::new(policy, value, config)
    }

    /// Epochs of shuffled minibatch steps over a finished buffer.
    pub fn update(
        &mut self,
        buffer: &RolloutBuffer,
        config: &PpoConfig,
        update: usize,
        rng: &mut impl Rng,
    ) -> Result<UpdateStats> {
        if !buffer.is_full() || buffer.advantages.len() != buffer.len() {
            return Err(Error::InvalidState(
                "update needs a full buffer with advantages".into(),
            ));
        }
        if buffer.len() % config.minibatches != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} minibatches do not divide a batch of {}",
                config.minibatches,
                buffer.len()
            )));
        }
        let mut advantages = buffer.advantages.clone();
        if config.normalize_advantages {
            normalize(&mut advantages);
        }
        let lr = config.learning_rate_at(update);
        self.policy_opt.lr = lr;
        self.value_opt.lr = lr;
        let mb = buffer.len() / config.minibatches;
        let mut idx: Vec<usize> = (0..buffer.len()).collect();
        let mut acc = [0.0; 5];
        let mut count = 0.0;
        for _ in 0..config.epochs {
            idx.shuffle(rng);
            for chunk in idx.chunks(mb) {
                let mut g =
                    minibatch_gradients(buffer, &advantages, chunk, &self.policy, &self.value, config)?;
                let loss = g.loss(config);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        update,
                        message: format!(
                            "policy loss {}, value loss {}, entropy {}",
                            g.policy_loss, g.value_loss, g.entropy
                        ),
                    });
                }
                if config.clip_per_network {
                    clip_global_norm(&mut [&mut g.policy_grad], config.max_grad_norm);
                    clip_global_norm(&mut [&mut g.value_grad], config.max_grad_norm);
                } else {
                    clip_global_norm(&mut [&mut g.policy_grad, &mut g.value_grad], config.max_grad_norm);
                }
                self.policy_opt.step(self.policy.params_mut(), &g.policy_grad);
                self.value_opt.step(self.value.params_mut(), &g.value_grad);
                acc[0] += g.policy_loss;
                acc[1] += g.value_loss;
                acc[2] += g.entropy;
                acc[3] += g.clip_fraction;
                acc[4] += g.approx_kl;
                count += 1.0;
            }
        }
        let stats = UpdateStats {
            policy_loss: acc[0] / count,
            value_loss: acc[1] / count,
            entropy: acc[2] / count,
            clip_fraction: acc[3] / count,
            approx_kl: acc[4] / count,
        };
        if stats.approx_kl < -1e-3 {
            log::warn!("update {update}: approximate KL is negative ({})", stats.approx_kl);
        }
        Ok(stats)
    }
}

/// Scales all parts jointly so their combined L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(parts: &mut [&mut Vec<f64>], max_norm: f64) -> f64 {
    let norm = parts
        .iter()
        .flat_map(|p| p.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / (norm + 1e-6);
        for p in parts.iter_mut() {
            p.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// How training episodes are drawn from a base scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Curriculum {
    /// Probability that an episode gets one random obstacle on the path.
    pub obstacle_fraction: f64,
    pub obstacle_radius: [f64; 2],
    /// Obstacles keep at least this distance from the path's ends.
    pub min_start_distance: f64,
    /// Probability that an episode starts at a random waypoint instead of
    /// the first one (the path is cut to the remaining suffix).
    pub random_start_fraction: f64,
    /// Ends a training episode once the raw cross-track error exceeds this.
    pub off_path_limit: Option<f64>,
    /// Ends a training episode when the reference segment has not advanced
    /// for this many steps.
    pub stall_steps: Option<usize>,
}

impl Default for Curriculum {
    /// Obstacle-free episodes mixed 1:1 with one-obstacle episodes, half of
    /// them starting part-way along the path; episodes that wander more
    /// than 3 m off the path or stop making progress for 5 s are cut short.
    fn default() -> Self {
        Self {
            obstacle_fraction: 0.5,
            obstacle_radius: [0.5, 1.0],
            min_start_distance: 8.0,
            random_start_fraction: 0.5,
            off_path_limit: Some(3.0),
            stall_steps: Some(50),
        }
    }
}

impl Curriculum {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.obstacle_radius;
        if !(0.0..=1.0).contains(&self.obstacle_fraction) || !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidArgument(format!(
                "bad obstacle curriculum: fraction {}, radius {lo}..{hi}",
                self.obstacle_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.random_start_fraction) {
            return Err(Error::InvalidArgument(format!(
                "random_start_fraction must lie in [0, 1], got {}",
                self.random_start_fraction
            )));
        }
        if self.stall_steps == Some(0) {
            return Err(Error::InvalidArgument("stall_steps must be positive".into()));
        }
        if let Some(l) = self.off_path_limit {
            if !(l > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "off_path_limit must be positive, got {l}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingScenarios {
    pub base: Scenario,
    pub curriculum: Curriculum,
}

impl TrainingScenarios {
    pub fn new(base: Scenario, curriculum: Curriculum) -> Self {
        Self { base, curriculum }
    }

    pub fn mixed(base: Scenario) -> Self {
        Self::new(base, Curriculum::default())
    }

    pub fn obstacle_free(base: Scenario) -> Self {
        Self::new(
            base,
            Curriculum {
                obstacle_fraction: 0.0,
                ..Curriculum::default()
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.curriculum.validate()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<Scenario> {
        let c = &self.curriculum;
        let mut sc = self.base.clone();
        if c.random_start_fraction > 0.0 && rng.random_bool(c.random_start_fraction) {
            let w = sc.path.waypoints();
            // keep enough path for the obstacle spacing to stay satisfiable
            let keep = (w.len() / 4).max(2);
            let start = rng.random_range(0..=w.len() - keep);
            sc.path = Path::new(w[start..].to_vec())?;
        }
        if c.obstacle_fraction > 0.0 && rng.random_bool(c.obstacle_fraction) {
            let [lo, hi] = c.obstacle_radius;
            let radius = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            sc = sc.with_obstacle_on_path(rng.random(), radius, c.min_start_distance)?;
        }
        Ok(sc)
    }
}

struct Worker {
    env: Env,
    rng: ChaCha8Rng,
    obs: Observation,
    episode_return: f64,
    episode_len: usize,
    segment: usize,
    since_progress: usize,
}

struct WorkerStep {
    transition: Transition,
    finished: Option<(f64, usize)>,
}

impl Worker {
    fn new(scenarios: &TrainingScenarios, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut env = Env::new(scenarios.sample(&mut rng)?)?;
        let obs = env.reset(rng.random())?;
        Ok(Self {
            env,
            rng,
            obs,
            episode_return: 0.0,
            episode_len: 0,
            segment: 0,
            since_progress: 0,
        })
    }

    fn step(
        &mut self,
        policy: &DenseNet,
        value: &DenseNet,
        scenarios: &TrainingScenarios,
    ) -> Result<WorkerStep> {
        let observation = self.obs.to_array();
        let logits = policy.forward_raw(&observation)?;
        let action = sample_action(&softmax(&logits), &mut self.rng)?;
        let log_prob = log_softmax(&logits)[action];
        let v = value.forward_raw(&observation)?[0];
        let r = self.env.step(action)?;
        self.episode_return += r.reward;
        self.episode_len += 1;
        if r.info.segment > self.segment {
            self.segment = r.info.segment;
            self.since_progress = 0;
        } else {
            self.since_progress += 1;
        }
        let c = &scenarios.curriculum;
        let off_path = c
            .off_path_limit
            .is_some_and(|l| r.info.cross_track_error.abs() > l);
        let stalled = c.stall_steps.is_some_and(|n| self.since_progress >= n);
        let done = r.done() || off_path || stalled;
        let mut finished = None;
        if done {
            finished = Some((self.episode_return, self.episode_len));
            self.episode_return = 0.0;
            self.episode_len = 0;
            self.segment = 0;
            self.since_progress = 0;
            let next = scenarios.sample(&mut self.rng)?;
            self.env.set_scenario(next)?;
            self.obs = self.env.reset(self.rng.random())?;
        } else {
            self.obs = r.observation;
        }
        Ok(WorkerStep {
            transition: Transition {
                observation,
                action,
                log_prob,
                value: v,
                reward: r.reward,
                done,
            },
            finished,
        })
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub update: usize,
    pub timesteps: usize,
    /// Mean over the last 100 finished episodes (NaN before the first).
    pub mean_episode_return: f64,
    pub mean_episode_length: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

impl LogRow {
    pub const HEADER: &'static str = "update,timesteps,mean_episode_return,mean_episode_length,policy_loss,value_loss,entropy,clip_fraction,approx_kl";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.update,
            self.timesteps,
            self.mean_episode_return,
            self.mean_episode_length,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.clip_fraction,
            self.approx_kl
        )
    }
}

/// Greedy KPI evaluation taken during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub update: usize,
    pub timesteps: usize,
    #[serde(flatten)]
    pub kpis: KpiSet,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Worker threads for rollout collection; 0 or 1 runs on the caller's thread.
    pub threads: usize,
    /// Where to write the log, evaluations, checkpoints and final weights.
    pub out_dir: Option<PathBuf>,
}

impl TrainOptions {
    /// Thread cap from `REACTIVE_TRACKER_THREADS`, if set.
    pub fn threads_from_env() -> Result<usize> {
        match std::env::var("REACTIVE_TRACKER_THREADS") {
            Ok(s) => s.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("REACTIVE_TRACKER_THREADS is not a count: {s:?}"))
            }),
            Err(_) => Ok(0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: DenseNet,
    pub value: DenseNet,
    pub log: Vec<LogRow>,
    pub evals: Vec<EvalRow>,
}

struct Artifacts {
    dir: PathBuf,
    log: std::fs::File,
    evals: std::fs::File,
}

impl Artifacts {
    fn create(dir: &FsPath) -> Result<Self> {
        let io = |e: std::io::Error, p: &FsPath| Error::from(e).in_file(p);
        std::fs::create_dir_all(dir.join("checkpoints")).map_err(|e| io(e, dir))?;
        let log_path = dir.join("training_log.csv");
        let mut log = std::fs::File::create(&log_path).map_err(|e| io(e, &log_path))?;
        writeln!(log, "{}", LogRow::HEADER)?;
        let eval_path = dir.join("eval_log.csv");
        let mut evals = std::fs::File::create(&eval_path).map_err(|e| io(e, &eval_path))?;
        writeln!(evals, "update,timesteps,kappa2,kappa_reach,kappa_dist,kappa_danger")?;
        Ok(Self {
            dir: dir.to_path_buf(),
            log,
            evals,
        })
    }
}

/// Trains policy and value networks from scratch.
pub fn train(
    scenarios: &TrainingScenarios,
    config: &PpoConfig,
    seed: u64,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    scenarios.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = Learner::init(config, &mut rng);
    let mut workers = (0..config.n_envs)
        .map(|_| Worker::new(scenarios, rng.random()))
        .collect::<Result<Vec<_>>>()?;
    let pool = if options.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.threads)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let mut artifacts = options.out_dir.as_deref().map(Artifacts::create).transpose()?;

    let mut buffer = RolloutBuffer::new(config.n_steps, config.n_envs);
    let mut scaler = config
        .scale_rewards
        .then(|| RewardScaler::new(config.n_envs, config.gamma));
    let mut recent: VecDeque<(f64, usize)> = VecDeque::with_capacity(100);
    let mut log = Vec::new();
    let mut evals = Vec::new();
    let mut timesteps = 0;
    for update in 1..=config.update_count() {
        buffer.clear();
        for _ in 0..config.n_steps {
            let (policy, value) = (&learner.policy, &learner.value);
            let steps: Vec<WorkerStep> = match &pool {
                Some(pool) => pool.install(|| {
                    use rayon::prelude::*;
                    workers
                        .par_iter_mut()
                        .map(|w| w.step(policy, value, scenarios))
                        .collect::<Result<_>>()
                }),
                None => workers
                    .iter_mut()
                    .map(|w| w.step(policy, value, scenarios))
                    .collect::<Result<_>>(),
            }
            .map_err(|e| Error::InvalidState(format!("rollout of update {update}: {e}")))?;
            for (e, s) in steps.iter().enumerate() {
                match scaler.as_mut() {
                    Some(sc) => {
                        let mut t = s.transition;
                        t.reward = sc.scale(e, t.reward, t.done);
                        buffer.push(&t)?;
                    }
                    None => buffer.push(&s.transition)?,
                }
                if let Some(ep) = s.finished {
                    if recent.len() == 100 {
                        recent.pop_front();
                    }
                    recent.push_back(ep);
                }
            }
        }
        timesteps += buffer.len();
        let last_values = workers
            .iter()
            .map(|w| Ok(learner.value.forward_raw(&w.obs.to_array())?[0]))
            .collect::<Result<Vec<_>>>()?;
        buffer.finish(&last_values, config.gamma, config.gae_lambda)?;
        let stats = learner.update(&buffer, config, update, &mut rng)?;

        let n = recent.len() as f64;
        let row = LogRow {
            update,
            timesteps,
            mean_episode_return: recent.iter().map(|e| e.0).sum::<f64>() / n,
            mean_episode_length: recent.iter().map(|e| e.1 as f64).sum::<f64>() / n,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
        };
        log::info!(
            "update {update}: {timesteps} steps, return {:.2}, length {:.1}, entropy {:.3}",
            row.mean_episode_return,
            row.mean_episode_length,
            row.entropy
        );
        if let Some(a) = artifacts.as_mut() {
            writeln!(a.log, "{}", row.csv_line())?;
        }
        log.push(row);

        let last = update == config.update_count();
        if config.eval_interval > 0 && (update % config.eval_interval == 0 || last) {
            let kpis = greedy_kpis(&learner.policy, &scenarios.base, seed)?;
            log::info!(
                "update {update}: kappa2 {:.3}, kappa_reach {:.2}",
                kpis.kappa2,
                kpis.kappa_reach
            );
            if let Some(a) = artifacts.as_mut() {
                writeln!(
                    a.evals,
                    "{update},{timesteps},{:e},{:e},{:e},{:e}",
                    kpis.kappa2, kpis.kappa_reach, kpis.kappa_dist, kpis.kappa_danger
                )?;
            }
            evals.push(EvalRow {
                update,
                timesteps,
                kpis,
            });
        }
        if let Some(a) = artifacts.as_ref() {
            if config.checkpoint_interval > 0 && update % config.checkpoint_interval == 0 {
                let dir = a.dir.join("checkpoints");
                learner.policy.save_weights(dir.join(format!("policy_{update:06}.json")))?;
                learner.value.save_weights(dir.join(format!("value_{update:06}.json")))?;
            }
        }
    }
    if let Some(a) = artifacts.as_mut() {
        a.log.flush()?;
        a.evals.flush()?;
        learner.policy.save_weights(a.dir.join("policy.json"))?;
        learner.value.save_weights(a.dir.join("value.json"))?;
    }
    Ok(TrainOutcome {
        policy: learner.policy,
        value: learner.value,
        log,
        evals,
    })
}

/// KPIs of one greedy episode on `scenario`.
pub fn greedy_kpis(policy: &DenseNet, scenario: &Scenario, seed: u64) -> Result<KpiSet> {
    let settings = EvalSettings {
        episodes: 1,
        mode: ActionMode::Greedy,
        seed,
        checkpoints: DEFAULT_CHECKPOINTS,
        tolerance: DEFAULT_REACH_TOLERANCE,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (report, _) = evaluate(policy, &settings, |_, _| Ok(scenario.clone()), &mut rng)?;
    Ok(report.mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{figure8_scenario, straight_scenario};
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, prop_assume, proptest};

    /// A_t = Σ_{l≥0} (γλ)^l δ_{t+l}, truncated at the first done.
    fn gae_oracle(r: &[f64], v: &[f64], d: &[bool], boot: f64, g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let next_v = |t: usize| if t + 1 < n { v[t + 1] } else { boot };
        (0..n)
            .map(|t| {
                let mut sum = 0.0;
                let mut w = 1.0;
                for k in t..n {
                    let live = if d[k] { 0.0 } else { 1.0 };
                    sum += w * (r[k] + g * next_v(k) * live - v[k]);
                    if d[k] {
                        break;
                    }
                    w *= g * l;
                }
                sum
            })
            .collect()
    }

    #[test]
    fn gae_examples() {
        let (adv, ret) =
            compute_gae(&[1.0, 1.0, 1.0], &[0.0; 3], &[false; 3], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![3.0, 2.0, 1.0]);
        assert_eq!(ret, adv);
        let (adv, _) = compute_gae(&[5.0], &[2.0], &[true], 100.0, 0.99, 0.95).unwrap();
        assert_eq!(adv, vec![3.0]);
        let (adv, _) = compute_gae(&[0.0; 4], &[0.0; 4], &[false; 4], 0.0, 0.9, 0.9).unwrap();
        assert!(adv.iter().all(|a| *a == 0.0));
        assert!(compute_gae(&[1.0], &[1.0, 2.0], &[false], 0.0, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn gae_matches_oracle(
            data in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, prop::bool::weighted(0.1)), 1..=64),
            boot in -5.0..5.0f64,
            g in 0.5..=1.0f64,
            l in 0.5..=1.0f64,
        ) {
            let r: Vec<f64> = data.iter().map(|x| x.0).collect();
            let v: Vec<f64> = data.iter().map(|x| x.1).collect();
            let d: Vec<bool> = data.iter().map(|x| x.2).collect();
            let (adv, ret) = compute_gae(&r, &v, &d, boot, g, l).unwrap();
            let want = gae_oracle(&r, &v, &d, boot, g, l);
            for t in 0..r.len() {
                prop_assert!((adv[t] - want[t]).abs() <= 1e-10);
                prop_assert_eq!(ret[t], adv[t] + v[t]);
            }
        }

        #[test]
        fn normalization_gives_zero_mean_unit_std(xs in prop::collection::vec(-100.0..100.0f64, 2..200)) {
            prop_assume!(xs.iter().any(|x| (x - xs[0]).abs() > 1e-3));
            let mut ys = xs.clone();
            normalize(&mut ys);
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((std - 1.0).abs() < 1e-6);
        }
    }

    fn random_buffer(t: usize, e: usize, policy: &DenseNet, value: &DenseNet, seed: u64) -> RolloutBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = RolloutBuffer::new(t, e);
        for _ in 0..t * e {
            let mut obs = [0.0; OBS_DIM];
            obs.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
            let probs = policy.forward(&obs).unwrap();
            let action = sample_action(&probs, &mut rng).unwrap();
            buf.push(&Transition {
                observation: obs,
                action,
                log_prob: probs[action].ln(),
                value: value.forward_raw(&obs).unwrap()[0],
                reward: rng.random_range(-1.0..1.0),
                done: rng.random_bool(0.05),
            })
            .unwrap();
        }
        buf.finish(&vec![0.0; e], 0.99, 0.95).unwrap();
        buf
    }

    fn nets(seed: u64) -> (DenseNet, DenseNet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // a larger head gain than the default makes the policy non-uniform
        let p = DenseNet::orthogonal(&[OBS_DIM, 16, 16, 9], crate::net::Head::Softmax, 2f64.sqrt(), 1.0, &mut rng)
            .unwrap();
        let v = DenseNet::value(OBS_DIM, &mut rng);
        (p, v)
    }

    #[test]
    fn buffer_rejects_overflow_and_early_finish() {
        let (p, v) = nets(0);
        let mut buf = RolloutBuffer::new(2, 2);
        let tr = Transition {
            observation: [0.0; OBS_DIM],
            action: 0,
            log_prob: 0.0,
            value: 0.0,
            reward: 0.0,
            done: false,
        };
        buf.push(&tr).unwrap();
        assert!(buf.finish(&[0.0, 0.0], 0.99, 0.95).is_err());
        for _ in 0..3 {
            buf.push(&tr).unwrap();
        }
        assert!(buf.push(&tr).is_err());
        let _ = (p, v);
    }

    #[test]
    fn buffer_gae_is_per_environment() {
        let (p, v) = nets(1);
        let buf = random_buffer(16, 3, &p, &v, 2);
        for e in 0..3 {
            let col = |x: &[f64]| (0..16).map(|t| x[t * 3 + e]).collect::<Vec<_>>();
            let d: Vec<bool> = (0..16).map(|t| buf.dones[t * 3 + e]).collect();
            let want = gae_oracle(&col(&buf.rewards), &col(&buf.values), &d, 0.0, 0.99, 0.95);
            let got = col(&buf.advantages);
            for t in 0..16 {
                assert!((got[t] - want[t]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unclipped_policy_gradient_is_vanilla_policy_gradient() {
        // log π_new = log π_old, so ρ ≡ 1 and the clip is inactive
        let (p, v) = nets(3);
        let buf = random_buffer(8, 2, &p, &v, 4);
        let config = PpoConfig {
            ent_coef: 0.0,
            ..PpoConfig::default()
        };
        let idx: Vec<usize> = (0..buf.len()).collect();
        let g = minibatch_gradients(&buf, &buf.advantages, &idx, &p, &v, &config).unwrap();
        assert_eq!(g.clip_fraction, 0.0);
        assert!(g.approx_kl.abs() < 1e-12);
        // −mean(A ∇log π(a|s)), with ∇log π(a) = ∇π(a) / π(a)
        let mut want = vec![0.0; p.param_count()];
        for &i in &idx {
            let probs = p.forward(&buf.observations[i]).unwrap();
            let mut og = vec![0.0; probs.len()];
            og[buf.actions[i]] = 1.0 / probs[buf.actions[i]];
            let grad = p.backward(&buf.observations[i], &og).unwrap();
            for (w, gi) in want.iter_mut().zip(&grad.0) {
                *w -= buf.advantages[i] * gi / idx.len() as f64;
            }
        }
        for (a, b) in g.policy_grad.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn huge_clip_range_equals_unclipped_surrogate() {
        let (p, v) = nets(5);
        let buf = random_buffer(8, 2, &p, &v, 6);
        // perturb the policy so ratios differ from 1
        let (mut q, _) = nets(7);
        q.params_mut().iter_mut().zip(p.params()).for_each(|(a, b)| *a = b + 0.05 * *a);
        let config = PpoConfig {
            clip_range: 1e12,
            ..PpoConfig::default()
        };
        let idx: Vec<usize> = (0..buf.len()).collect();
        let g = minibatch_gradients(&buf, &buf.advantages, &idx, &q, &v, &config).unwrap();
        let mut surrogate = 0.0;
        for &i in &idx {
            let probs = q.forward(&buf.observations[i]).unwrap();
            let ratio = (probs[buf.actions[i]].ln() - buf.log_probs[i]).exp();
            surrogate -= ratio * buf.advantages[i] / idx.len() as f64;
        }
        assert!((g.policy_loss - surrogate).abs() < 1e-12);
        assert_eq!(g.clip_fraction, 0.0);
    }

    #[test]
    fn update_stats_lie_in_their_ranges() {
        let (p, v) = nets(8);
        let buf = random_buffer(16, 4, &p, &v, 9);
        let config = PpoConfig {
            learning_rate: 1e-2,
            ..PpoConfig::default()
        };
        let mut learner = Learner::new(p, v, &config);
        let stats = learner
            .update(&buf, &config, 1, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!((0.0..=1.0).contains(&stats.clip_fraction));
        assert!(stats.entropy >= 0.0 && stats.entropy <= (9f64).ln() + 1e-12);
        assert!(stats.approx_kl >= -1e-3);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let (p, v) = nets(10);
        let buf = random_buffer(8, 2, &p, &v, 11);
        let config = PpoConfig {
            learning_rate: 0.0,
            ..PpoConfig::default()
        };
        let mut learner = Learner::new(p.clone(), v.clone(), &config);
        learner
            .update(&buf, &config, 1, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(learner.policy, p);
        assert_eq!(learner.value, v);
    }

    #[test]
    fn single_positive_transition_becomes_more_likely() {
        for seed in 0..10 {
            let (p, v) = nets(20 + seed);
            let obs = [0.3, -0.2, 0.9, 0.1, -0.4, 0.5, 2.0];
            let probs = p.forward(&obs).unwrap();
            let action = (seed as usize * 7) % probs.len();
            let mut buf = RolloutBuffer::new(1, 1);
            buf.push(&Transition {
                observation: obs,
                action,
                log_prob: probs[action].ln(),
                value: 0.0,
                reward: 1.0,
                done: true,
            })
            .unwrap();
            buf.finish(&[0.0], 0.99, 0.95).unwrap();
            assert!(buf.advantages[0] > 0.0);
            let config = PpoConfig {
                n_steps: 1,
                n_envs: 1,
                minibatches: 1,
                epochs: 1,
                learning_rate: 1e-4,
                ent_coef: 0.0,
                normalize_advantages: false,
                ..PpoConfig::default()
            };
            let mut learner = Learner::new(p, v, &config);
            learner
                .update(&buf, &config, 1, &mut ChaCha8Rng::seed_from_u64(0))
                .unwrap();
            let after = learner.policy.forward(&obs).unwrap()[action];
            assert!(after > probs[action], "{after} <= {}", probs[action]);
        }
    }

    #[test]
    fn global_norm_clipping_scales_jointly() {
        let mut a = vec![3.0, 0.0];
        let mut b = vec![4.0];
        let n = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert_eq!(n, 5.0);
        let after = (a[0] * a[0] + b[0] * b[0]).sqrt();
        assert!((after - 1.0).abs() < 1e-6);
        assert!((a[0] / b[0] - 0.75).abs() < 1e-12);
        let mut c = vec![0.1];
        clip_global_norm(&mut [&mut c], 1.0);
        assert_eq!(c, vec![0.1]);
    }

    #[test]
    fn reward_scaler_tracks_return_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sc = RewardScaler::new(2, 0.9);
        let (mut g, mut seen) = ([0.0f64; 2], Vec::new());
        for k in 0..4000 {
            let e = k % 2;
            let r: f64 = rng.random_range(-1.0..3.0);
            let done = rng.random_bool(0.02);
            let out = sc.scale(e, r, done);
            g[e] = g[e] * 0.9 + r;
            seen.push(g[e]);
            if done {
                g[e] = 0.0;
            }
            assert!(out.abs() <= 10.0);
        }
        let n = seen.len() as f64;
        let mean = seen.iter().sum::<f64>() / n;
        let var = seen.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!((sc.std() - var.sqrt()).abs() < 1e-3 * var.sqrt(), "{} vs {}", sc.std(), var.sqrt());
        let r = 1.5;
        assert!((sc.scale(0, r, false) * sc.std() - r).abs() < 0.01);
    }

    #[test]
    fn annealed_learning_rate_decays_linearly() {
        let c = PpoConfig {
            learning_rate: 1e-3,
            total_timesteps: 4 * 1024,
            anneal_lr: true,
            ..PpoConfig::default()
        };
        let lrs: Vec<f64> = (1..=4).map(|u| c.learning_rate_at(u)).collect();
        for (got, want) in lrs.iter().zip([1e-3, 7.5e-4, 5e-4, 2.5e-4]) {
            assert!((got - want).abs() < 1e-18, "{lrs:?}");
        }
        let flat = PpoConfig {
            anneal_lr: false,
            ..c
        };
        assert_eq!(flat.learning_rate_at(4), 1e-3);
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        let c = PpoConfig {
            minibatches: 3,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
        let c = PpoConfig {
            clip_range: 1.0,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
        let c = PpoConfig {
            total_timesteps: 1000,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
        let json = r#"{"n_steps": 64, "learning_rat": 1}"#;
        assert!(serde_json::from_str::<PpoConfig>(json).is_err());
    }

    fn small_config(total: usize) -> PpoConfig {
        PpoConfig {
            n_steps: 32,
            n_envs: 4,
            total_timesteps: total,
            eval_interval: 0,
            ..PpoConfig::default()
        }
    }

    #[test]
    fn one_rollout_budget_gives_one_update() {
        let sc = TrainingScenarios::obstacle_free(straight_scenario(30.0).unwrap());
        let config = small_config(128);
        let out = train(&sc, &config, 0, &TrainOptions::default()).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].timesteps, 128);
    }

    #[test]
    fn training_is_deterministic_and_thread_count_independent() {
        let sc = TrainingScenarios::mixed(figure8_scenario().unwrap());
        let config = small_config(128 * 3);
        let a = train(&sc, &config, 5, &TrainOptions::default()).unwrap();
        let b = train(&sc, &config, 5, &TrainOptions::default()).unwrap();
        let c = train(
            &sc,
            &config,
            5,
            &TrainOptions {
                threads: 3,
                out_dir: None,
            },
        )
        .unwrap();
        let bits = |o: &TrainOutcome| o.log.iter().map(|r| r.csv_line()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(bits(&a), bits(&c));
        assert_eq!(a.policy, c.policy);
        let d = train(&sc, &config, 6, &TrainOptions::default()).unwrap();
        assert_ne!(a.policy, d.policy);
    }

    #[test]
    fn training_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let sc = TrainingScenarios::obstacle_free(figure8_scenario().unwrap());
        let config = PpoConfig {
            eval_interval: 1,
            checkpoint_interval: 1,
            ..small_config(256)
        };
        let opts = TrainOptions {
            threads: 0,
            out_dir: Some(dir.path().to_path_buf()),
        };
        let out = train(&sc, &config, 1, &opts).unwrap();
        let log = std::fs::read_to_string(dir.path().join("training_log.csv")).unwrap();
        assert_eq!(log.lines().count(), 3);
        assert_eq!(log.lines().nth(1).unwrap(), out.log[0].csv_line());
        assert_eq!(out.evals.len(), 2);
        assert!(dir.path().join("checkpoints/policy_000002.json").exists());
        let back = DenseNet::load_weights(dir.path().join("policy.json")).unwrap();
        assert_eq!(back, out.policy);
    }
}

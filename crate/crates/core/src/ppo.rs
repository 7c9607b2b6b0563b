//! Proximal policy optimisation with a temperature-annealed behaviour policy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Env, Outcome, StateEncoding};
use crate::error::{Error, Result};
use crate::metrics::{argmax, log_softmax, sample_index, softmax, temperature_softmax};
use crate::nn::PolicyNet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Actions collected between updates.
    pub horizon: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub clip_eps: f64,
    /// Value-loss coefficient.
    pub c1: f64,
    /// Entropy-bonus coefficient.
    pub c2: f64,
    pub reward_scale: f64,
    pub max_grad_norm: f64,
    pub total_steps: u64,
    /// Trailing share of training that acts greedily.
    pub greedy_tail_fraction: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.99,
            gae_lambda: 0.95,
            horizon: 2048,
            minibatch: 64,
            epochs: 10,
            learning_rate: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_eps: 0.2,
            c1: 1.0,
            c2: 0.01,
            reward_scale: 1e-2,
            max_grad_norm: 0.5,
            total_steps: 200_000,
            greedy_tail_fraction: 0.25,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("gae_lambda", self.gae_lambda),
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
            ("adam_eps", self.adam_eps),
            ("c1", self.c1),
            ("reward_scale", self.reward_scale),
            ("max_grad_norm", self.max_grad_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::Config("learning_rate and c2 must be non-negative".into()));
        }
        if self.gamma > 1.0 || self.gae_lambda > 1.0 || self.adam_beta1 >= 1.0 || self.adam_beta2 >= 1.0 {
            return Err(Error::Config("gamma and lambda must lie in (0, 1], Adam betas in (0, 1)".into()));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::Config(format!("clip_eps must lie in (0, 1), got {}", self.clip_eps)));
        }
        if self.horizon == 0 || self.minibatch == 0 || self.epochs == 0 || self.total_steps == 0 {
            return Err(Error::Config("horizon, minibatch, epochs and total_steps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.greedy_tail_fraction) {
            return Err(Error::Config("greedy_tail_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Behaviour temperature after `step` actions: linear from 1 to 0 over
    /// the annealing phase, then 0 (greedy).
    pub fn tau_at(&self, step: u64) -> f64 {
        let anneal = (1.0 - self.greedy_tail_fraction) * self.total_steps as f64;
        if anneal <= 0.0 {
            return 0.0;
        }
        (1.0 - step as f64 / anneal).max(0.0)
    }
}

/// `R_t = r_t + γ R_{t+1}`, restarting after every `done`.
pub fn discounted_return(rewards: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), dones.len());
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            acc = 0.0;
        }
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Generalised advantage estimates. `values` has one entry per step and
/// `last_value` bootstraps the state after the final step.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    assert!(rewards.len() == values.len() && rewards.len() == dones.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        acc = delta + gamma * lambda * live * acc;
        adv[t] = acc;
    }
    adv
}

/// Shifts and scales to zero mean and unit standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

/// Per-sample clipped surrogate `min(r A, clip(r, 1-ε, 1+ε) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Whether the clipped term is the active branch (zero policy gradient).
pub fn clip_active(ratio: f64, advantage: f64, eps: f64) -> bool {
    (advantage >= 0.0 && ratio > 1.0 + eps) || (advantage < 0.0 && ratio < 1.0 - eps)
}

/// One stored transition.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: StateEncoding,
    pub action: usize,
    /// `log P^τ(a|s)` under the tempered behaviour distribution.
    pub behavior_logp: f64,
    /// `log π(a|s; θ_old)` of the untempered policy.
    pub old_logp: f64,
    /// Reward after scaling.
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// Minibatch sample ready for the loss.
#[derive(Clone, Debug)]
pub struct Sample<'a> {
    pub state: &'a StateEncoding,
    pub action: usize,
    pub old_logp: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub loss: f64,
    pub lclip: f64,
    pub lvf: f64,
    pub entropy: f64,
    /// Mean importance ratio over the batch.
    pub mean_ratio: f64,
    /// Largest `|ratio - 1|` over the batch.
    pub max_ratio_dev: f64,
    pub clip_fraction: f64,
}

/// Mean PPO loss `-L^CLIP + c1 L^VF - c2 H` over `batch`. When `grad` is
/// given, the gradient of that loss is added to it.
pub fn clipped_loss(
    net: &PolicyNet,
    batch: &[Sample<'_>],
    hyper: &Hyperparams,
    mut grad: Option<&mut [f64]>,
) -> Result<LossTerms> {
    let n = batch.len() as f64;
    let mut terms = LossTerms::default();
    for s in batch {
        let acts = net.forward(s.state)?;
        let logp = log_softmax(&acts.logits);
        let p = softmax(&acts.logits);
        let ratio = (logp[s.action] - s.old_logp).exp();
        let surrogate = clipped_surrogate(ratio, s.advantage, hyper.clip_eps);
        let clipped = clip_active(ratio, s.advantage, hyper.clip_eps);
        let entropy: f64 = -p.iter().zip(&logp).map(|(pi, li)| if *pi > 0.0 { pi * li } else { 0.0 }).sum::<f64>();
        let verr = acts.value - s.ret;

        terms.lclip += surrogate / n;
        terms.lvf += verr * verr / n;
        terms.entropy += entropy / n;
        terms.mean_ratio += ratio / n;
        terms.max_ratio_dev = terms.max_ratio_dev.max((ratio - 1.0).abs());
        if clipped {
            terms.clip_fraction += 1.0 / n;
        }

        if let Some(g) = grad.as_deref_mut() {
            // d(-surrogate)/dlogp, then through log-softmax.
            let dlogp = if clipped { 0.0 } else { -s.advantage * ratio };
            let dlogits: Vec<f64> = (0..p.len())
                .map(|j| {
                    let onehot = if j == s.action { 1.0 } else { 0.0 };
                    let policy = dlogp * (onehot - p[j]);
                    let ent = hyper.c2 * p[j] * (logp[j] + entropy);
                    (policy + ent) / n
                })
                .collect();
            let dvalue = 2.0 * hyper.c1 * verr / n;
            net.backward(&acts, &dlogits, dvalue, g);
        }
    }
    terms.loss = -terms.lclip + hyper.c1 * terms.lvf - hyper.c2 * terms.entropy;
    if !terms.loss.is_finite() {
        return Err(Error::NonFinite(format!("loss terms {terms:?}")));
    }
    Ok(terms)
}

/// Rescales `grad` so its Euclidean norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], hyper: &Hyperparams) {
        self.t += 1;
        let (b1, b2) = (hyper.adam_beta1, hyper.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= hyper.learning_rate * mhat / (vhat.sqrt() + hyper.adam_eps);
        }
    }
}

/// Transitions collected since the last update.
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    /// Value of the state following the final transition (0 if it ended an episode).
    pub last_value: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Normalised advantages and return targets.
    pub fn advantages_and_returns(&self, hyper: &Hyperparams) -> Result<(Vec<f64>, Vec<f64>)> {
        let rewards: Vec<f64> = self.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = self.transitions.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = self.transitions.iter().map(|t| t.done).collect();
        let mut adv = gae_advantages(&rewards, &values, &dones, self.last_value, hyper.gamma, hyper.gae_lambda);
        let returns: Vec<f64> = adv.iter().zip(&values).map(|(a, v)| a + v).collect();
        normalize_advantages(&mut adv);
        if adv.iter().chain(&returns).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("advantage estimates".into()));
        }
        Ok((adv, returns))
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    /// Mean unscaled return of the episodes finished during the rollout.
    pub mean_reward: Option<f64>,
    pub success_rate: Option<f64>,
    pub episodes: usize,
    pub loss: f64,
    pub lclip: f64,
    pub lvf: f64,
    pub entropy: f64,
    pub tau: f64,
}

/// Chooses an action from logits at temperature `tau` (0 = greedy); returns
/// the action and its log-probability under the tempered distribution.
pub fn behavior_action<R: Rng + ?Sized>(logits: &[f64], tau: f64, rng: &mut R) -> (usize, f64) {
    if tau <= 0.0 {
        (argmax(logits), 0.0)
    } else {
        let probs = temperature_softmax(logits, tau);
        let a = sample_index(&probs, rng);
        (a, probs[a].ln())
    }
}

/// PPO learner state.
pub struct Trainer<'a> {
    pub env: &'a mut Env,
    pub net: &'a mut PolicyNet,
    pub hyper: Hyperparams,
    adam: Adam,
    rng: ChaCha8Rng,
    steps: u64,
    state: StateEncoding,
    episode_return: f64,
}

impl<'a> Trainer<'a> {
    pub fn new(env: &'a mut Env, net: &'a mut PolicyNet, hyper: Hyperparams, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if net.config().grid != env.dims().grid
            || net.config().n_categories != env.dims().n_categories
            || net.config().t_max != env.dims().t_max
        {
            return Err(Error::Dimension("network does not match the environment".into()));
        }
        env.reseed(seed);
        let state = env.reset()?;
        let adam = Adam::new(net.n_params());
        Ok(Trainer {
            env,
            net,
            hyper,
            adam,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
            steps: 0,
            state,
            episode_return: 0.0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn finished(&self) -> bool {
        self.steps >= self.hyper.total_steps
    }

    /// Collects up to one horizon of transitions.
    pub fn collect(&mut self) -> Result<(RolloutBuffer, Vec<(f64, bool)>)> {
        let remaining = (self.hyper.total_steps - self.steps) as usize;
        let len = self.hyper.horizon.min(remaining);
        let mut buffer = RolloutBuffer {
            transitions: Vec::with_capacity(len),
            last_value: 0.0,
        };
        let mut episodes = Vec::new();
        for _ in 0..len {
            let tau = self.hyper.tau_at(self.steps);
            let (logits, value) = self.net.evaluate(&self.state)?;
            if logits.iter().any(|l| !l.is_finite()) || !value.is_finite() {
                return Err(Error::NonFinite(format!("network output at step {}", self.steps)));
            }
            let (action, behavior_logp) = behavior_action(&logits, tau, &mut self.rng);
            let old_logp = log_softmax(&logits)[action];
            let result = self.env.step(action)?;
            self.episode_return += result.reward;
            self.steps += 1;
            let state = if result.done {
                episodes.push((self.episode_return, matches!(result.outcome, Outcome::Success { .. })));
                self.episode_return = 0.0;
                self.env.reset()?
            } else {
                result.next_state
            };
            buffer.transitions.push(Transition {
                state: std::mem::replace(&mut self.state, state),
                action,
                behavior_logp,
                old_logp,
                reward: result.reward * self.hyper.reward_scale,
                value,
                done: result.done,
            });
        }
        if buffer.transitions.last().is_some_and(|t| !t.done) {
            buffer.last_value = self.net.evaluate(&self.state)?.1;
        }
        Ok((buffer, episodes))
    }

    /// Runs the clipped-surrogate epochs on one rollout; returns the mean
    /// loss terms over all minibatches.
    pub fn update(&mut self, buffer: &RolloutBuffer) -> Result<LossTerms> {
        let (adv, returns) = buffer.advantages_and_returns(&self.hyper)?;
        let samples: Vec<Sample> = buffer
            .transitions
            .iter()
            .zip(adv.iter().zip(&returns))
            .map(|(t, (a, r))| Sample {
                state: &t.state,
                action: t.action,
                old_logp: t.old_logp,
                advantage: *a,
                ret: *r,
            })
            .collect();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut grad = vec![0.0; self.net.n_params()];
        let mut mean = LossTerms::default();
        let mut batches = 0usize;
        for _ in 0..self.hyper.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.hyper.minibatch) {
                let batch: Vec<Sample> = chunk.iter().map(|i| samples[*i].clone()).collect();
                grad.iter_mut().for_each(|g| *g = 0.0);
                let terms = clipped_loss(self.net, &batch, &self.hyper, Some(&mut grad))?;
                if grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient at step {} ({terms:?})", self.steps)));
                }
                clip_grad_norm(&mut grad, self.hyper.max_grad_norm);
                self.adam.step(&mut self.net.params, &grad, &self.hyper);
                if self.net.params.iter().any(|p| !p.is_finite()) {
                    return Err(Error::NonFinite(format!("parameters at step {} ({terms:?})", self.steps)));
                }
                mean.loss += terms.loss;
                mean.lclip += terms.lclip;
                mean.lvf += terms.lvf;
                mean.entropy += terms.entropy;
                mean.mean_ratio += terms.mean_ratio;
                mean.clip_fraction += terms.clip_fraction;
                mean.max_ratio_dev = mean.max_ratio_dev.max(terms.max_ratio_dev);
                batches += 1;
            }
        }
        let k = batches.max(1) as f64;
        mean.loss /= k;
        mean.lclip /= k;
        mean.lvf /= k;
        mean.entropy /= k;
        mean.mean_ratio /= k;
        mean.clip_fraction /= k;
        Ok(mean)
    }

    /// One collect + update cycle.
    pub fn iterate(&mut self) -> Result<LogRecord> {
        let tau = self.hyper.tau_at(self.steps);
        let (buffer, episodes) = self.collect()?;
        let terms = self.update(&buffer)?;
        let n = episodes.len();
        let mean_reward = (n > 0).then(|| episodes.iter().map(|e| e.0).sum::<f64>() / n as f64);
        let success_rate = (n > 0).then(|| episodes.iter().filter(|e| e.1).count() as f64 / n as f64);
        Ok(LogRecord {
            step: self.steps,
            mean_reward,
            success_rate,
            episodes: n,
            loss: terms.loss,
            lclip: terms.lclip,
            lvf: terms.lvf,
            entropy: terms.entropy,
            tau,
        })
    }
}

/// Trains `net` in `env` for `hyper.total_steps` actions. `on_update` sees
/// each log record together with the current network.
pub fn train<F>(env: &mut Env, net: &mut PolicyNet, hyper: &Hyperparams, seed: u64, mut on_update: F) -> Result<Vec<LogRecord>>
where
    F: FnMut(&LogRecord, &PolicyNet) -> Result<()>,
{
    let mut trainer = Trainer::new(env, net, hyper.clone(), seed)?;
    let mut log = Vec::new();
    while !trainer.finished() {
        let record = trainer.iterate()?;
        on_update(&record, trainer.net)?;
        log.push(record);
    }
    Ok(log)
}

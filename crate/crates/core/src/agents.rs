//! Category-choosing agents: the trained policy and the two greedy-search
//! baselines. All of them act through the same environment rules.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::Rules;
use crate::error::{Error, Result};
use crate::metrics::{sample_index, TemperaturePolicy};
use crate::nn::PolicyNet;
use crate::scene::{CategoryId, Scene, Status};

/// Floor added to every reward weight in reward-proportional sampling.
pub const REWARD_WEIGHT_FLOOR: f64 = 0.01;

pub trait Agent {
    fn name(&self) -> String;

    fn choose(&mut self, rules: &Rules, scene: &Scene, rng: &mut ChaCha8Rng) -> Result<CategoryId>;
}

/// A trained network sampled with a temperature policy.
#[derive(Clone, Debug)]
pub struct PolicyAgent {
    pub net: PolicyNet,
    pub policy: TemperaturePolicy,
}

impl PolicyAgent {
    pub fn new(net: PolicyNet, policy: TemperaturePolicy) -> Self {
        PolicyAgent { net, policy }
    }
}

impl Agent for PolicyAgent {
    fn name(&self) -> String {
        format!("rlss(tau={})", self.policy.tau)
    }

    fn choose(&mut self, rules: &Rules, scene: &Scene, rng: &mut ChaCha8Rng) -> Result<CategoryId> {
        let (logits, _) = self.net.evaluate(&rules.encode(scene))?;
        Ok(self.policy.choose(&logits, scene.step, rng))
    }
}

/// Uniform choice among the categories that have not hit their count limit.
#[derive(Clone, Copy, Debug, Default)]
pub struct GSearchUniform;

impl Agent for GSearchUniform {
    fn name(&self) -> String {
        "gsearch".into()
    }

    fn choose(&mut self, rules: &Rules, scene: &Scene, rng: &mut ChaCha8Rng) -> Result<CategoryId> {
        let available: Vec<CategoryId> = rules
            .availability(scene)
            .into_iter()
            .enumerate()
            .filter_map(|(i, a)| a.then_some(i))
            .collect();
        Ok(if available.is_empty() {
            rng.gen_range(0..rules.n_actions())
        } else {
            available[rng.gen_range(0..available.len())]
        })
    }
}

/// Sampling proportional to `max(best reward, 0) + floor` per available category.
#[derive(Clone, Copy, Debug, Default)]
pub struct GSearchRewards;

impl GSearchRewards {
    /// Sampling weights for every category (zero for unavailable ones).
    pub fn weights(rules: &Rules, scene: &Scene) -> Vec<f64> {
        rules
            .availability(scene)
            .into_iter()
            .enumerate()
            .map(|(a, ok)| {
                if ok {
                    rules.hypothetical_reward(scene, a).max(0.0) + REWARD_WEIGHT_FLOOR
                } else {
                    0.0
                }
            })
            .collect()
    }
}

impl Agent for GSearchRewards {
    fn name(&self) -> String {
        "gsearch-r".into()
    }

    fn choose(&mut self, rules: &Rules, scene: &Scene, rng: &mut ChaCha8Rng) -> Result<CategoryId> {
        let w = Self::weights(rules, scene);
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Ok(rng.gen_range(0..rules.n_actions()));
        }
        let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
        Ok(sample_index(&probs, rng))
    }
}

/// Resolves a baseline by its command-line name.
pub fn baseline(name: &str) -> Result<Box<dyn Agent>> {
    match name {
        "gsearch" => Ok(Box::new(GSearchUniform)),
        "gsearch-r" => Ok(Box::new(GSearchRewards)),
        other => Err(Error::InvalidArgument(format!(
            "unknown baseline {other:?} (expected gsearch or gsearch-r)"
        ))),
    }
}

/// Plays one episode to completion from `scene`, returning the chosen actions.
pub fn run_episode(
    agent: &mut dyn Agent,
    rules: &Rules,
    scene: &mut Scene,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CategoryId>> {
    let mut actions = Vec::new();
    while scene.status == Status::InProgress {
        let a = agent.choose(rules, scene, rng)?;
        rules.assign_reward_and_place(scene, a, rng)?;
        actions.push(a);
    }
    Ok(actions)
}

//! Scene-set evaluation and temperature selection.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{run_episode, Agent, PolicyAgent};
use crate::boundary::BoundarySpec;
use crate::env::Rules;
use crate::error::{Error, Result};
use crate::metrics::{kl_vs_uniform, pick_tau, variety, SweepRow, TemperaturePolicy};
use crate::nn::PolicyNet;
use crate::scene::{CategoryId, Scene, Status};

/// Summary statistics of a generated scene set. Wall-clock timing is kept in
/// [`Evaluation::mean_time_s`] so that reports are reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub agent: String,
    pub n: usize,
    pub seed: u64,
    /// Fraction of scenes that reached `Success`.
    pub success_rate: f64,
    /// `1 - JSD(P, U)` of the category distribution over successful scenes.
    pub variety: f64,
    /// `KL(P ‖ U)` over successful scenes; absent when none succeeded.
    pub kl: Option<f64>,
    /// Mean over scenes of the largest group complexity present.
    pub mean_max_complexity: f64,
    pub mean_steps: f64,
}

/// One generated scene with the actions that produced it.
#[derive(Clone, Debug)]
pub struct Episode {
    pub scene: Scene,
    pub actions: Vec<CategoryId>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: EvalReport,
    pub episodes: Vec<Episode>,
    pub mean_time_s: f64,
}

/// Random stream for scene `index` of a run seeded with `seed`.
pub fn scene_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Generates one scene on a boundary drawn from the scene's own stream.
pub fn generate_scene(
    agent: &mut dyn Agent,
    rules: &Rules,
    boundary: &BoundarySpec,
    seed: u64,
    index: usize,
) -> Result<Episode> {
    let mut rng = scene_rng(seed, index);
    let start = Instant::now();
    let mut scene = Scene::new(boundary.sample(&mut rng)?);
    let actions = run_episode(agent, rules, &mut scene, &mut rng)?;
    Ok(Episode {
        scene,
        actions,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Category counts summed over the successful scenes.
pub fn success_category_counts(episodes: &[Episode], n_categories: usize) -> Vec<usize> {
    let mut counts = vec![0; n_categories];
    for e in episodes.iter().filter(|e| e.scene.status == Status::Success) {
        for inst in &e.scene.instances {
            counts[inst.category] += 1;
        }
    }
    counts
}

pub fn evaluate(agent: &mut dyn Agent, rules: &Rules, boundary: &BoundarySpec, n: usize, seed: u64) -> Result<Evaluation> {
    if n == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one scene".into()));
    }
    let episodes = (0..n)
        .map(|i| generate_scene(agent, rules, boundary, seed, i))
        .collect::<Result<Vec<_>>>()?;
    let nf = n as f64;
    let successes = episodes.iter().filter(|e| e.scene.status == Status::Success).count();
    let counts = success_category_counts(&episodes, rules.n_actions());
    let report = EvalReport {
        agent: agent.name(),
        n,
        seed,
        success_rate: successes as f64 / nf,
        variety: variety(&counts),
        kl: (counts.iter().sum::<usize>() > 0).then(|| kl_vs_uniform(&counts)),
        mean_max_complexity: episodes.iter().map(|e| e.scene.max_group_complexity() as f64).sum::<f64>() / nf,
        mean_steps: episodes.iter().map(|e| e.scene.step as f64).sum::<f64>() / nf,
    };
    let mean_time_s = episodes.iter().map(|e| e.seconds).sum::<f64>() / nf;
    Ok(Evaluation {
        report,
        episodes,
        mean_time_s,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub best: usize,
    pub tau_optimal: f64,
}

impl Sweep {
    /// Tab-separated table `tau V W min`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("tau\tV\tW\tmin\n");
        for r in &self.rows {
            out.push_str(&format!("{:.4}\t{:.6}\t{:.6}\t{:.6}\n", r.tau, r.variety, r.success_rate, r.score()));
        }
        out
    }
}

/// Evaluates the network at every temperature of `grid` (common seeds
/// across temperatures) and picks the one maximising `min(V, W)`.
pub fn select_tau(
    net: &PolicyNet,
    rules: &Rules,
    boundary: &BoundarySpec,
    grid: &[f64],
    n_per_tau: usize,
    uniform_prefix_k: u32,
    seed: u64,
) -> Result<Sweep> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("temperature grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::InvalidArgument(format!("temperature {bad} is outside (0, 1]")));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &tau in grid {
        let mut agent = PolicyAgent::new(net.clone(), TemperaturePolicy::new(tau, uniform_prefix_k));
        let eval = evaluate(&mut agent, rules, boundary, n_per_tau, seed)?;
        rows.push(SweepRow {
            tau,
            variety: eval.report.variety,
            success_rate: eval.report.success_rate,
        });
    }
    let best = pick_tau(&rows).expect("grid is non-empty");
    Ok(Sweep {
        tau_optimal: rows[best].tau,
        rows,
        best,
    })
}

//! Shared fixtures and brute-force oracles for the integration tests.
//!
//! The oracles deliberately avoid the library's own helpers where the point
//! of a test is to compare against an independent computation.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};
use rlss::boundary::BoundarySpec;
use rlss::catalog::Catalog;
use rlss::env::{EnvConfig, Rules, StateEncoding};
use rlss::metrics::log_softmax;
use rlss::nn::{NetConfig, PolicyNet};
use rlss::ppo::{clip_active, clipped_loss, Hyperparams, Sample};
use rlss::scene::{Cell, Rect, SceneBoundary};

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn catalog(name: &str) -> Arc<Catalog> {
    Arc::new(Catalog::load(manifest_dir().join("data").join(format!("{name}.toml"))).unwrap())
}

pub fn config_path(name: &str) -> PathBuf {
    manifest_dir().join("configs").join(format!("{name}.toml"))
}

pub fn env_config(boundary: BoundarySpec, t_max: u32, grid: usize) -> EnvConfig {
    EnvConfig {
        t_max,
        grid,
        success_threshold: None,
        boundary,
    }
}

pub fn rules(catalog: Arc<Catalog>, config: &EnvConfig) -> Rules {
    Rules::new(catalog, config).unwrap()
}

// ---------------------------------------------------------------- estimators

/// `Σ_i γ^i r_{t+i}` summed explicitly up to and including the first done.
pub fn oracle_returns(rewards: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for i in 0..n - t {
                total += gamma.powi(i as i32) * rewards[t + i];
                if dones[t + i] {
                    break;
                }
            }
            total
        })
        .collect()
}

/// `Σ_i (γλ)^i δ_{t+i}` with every TD error computed from scratch.
pub fn oracle_gae(rewards: &[f64], values: &[f64], dones: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let delta = |k: usize| {
        let next = if k + 1 < n { values[k + 1] } else { last };
        let live = if dones[k] { 0.0 } else { 1.0 };
        rewards[k] + gamma * next * live - values[k]
    };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for i in 0..n - t {
                total += (gamma * lambda).powi(i as i32) * delta(t + i);
                if dones[t + i] {
                    break;
                }
            }
            total
        })
        .collect()
}

// ----------------------------------------------------------------- stability

/// Torque balance for a single column of blocks listed bottom to top, each
/// resting on the previous one (the first on the ground). A block is given
/// as `(x, w, h)`. Every sub-stack above a contact must produce strictly
/// positive restoring torque about both contact edges.
pub fn oracle_stack_stable(blocks: &[(i32, i32, i32)]) -> bool {
    for k in 0..blocks.len() {
        let (x, w, _) = blocks[k];
        let (lo, hi) = if k == 0 {
            (x as f64, (x + w) as f64)
        } else {
            let (px, pw, _) = blocks[k - 1];
            let lo = x.max(px);
            let hi = (x + w).min(px + pw);
            if lo >= hi {
                return false;
            }
            (lo as f64, hi as f64)
        };
        // Torques of the sub-stack k.. about the left and right contact edges.
        let mut about_lo = 0.0;
        let mut about_hi = 0.0;
        for &(bx, bw, bh) in &blocks[k..] {
            let mass = (bw * bh) as f64;
            let cx = bx as f64 + bw as f64 / 2.0;
            about_lo += mass * (cx - lo);
            about_hi += mass * (hi - cx);
        }
        if !(about_lo > 0.0 && about_hi > 0.0) {
            return false;
        }
    }
    true
}

/// Rectangles for a column stack standing on the ground row `ground`.
pub fn stack_rects(blocks: &[(i32, i32, i32)], ground: i32) -> Vec<Rect> {
    let mut top = ground;
    blocks
        .iter()
        .map(|&(x, w, h)| {
            top -= h;
            Rect::new(x, top, w, h)
        })
        .collect()
}

// -------------------------------------------------------------------- indoor

/// Free cells (usable and not covered) reachable from `starts` by 4-steps.
pub fn oracle_flood(b: &SceneBoundary, rects: &[Rect], starts: &[Cell]) -> Vec<Cell> {
    let free = |c: Cell| {
        c.x >= 0
            && c.y >= 0
            && (c.x as usize) < b.width
            && (c.y as usize) < b.height
            && b.usable[c.y as usize * b.width + c.x as usize]
            && !rects.iter().any(|r| c.x >= r.x && c.x < r.x + r.w && c.y >= r.y && c.y < r.y + r.h)
    };
    let mut seen: Vec<Cell> = Vec::new();
    let mut queue: VecDeque<Cell> = starts.iter().copied().filter(|c| free(*c)).collect();
    while let Some(c) = queue.pop_front() {
        if seen.contains(&c) {
            continue;
        }
        seen.push(c);
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let n = Cell::new(c.x + dx, c.y + dy);
            if free(n) && !seen.contains(&n) {
                queue.push_back(n);
            }
        }
    }
    seen
}

/// The single usable 4-neighbour of a door cell.
pub fn oracle_door_front(b: &SceneBoundary, door: Cell) -> Option<Cell> {
    let usable = |c: Cell| {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < b.width && (c.y as usize) < b.height && b.usable[c.y as usize * b.width + c.x as usize]
    };
    let fronts: Vec<Cell> = [(1, 0), (-1, 0), (0, 1), (0, -1)]
        .iter()
        .map(|(dx, dy)| Cell::new(door.x + dx, door.y + dy))
        .filter(|c| usable(*c))
        .collect();
    (fronts.len() == 1).then(|| fronts[0])
}

/// Independent verdict of the four indoor checks on a layout.
pub fn oracle_indoor_ok(b: &SceneBoundary, rects: &[Rect]) -> bool {
    let inside = |r: &Rect, c: Cell| c.x >= r.x && c.x < r.x + r.w && c.y >= r.y && c.y < r.y + r.h;
    // Collision: usable and pairwise disjoint.
    for (i, r) in rects.iter().enumerate() {
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                let c = Cell::new(x, y);
                if x < 0 || y < 0 || x as usize >= b.width || y as usize >= b.height {
                    return false;
                }
                if !b.usable[y as usize * b.width + x as usize] {
                    return false;
                }
                if rects[..i].iter().any(|o| inside(o, c)) {
                    return false;
                }
            }
        }
    }
    let fronts: Vec<Option<Cell>> = b.doors.iter().map(|d| oracle_door_front(b, *d)).collect();
    // Door fronts exist and are uncovered.
    for f in &fronts {
        match f {
            Some(c) if !rects.iter().any(|r| inside(r, *c)) => {}
            _ => return false,
        }
    }
    let fronts: Vec<Cell> = fronts.into_iter().flatten().collect();
    if let Some(first) = fronts.first() {
        let region = oracle_flood(b, rects, &[*first]);
        if !fronts.iter().all(|f| region.contains(f)) {
            return false;
        }
        let reach = oracle_flood(b, rects, &fronts);
        for r in rects {
            let mut touches = false;
            for y in r.y - 1..=r.y + r.h {
                for x in r.x - 1..=r.x + r.w {
                    let ring = (y == r.y - 1 || y == r.y + r.h) != (x == r.x - 1 || x == r.x + r.w);
                    if ring && reach.contains(&Cell::new(x, y)) {
                        touches = true;
                    }
                }
            }
            if !touches {
                return false;
            }
        }
    }
    true
}

// ------------------------------------------------------------------ gradients

pub fn small_net_config(rng: &mut ChaCha8Rng) -> NetConfig {
    NetConfig {
        grid: rng.gen_range(5..9),
        n_categories: rng.gen_range(2..5),
        t_max: rng.gen_range(2..6),
        conv_channels: vec![rng.gen_range(2..4), rng.gen_range(2..5)],
        kernel: 3,
        stride: 2,
        aux_hidden: rng.gen_range(3..7),
        step_hidden: rng.gen_range(2..5),
        head_hidden: rng.gen_range(4..9),
    }
}

/// Network with every parameter drawn from N(0, 0.5²).
pub fn random_net(cfg: NetConfig, rng: &mut ChaCha8Rng) -> PolicyNet {
    let mut net = PolicyNet::zeros(cfg);
    for p in net.params.iter_mut() {
        *p = 0.5 * rng.sample::<f64, _>(StandardNormal);
    }
    net
}

pub fn random_state(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> StateEncoding {
    let levels = [0.0, 0.5, 1.0];
    let mut step_onehot = vec![0.0; cfg.t_max];
    step_onehot[rng.gen_range(0..cfg.t_max)] = 1.0;
    StateEncoding {
        grid: (0..cfg.grid * cfg.grid).map(|_| levels[rng.gen_range(0..3)]).collect(),
        existence: (0..cfg.n_categories).map(|_| rng.gen_range(0..2) as f64).collect(),
        availability: (0..cfg.n_categories).map(|_| rng.gen_range(0..2) as f64).collect(),
        condition: rng.gen_range(0.0..1.5),
        step_onehot,
    }
}

/// A batch whose stored log-probabilities are perturbed so that some
/// samples sit in the clipped region.
pub struct GradProblem {
    pub net: PolicyNet,
    pub states: Vec<StateEncoding>,
    pub actions: Vec<usize>,
    pub old_logp: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub hyper: Hyperparams,
}

impl GradProblem {
    pub fn random(seed: u64, batch: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = small_net_config(&mut rng);
        let net = random_net(cfg.clone(), &mut rng);
        let states: Vec<StateEncoding> = (0..batch).map(|_| random_state(&cfg, &mut rng)).collect();
        let actions: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..cfg.n_categories)).collect();
        let old_logp = states
            .iter()
            .zip(&actions)
            .map(|(s, a)| {
                let logits = net.evaluate(s).unwrap().0;
                log_softmax(&logits)[*a] + rng.gen_range(-0.4..0.4)
            })
            .collect();
        GradProblem {
            advantages: (0..batch).map(|_| rng.sample(StandardNormal)).collect(),
            returns: (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            net,
            states,
            actions,
            old_logp,
            hyper: Hyperparams {
                c2: 0.05,
                ..Hyperparams::default()
            },
        }
    }

    pub fn samples(&self) -> Vec<Sample<'_>> {
        (0..self.states.len())
            .map(|i| Sample {
                state: &self.states[i],
                action: self.actions[i],
                old_logp: self.old_logp[i],
                advantage: self.advantages[i],
                ret: self.returns[i],
            })
            .collect()
    }

    pub fn loss_at(&self, params: &[f64]) -> f64 {
        let mut net = self.net.clone();
        net.params.copy_from_slice(params);
        clipped_loss(&net, &self.samples(), &self.hyper, None).unwrap().loss
    }

    pub fn analytic(&self) -> Vec<f64> {
        let mut grad = vec![0.0; self.net.n_params()];
        clipped_loss(&self.net, &self.samples(), &self.hyper, Some(&mut grad)).unwrap();
        grad
    }

    /// Every rectifier sign and clip branch, used to spot kinks between
    /// finite-difference evaluation points.
    pub fn branch_signature(&self, params: &[f64]) -> Vec<bool> {
        let mut net = self.net.clone();
        net.params.copy_from_slice(params);
        let mut sig = Vec::new();
        for (i, s) in self.states.iter().enumerate() {
            let acts = net.forward(s).unwrap();
            sig.extend(acts.relu_pattern());
            let ratio = (log_softmax(&acts.logits)[self.actions[i]] - self.old_logp[i]).exp();
            sig.push(clip_active(ratio, self.advantages[i], self.hyper.clip_eps));
        }
        sig
    }
}

pub struct GradCheck {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel: f64,
}

/// Central differences with step `h` on up to `want` random parameters,
/// skipping any whose perturbation crosses a kink.
pub fn gradient_check(problem: &GradProblem, want: usize, h: f64, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let analytic = problem.analytic();
    let base = problem.net.params.clone();
    let base_sig = problem.branch_signature(&base);
    let mut order: Vec<usize> = (0..base.len()).collect();
    rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
    let mut out = GradCheck {
        checked: 0,
        skipped_kinks: 0,
        max_rel: 0.0,
    };
    for i in order {
        if out.checked == want {
            break;
        }
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        if problem.branch_signature(&plus) != base_sig || problem.branch_signature(&minus) != base_sig {
            out.skipped_kinks += 1;
            continue;
        }
        let numeric = (problem.loss_at(&plus) - problem.loss_at(&minus)) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        out.max_rel = out.max_rel.max(rel);
        out.checked += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Command-line helpers
// ---------------------------------------------------------------------------

/// Runs the `rlss` binary with `args`; `env` pairs are added to the
/// environment and `RLSS_CONFIG` is cleared unless given.
pub fn rlss(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rlss"));
    cmd.args(args).env_remove("RLSS_CONFIG");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn rlss")
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

/// Writes a short toy training config into `dir` and returns its path.
pub fn tiny_train_config(dir: &Path, steps: u64) -> PathBuf {
    let catalog = manifest_dir().join("data").join("toy.toml");
    let text = format!(
        r#"catalog = "{}"
checkpoint_interval = 2

[env]
t_max = 5
grid = 18
boundary = {{ kind = "rect", width = 16, height = 16 }}

[ppo]
total_steps = {steps}
horizon = 128
minibatch = 32
epochs = 2
"#,
        catalog.display().to_string().replace('\\', "/")
    );
    let path = dir.join("tiny.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn sha256_file(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

// ---------------------------------------------------------------------------
// Property sweeps shared by the property tests and the acceptance suite
// ---------------------------------------------------------------------------

/// Block sizes `(w, h)` for the three-block stacking sweep.
pub const STACK_SIZES: [[(i32, i32); 3]; 5] = [
    [(4, 1), (3, 1), (2, 1)],
    [(2, 1), (2, 1), (2, 1)],
    [(3, 2), (4, 1), (1, 3)],
    [(1, 1), (5, 1), (3, 2)],
    [(4, 2), (2, 2), (4, 1)],
];

/// Compares the library's stability check with the torque oracle on every
/// three-block column whose upper blocks are shifted by -2..=2 relative to
/// the block beneath. Returns `(cases, disagreements)`.
pub fn stability_sweep() -> (usize, Vec<String>) {
    use rlss::constraints::{stability_on, Layout};
    use rlss::scene::DomainKind;
    let boundary = SceneBoundary::open(20, 12, DomainKind::Blocks);
    let mut cases = 0;
    let mut bad = Vec::new();
    for sizes in STACK_SIZES {
        for d1 in -2..=2 {
            for d2 in -2..=2 {
                let x0 = 8;
                let blocks = [
                    (x0, sizes[0].0, sizes[0].1),
                    (x0 + d1, sizes[1].0, sizes[1].1),
                    (x0 + d1 + d2, sizes[2].0, sizes[2].1),
                ];
                let layout = Layout::new(&boundary, stack_rects(&blocks, boundary.height as i32));
                let got = stability_on(&layout).is_ok();
                let want = oracle_stack_stable(&blocks);
                cases += 1;
                if got != want {
                    bad.push(format!("{blocks:?}: library {got}, oracle {want}"));
                }
            }
        }
    }
    (cases, bad)
}

/// Checks JSD and softmax properties on `n` random vectors; returns the
/// list of violations.
pub fn divergence_sweep(n: usize, seed: u64) -> Vec<String> {
    use rlss::metrics::{argmax, jsd, softmax, temperature_softmax};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    for case in 0..n {
        let k = rng.gen_range(2..12);
        let logits: Vec<f64> = (0..k).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let other: Vec<f64> = (0..k).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let (p, q) = (softmax(&logits), softmax(&other));
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 || p.iter().any(|x| x.is_nan() || *x <= 0.0) {
            bad.push(format!("case {case}: softmax is not a distribution"));
        }
        let (pq, qp) = (jsd(&p, &q), jsd(&q, &p));
        if (pq - qp).abs() > 1e-12 {
            bad.push(format!("case {case}: asymmetric {pq} vs {qp}"));
        }
        if !(0.0..=1.0).contains(&pq) {
            bad.push(format!("case {case}: out of bounds {pq}"));
        }
        if jsd(&p, &p).abs() > 1e-12 {
            bad.push(format!("case {case}: jsd(p, p) = {}", jsd(&p, &p)));
        }
        let (i, j) = (rng.gen_range(0..k), rng.gen_range(0..k - 1));
        let j = if j >= i { j + 1 } else { j };
        let mut a = vec![0.0; k];
        let mut b = vec![0.0; k];
        a[i] = 1.0;
        b[j] = 1.0;
        if (jsd(&a, &b) - 1.0).abs() > 1e-12 {
            bad.push(format!("case {case}: disjoint jsd = {}", jsd(&a, &b)));
        }
        let mode = argmax(&logits);
        for tau in [1e-3, 0.05, 0.3, 1.0, 4.0, rng.gen_range(1e-4..10.0)] {
            if argmax(&temperature_softmax(&logits, tau)) != mode {
                bad.push(format!("case {case}: tau {tau} moved the mode"));
            }
        }
    }
    bad
}

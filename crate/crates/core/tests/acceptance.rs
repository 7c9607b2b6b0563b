//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. The
//! two learning criteria train real policies and take several minutes.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlss::agents::{baseline, Agent, PolicyAgent};
use rlss::boundary::BoundarySpec;
use rlss::config::RunConfig;
use rlss::constraints::ConstraintSet;
use rlss::env::{Env, Outcome, Rules};
use rlss::eval::{evaluate, generate_scene, select_tau};
use rlss::metrics::{pick_tau, TemperaturePolicy};
use rlss::nn::PolicyNet;
use rlss::ppo::{discounted_return, gae_advantages, train};
use rlss::scene::{Cell, DomainKind, SceneBoundary, Status};
use tempfile::TempDir;

use common::*;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s(e: impl std::fmt::Display) -> String {
    e.to_string()
}

struct Report {
    failures: usize,
}

impl Report {
    fn run(&mut self, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let result = match (result, budget) {
            (Ok(d), Some(b)) if elapsed > b => Err(format!("{d}; took {elapsed:.2?}, budget {b:.0?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL  {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
}

fn reward_branches() -> Check {
    let cat = catalog("toy");
    let rect = BoundarySpec::Rect { width: 16, height: 16 };

    // Placement r[l - c] and the count penalty.
    let mut env = Env::new(cat.clone(), &env_config(rect.clone(), 8, 18), 3).map_err(e2s)?;
    env.reset().map_err(e2s)?;
    let r = env.step(0).map_err(e2s)?;
    ensure(r.reward == 0.1 && r.outcome == Outcome::Placed { complexity: 1 }, format!("fresh table paid {}", r.reward))?;
    let r = env.step(1).map_err(e2s)?;
    ensure(r.reward == 0.5 && r.outcome == Outcome::Placed { complexity: 2 }, format!("chair paid {}", r.reward))?;
    for _ in 0..4 {
        env.step(2).map_err(e2s)?;
    }
    let r = env.step(2).map_err(e2s)?;
    ensure(r.reward == -0.1 && r.outcome == Outcome::CountPenalty, format!("count limit paid {}", r.reward))?;

    // Failure once the step budget is spent.
    env.step(0).map_err(e2s)?;
    let r = env.step(0).map_err(e2s)?;
    ensure(r.reward == -1.0 && r.done && r.outcome == Outcome::Failure, format!("failure paid {}", r.reward))?;

    // Success pays 1 + r.
    let mut env = Env::new(cat.clone(), &env_config(rect.clone(), 6, 18), 11).map_err(e2s)?;
    env.reset().map_err(e2s)?;
    let rewards: Vec<f64> = [0, 1, 0, 1]
        .iter()
        .map(|a| env.step(*a).map(|s| s.reward))
        .collect::<Result<_, _>>()
        .map_err(e2s)?;
    ensure(rewards == [0.1, 0.5, 0.1, 1.5], format!("success sequence paid {rewards:?}"))?;
    ensure(env.scene().status == Status::Success, "scene not marked successful")?;

    // No legal slot: -0.1 without placement in a 3x3 room.
    let mut env = Env::new(cat, &env_config(rect, 8, 18), 0).map_err(e2s)?;
    env.reset().map_err(e2s)?;
    let mut b = SceneBoundary::open(5, 5, DomainKind::Indoor);
    for y in 0..5 {
        for x in 0..5 {
            b.usable[y * 5 + x] = (1..4).contains(&x) && (1..4).contains(&y);
        }
    }
    b.doors.push(Cell::new(0, 2));
    env.reset_with(b);
    let mut no_slot = None;
    while env.scene().status == Status::InProgress {
        let feasible = env.rules().best_complexity(env.scene(), 2).is_some();
        let r = env.step(2).map_err(e2s)?;
        if !feasible && r.outcome != Outcome::Failure {
            no_slot = Some(r.reward);
            break;
        }
    }
    ensure(no_slot == Some(-0.1), format!("no-slot branch paid {no_slot:?}"))?;
    Ok("-1 / -0.1 (count) / -0.1 (no slot) / r[i] / 1+r[i] as expected".into())
}

fn audit() -> Check {
    let domains = [("toy", "toy"), ("bedroom", "bedroom"), ("blocks", "blocks")];
    let agents = ["gsearch", "gsearch-r"];
    let mut scenes = 0;
    let mut placed = 0;
    for (i, (cfg_name, cat_name)) in domains.iter().enumerate() {
        let loaded = RunConfig::load(config_path(cfg_name)).map_err(e2s)?;
        let rules = Rules::new(loaded.catalog.clone(), &loaded.config.env).map_err(e2s)?;
        let cat = catalog(cat_name);
        let count = if i == 0 { 334 } else { 333 };
        for k in 0..count {
            let mut agent = baseline(agents[k % 2]).map_err(e2s)?;
            let episode = generate_scene(agent.as_mut(), &rules, &loaded.config.env.boundary, 17, k).map_err(e2s)?;
            let set = ConstraintSet::for_domain(episode.scene.boundary.domain);
            set.audit(&episode.scene, &cat)
                .map_err(|v| format!("{cfg_name} scene {k}: {v:?}"))?;
            placed += episode.scene.instances.len();
            scenes += 1;
        }
    }
    Ok(format!("{scenes} scenes, {placed} objects, 0 violations"))
}

fn gradients() -> Check {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..5 {
        let check = gradient_check(&GradProblem::random(100 + seed, 4), 100, 1e-4, seed);
        ensure(check.checked >= 100, format!("net {seed}: only {} parameters checked", check.checked))?;
        checked += check.checked;
        worst = worst.max(check.max_rel);
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.3e}"))?;
    Ok(format!("{checked} parameters over 5 nets, max relative error {worst:.2e}"))
}

fn estimators() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..64);
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.15)).collect();
        let (gamma, lambda, last) = (rng.gen_range(0.8..1.0), rng.gen_range(0.5..1.0), rng.gen_range(-1.0..1.0));
        let pairs = discounted_return(&rewards, &dones, gamma)
            .into_iter()
            .zip(oracle_returns(&rewards, &dones, gamma))
            .chain(
                gae_advantages(&rewards, &values, &dones, last, gamma, lambda)
                    .into_iter()
                    .zip(oracle_gae(&rewards, &values, &dones, last, gamma, lambda)),
            );
        for (a, b) in pairs {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:.3e}"))?;
    Ok(format!("100 instances, max deviation {worst:.1e}"))
}

fn stability() -> Check {
    let (cases, bad) = stability_sweep();
    ensure(bad.is_empty(), format!("{} of {cases} disagree, first: {}", bad.len(), bad.first().cloned().unwrap_or_default()))?;
    Ok(format!("{cases} stacks, 100% agreement"))
}

fn divergences() -> Check {
    let bad = divergence_sweep(1000, 7);
    ensure(bad.is_empty(), format!("{} violations, first: {}", bad.len(), bad.first().cloned().unwrap_or_default()))?;
    Ok("1000 vectors, all properties hold".into())
}

struct Trained {
    net: PolicyNet,
    rules: Rules,
    boundary: BoundarySpec,
    train_time: Duration,
}

fn train_config(name: &str, seed: u64) -> Result<Trained, String> {
    let loaded = RunConfig::load(config_path(name)).map_err(e2s)?;
    let cfg = &loaded.config;
    let mut env = Env::new(loaded.catalog.clone(), &cfg.env, seed).map_err(e2s)?;
    let mut net = PolicyNet::new(cfg.net_config(&loaded.catalog), &mut ChaCha8Rng::seed_from_u64(seed));
    let start = Instant::now();
    train(&mut env, &mut net, &cfg.ppo, seed, |_, _| Ok(())).map_err(e2s)?;
    Ok(Trained {
        net,
        rules: env.rules().clone(),
        boundary: cfg.env.boundary.clone(),
        train_time: start.elapsed(),
    })
}

struct Scores {
    rlss_w: f64,
    rlss_complexity: f64,
    rlss_time: f64,
    base: Vec<(String, f64, f64)>,
}

fn score(trained: &Trained, n: usize, seed: u64) -> Result<Scores, String> {
    let mut agent = PolicyAgent::new(trained.net.clone(), TemperaturePolicy::greedy());
    let eval = evaluate(&mut agent, &trained.rules, &trained.boundary, n, seed).map_err(e2s)?;
    let mut base = Vec::new();
    for name in ["gsearch", "gsearch-r"] {
        let mut agent: Box<dyn Agent> = baseline(name).map_err(e2s)?;
        let e = evaluate(agent.as_mut(), &trained.rules, &trained.boundary, n, seed).map_err(e2s)?;
        base.push((name.to_string(), e.report.success_rate, e.report.mean_max_complexity));
    }
    Ok(Scores {
        rlss_w: eval.report.success_rate,
        rlss_complexity: eval.report.mean_max_complexity,
        rlss_time: eval.mean_time_s,
        base,
    })
}

fn toy_learning(slot: &mut Option<Trained>) -> Check {
    let trained = train_config("toy", 1)?;
    let s = score(&trained, 200, 1000)?;
    let gsearch = s.base[0].1;
    let secs = trained.train_time.as_secs_f64();
    *slot = Some(trained);
    let detail = format!("W(tau=0) {:.3}, gsearch W {gsearch:.3}, training {secs:.0} s", s.rlss_w);
    ensure(secs < 300.0, detail.clone())?;
    ensure(s.rlss_w >= 0.95, detail.clone())?;
    ensure(s.rlss_w >= 2.0 * gsearch, detail.clone())?;
    Ok(detail)
}

fn bedroom_learning() -> Check {
    let trained = train_config("bedroom", 1)?;
    let s = score(&trained, 200, 1000)?;
    let secs = trained.train_time.as_secs_f64();
    let (g, gr) = (&s.base[0], &s.base[1]);
    let detail = format!(
        "W {:.3} vs gsearch {:.3} / gsearch-r {:.3}; max complexity {:.2} vs gsearch {:.2}; {:.4} s/scene; training {secs:.0} s",
        s.rlss_w, g.1, gr.1, s.rlss_complexity, g.2, s.rlss_time
    );
    ensure(secs < 1800.0, detail.clone())?;
    ensure(s.rlss_w > g.1 && s.rlss_w > gr.1, detail.clone())?;
    ensure(s.rlss_complexity >= g.2, detail.clone())?;
    ensure(s.rlss_time < 1.0, detail.clone())?;
    Ok(detail)
}

fn tau_sweep(trained: Option<&Trained>) -> Check {
    let trained = trained.ok_or("no trained toy policy available")?;
    let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let sweep = select_tau(&trained.net, &trained.rules, &trained.boundary, &grid, 100, 1, 5).map_err(e2s)?;
    ensure(grid.contains(&sweep.tau_optimal), format!("tau {} not in grid", sweep.tau_optimal))?;
    let best = sweep.rows.iter().map(|r| r.score()).fold(f64::NEG_INFINITY, f64::max);
    ensure(sweep.rows[sweep.best].score() == best, "selected row is not a maximiser of min(V, W)")?;
    ensure(sweep.rows[sweep.best].tau == sweep.tau_optimal, "tau_optimal does not match the selected row")?;
    ensure(pick_tau(&sweep.rows) == Some(sweep.best), "selection disagrees with its own table")?;
    Ok(format!("tau* = {} with min(V, W) = {best:.3}", sweep.tau_optimal))
}

fn files_digest(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && !p.to_string_lossy().ends_with(".timing.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), sha256_file(&p)))
        .collect();
    out.sort();
    out
}

fn determinism() -> Check {
    let tmp = TempDir::new().map_err(e2s)?;
    let config = tiny_train_config(tmp.path(), 512);
    let cfg = config.to_str().unwrap();
    let mut digests = Vec::new();
    for run in ["a", "b"] {
        let root = tmp.path().join(run);
        let p = |s: &str| root.join(s).to_string_lossy().into_owned();
        let ckpt = p("train/checkpoint.json");
        let commands: Vec<Vec<String>> = vec![
            vec!["train", "--config", cfg, "--seed", "3", "--out", &p("train")],
            vec!["generate", "--checkpoint", &ckpt, "--n", "5", "--seed", "4", "--out", &p("gen")],
            vec!["eval", "--checkpoint", &ckpt, "--n", "50", "--seed", "5", "--out", &p("eval/report.json"), "--scenes", &p("eval/scenes")],
            vec!["eval", "--baseline", "gsearch-r", "--config", cfg, "--n", "50", "--seed", "5", "--out", &p("base/report.json")],
            vec!["sweep-tau", "--checkpoint", &ckpt, "--grid", "0.2,0.6,1.0", "--n-per-tau", "30", "--seed", "6", "--out", &p("sweep/sweep.tsv")],
        ]
        .into_iter()
        .map(|c| c.into_iter().map(String::from).collect())
        .collect();
        for c in &commands {
            let args: Vec<&str> = c.iter().map(String::as_str).collect();
            let out = rlss(&args, &[]);
            ensure(exit_code(&out) == 0, format!("`rlss {}` exited {}", c[0], exit_code(&out)))?;
        }
        let mut all = Vec::new();
        for sub in ["train", "gen", "eval", "eval/scenes", "base", "sweep"] {
            all.extend(files_digest(&root.join(sub)).into_iter().map(|(f, h)| (format!("{sub}/{f}"), h)));
        }
        digests.push(all);
    }
    ensure(digests[0] == digests[1], "artefacts differ between runs")?;
    Ok(format!("{} artefacts from 5 commands identical across two runs", digests[0].len()))
}

fn main() {
    let mut report = Report { failures: 0 };
    let mut toy: Option<Trained> = None;
    report.run("reward branches", Some(Duration::from_secs(1)), reward_branches);
    report.run("constraint-validity audit", Some(Duration::from_secs(30)), audit);
    report.run("gradient check", Some(Duration::from_secs(10)), gradients);
    report.run("estimator oracles", Some(Duration::from_secs(1)), estimators);
    report.run("stability oracle", Some(Duration::from_secs(1)), stability);
    report.run("jsd/softmax properties", Some(Duration::from_secs(1)), divergences);
    report.run("toy learning criterion", None, || toy_learning(&mut toy));
    report.run("bedroom domain", None, bedroom_learning);
    report.run("tau sweep consistency", None, || tau_sweep(toy.as_ref()));
    report.run("determinism", None, determinism);
    println!("{} criteria failed", report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}

//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure while writing results, 2 usage or
//! configuration error, 3 unreadable checkpoint, 4 non-finite values during
//! training.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{baseline, Agent, PolicyAgent};
use crate::boundary::BoundarySpec;
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::env::{Env, Rules};
use crate::error::Error;
use crate::eval::{evaluate, generate_scene, select_tau};
use crate::metrics::TemperaturePolicy;
use crate::nn::PolicyNet;
use crate::ppo::train;
use crate::render::render_svg;
use crate::scene_io::serialize_scene;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CHECKPOINT: i32 = 3;
pub const EXIT_NONFINITE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "rlss", version, about = "Sequential scene generation with a learned category policy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy with PPO.
    Train(TrainArgs),
    /// Generate scenes from a trained checkpoint.
    Generate(GenerateArgs),
    /// Evaluate a checkpoint or a baseline.
    Eval(EvalArgs),
    /// Sweep sampling temperatures and pick the best.
    SweepTau(SweepArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration file.
    #[arg(long, env = "RLSS_CONFIG")]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for checkpoints and the training log.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the configured number of training steps.
    #[arg(long)]
    pub steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    /// Sampling temperature; 0 selects greedily.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Number of leading steps sampled uniformly.
    #[arg(long, default_value_t = 1)]
    pub uniform_prefix: u32,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained checkpoint to evaluate.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub checkpoint: Option<PathBuf>,
    /// Baseline agent: gsearch or gsearch-r.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Run configuration (baselines only).
    #[arg(long, env = "RLSS_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file (JSON); timing goes to a sibling `.timing.json` file.
    #[arg(long, default_value = "eval_report.json")]
    pub out: PathBuf,
    /// Also archive every generated scene into this directory.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated temperatures in (0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub grid: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub n_per_tau: usize,
    #[arg(long, default_value_t = 1)]
    pub uniform_prefix: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sweep table (tab-separated).
    #[arg(long, default_value = "sweep.tsv")]
    pub out: PathBuf,
}

/// Error paired with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) => EXIT_NONFINITE,
        Error::Checkpoint(_) => EXIT_CHECKPOINT,
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure {
            code: exit_code(&error),
            error,
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: e,
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn write(path: &Path, text: &str) -> crate::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(dir: &Path) -> crate::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_train(args: &TrainArgs) -> CmdResult {
    let loaded = RunConfig::load(&args.config).map_err(usage)?;
    let cfg = &loaded.config;
    let mut hyper = cfg.ppo.clone();
    if let Some(steps) = args.steps {
        hyper.total_steps = steps;
        hyper.validate().map_err(usage)?;
    }
    mkdir(&args.out)?;
    let mut env = Env::new(loaded.catalog.clone(), &cfg.env, args.seed).map_err(usage)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut net = PolicyNet::new(cfg.net_config(&loaded.catalog), &mut init_rng);

    let log_path = args.out.join("train_log.jsonl");
    let mut log_text = String::new();
    let mut updates = 0usize;
    let result = train(&mut env, &mut net, &hyper, args.seed, |record, net| {
        updates += 1;
        let line = serde_json::to_string(record).expect("log records serialise");
        eprintln!("{line}");
        log_text.push_str(&line);
        log_text.push('\n');
        write(&log_path, &log_text)?;
        if cfg.checkpoint_interval > 0 && updates.is_multiple_of(cfg.checkpoint_interval) {
            Checkpoint::capture(net, &cfg.env, &hyper, &loaded.catalog_text, record.step)
                .save(args.out.join(format!("checkpoint_{:09}.json", record.step)))?;
        }
        Ok(())
    });
    if let Err(e) = result {
        if let Error::NonFinite(_) = e {
            let dump = format!("{e}\nlast parameters finite: {}\n", net.params.iter().all(|p| p.is_finite()));
            let _ = write(&args.out.join("nonfinite_dump.txt"), &dump);
        }
        return Err(e.into());
    }
    write(&log_path, &log_text)?;
    let final_path = args.out.join("checkpoint.json");
    Checkpoint::capture(&net, &cfg.env, &hyper, &loaded.catalog_text, hyper.total_steps).save(&final_path)?;
    println!("wrote {}", final_path.display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> std::result::Result<(PolicyNet, Rules, BoundarySpec), Failure> {
    let restored = Checkpoint::load(path).map_err(|e| Failure {
        code: EXIT_CHECKPOINT,
        error: e,
    })?;
    let rules = Rules::new(restored.catalog, &restored.env).map_err(|e| Failure {
        code: EXIT_CHECKPOINT,
        error: e,
    })?;
    Ok((restored.net, rules, restored.env.boundary))
}

fn sampling_policy(s: &SamplingArgs) -> std::result::Result<TemperaturePolicy, Failure> {
    if !(0.0..=1.0).contains(&s.tau) {
        return Err(usage(Error::InvalidArgument(format!("--tau must lie in [0, 1], got {}", s.tau))));
    }
    Ok(TemperaturePolicy::new(s.tau, s.uniform_prefix))
}

fn cmd_generate(args: &GenerateArgs) -> CmdResult {
    let policy = sampling_policy(&args.sampling)?;
    if args.n == 0 {
        return Err(usage(Error::InvalidArgument("--n must be positive".into())));
    }
    let (net, rules, boundary) = load_checkpoint(&args.checkpoint)?;
    mkdir(&args.out)?;
    let mut agent = PolicyAgent::new(net, policy);
    for i in 0..args.n {
        let episode = generate_scene(&mut agent, &rules, &boundary, args.seed, i)?;
        write(&args.out.join(format!("scene_{i:04}.toml")), &serialize_scene(&episode.scene))?;
        write(
            &args.out.join(format!("scene_{i:04}.svg")),
            &render_svg(&episode.scene, &rules.catalog),
        )?;
        println!(
            "scene {i}: {:?} after {} steps, {} objects",
            episode.scene.status,
            episode.scene.step,
            episode.scene.instances.len()
        );
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> CmdResult {
    if args.n == 0 {
        return Err(usage(Error::InvalidArgument("--n must be positive".into())));
    }
    let (mut agent, rules, boundary): (Box<dyn Agent>, Rules, BoundarySpec) = match (&args.checkpoint, &args.baseline) {
        (Some(path), _) => {
            let policy = sampling_policy(&args.sampling)?;
            let (net, rules, boundary) = load_checkpoint(path)?;
            (Box::new(PolicyAgent::new(net, policy)), rules, boundary)
        }
        (None, Some(name)) => {
            let agent = baseline(name).map_err(usage)?;
            let Some(config) = &args.config else {
                return Err(usage(Error::InvalidArgument(
                    "baselines need --config (or RLSS_CONFIG)".into(),
                )));
            };
            let loaded = RunConfig::load(config).map_err(usage)?;
            let rules = Rules::new(loaded.catalog, &loaded.config.env).map_err(usage)?;
            (agent, rules, loaded.config.env.boundary)
        }
        (None, None) => {
            return Err(usage(Error::InvalidArgument("give --checkpoint or --baseline".into())));
        }
    };
    let eval = evaluate(agent.as_mut(), &rules, &boundary, args.n, args.seed)?;
    let r = &eval.report;
    println!("agent                {}", r.agent);
    println!("scenes               {}", r.n);
    println!("success rate W       {:.4}", r.success_rate);
    println!("variety V            {:.4}", r.variety);
    match r.kl {
        Some(kl) => println!("KL(P || U)           {kl:.4}"),
        None => println!("KL(P || U)           n/a (no successful scenes)"),
    }
    println!("mean max complexity  {:.4}", r.mean_max_complexity);
    println!("mean time per scene  {:.6} s", eval.mean_time_s);
    let json = serde_json::to_string_pretty(r).expect("reports serialise") + "\n";
    write(&args.out, &json)?;
    let timing = serde_json::json!({ "mean_time_s": eval.mean_time_s, "n": r.n });
    write(&args.out.with_extension("timing.json"), &(timing.to_string() + "\n"))?;
    if let Some(dir) = &args.scenes {
        mkdir(dir)?;
        for (i, e) in eval.episodes.iter().enumerate() {
            write(&dir.join(format!("scene_{i:04}.toml")), &serialize_scene(&e.scene))?;
        }
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> CmdResult {
    if args.n_per_tau == 0 {
        return Err(usage(Error::InvalidArgument("--n-per-tau must be positive".into())));
    }
    if args.grid.is_empty() {
        return Err(usage(Error::InvalidArgument("--grid is empty".into())));
    }
    let (net, rules, boundary) = load_checkpoint(&args.checkpoint)?;
    let sweep = select_tau(&net, &rules, &boundary, &args.grid, args.n_per_tau, args.uniform_prefix, args.seed)
        .map_err(usage)?;
    let table = sweep.to_tsv();
    print!("{table}");
    println!("tau_optimal\t{}", sweep.tau_optimal);
    write(&args.out, &format!("{table}# tau_optimal\t{}\n", sweep.tau_optimal))?;
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::SweepTau(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

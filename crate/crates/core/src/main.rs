use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use connav::config::ExperimentConfig;
use connav::env::{write_trajectory_csv, MultiRobotEnv};
use connav::eval::{evaluate, rollout, Controller, ExpertController, MeanPolicy, Stationary};
use connav::net::Checkpoint;
use connav::train::{self, TrainerState};
use connav::world::{generate_scenarios, load_map_dir, WorldMap};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "connav", about = "Connectivity-constrained multi-robot navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random maps as JSON files.
    GenMaps {
        #[command(flatten)]
        common: Common,
        /// Number of maps.
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Train a policy; writes checkpoint.json and diagnostics.jsonl into --out.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from the checkpoint in --out if there is one.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint (or a baseline controller) and print a JSON report.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Baseline::Policy)]
        controller: Baseline,
        #[arg(long, default_value_t = 1)]
        episodes_per_map: usize,
    },
    /// Roll out one episode and write its trajectory as CSV.
    ExportTraj {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Baseline::Policy)]
        controller: Baseline,
        /// Map JSON file to roll out on.
        #[arg(long)]
        map: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Policy,
    Expert,
    Static,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    /// on or off
    #[arg(long)]
    bc: Option<String>,
    #[arg(long)]
    robots: Option<usize>,
    /// Training budget in pooled robot-steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Map directory (training maps for `train`, evaluation maps for `eval`).
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Output directory or file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra overrides, `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        self.resolve_over(None)
    }

    /// `--config` (or `base`, or the defaults) with the flag overrides applied.
    fn resolve_over(&self, base: Option<ExperimentConfig>) -> Result<ExperimentConfig> {
        let base = match (&self.config, base) {
            (Some(p), _) => ExperimentConfig::load(p)?,
            (None, Some(b)) => b,
            (None, None) => ExperimentConfig::default(),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_owned(), v));
            }
        };
        put("algo", self.algo.clone());
        put("bc", self.bc.clone());
        put("n_robots", self.robots.map(|v| v.to_string()));
        put("total_steps", self.steps.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        for s in &self.set {
            let (k, v) = s.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{s}`"))?;
            pairs.push((k.to_owned(), v.to_owned()));
        }
        Ok(base.with_overrides(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?)
    }

    fn out(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn gen_maps(cfg: &ExperimentConfig, count: usize, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let maps = generate_scenarios(&cfg.scenario(cfg.seed), count)?;
    for (k, map) in maps.iter().enumerate() {
        map.save(out.join(format!("map_{k:04}.json")))?;
    }
    eprintln!("wrote {count} maps to {}", out.display());
    Ok(())
}

/// Policy weights from a checkpoint whose layout must match the configured team.
fn load_policy(path: &Path, cfg: &ExperimentConfig) -> Result<(connav::net::PolicyNet, Vec<f64>)> {
    let ck = Checkpoint::load(path)?;
    let (net, _) = ck.networks()?;
    if net.obs_dim() != connav::env::obs_dim(cfg.n_robots) {
        bail!("{}: checkpoint is for a different team size than n_robots = {}", path.display(), cfg.n_robots);
    }
    Ok((net, ck.policy))
}

fn eval_maps(common: &Common, cfg: &ExperimentConfig) -> Result<Vec<WorldMap>> {
    Ok(match &common.maps {
        Some(dir) => load_map_dir(dir)?,
        None => train::evaluation_maps(cfg)?,
    })
}

/// Config for commands that read a checkpoint: the one the checkpoint was
/// trained with unless `--config` is given, then the command-line flags.
fn config_for_checkpoint(common: &Common, checkpoint: Option<&Path>) -> Result<ExperimentConfig> {
    let stored = match (&common.config, checkpoint) {
        (None, Some(path)) => serde_json::from_value::<TrainerState>(Checkpoint::load(path)?.meta).ok().map(|s| s.config),
        _ => None,
    };
    common.resolve_over(stored)
}

fn controller<'a>(
    kind: Baseline,
    policy: Option<&'a (connav::net::PolicyNet, Vec<f64>)>,
    expert: &'a connav::expert::ScriptedExpert,
) -> Result<Box<dyn Controller + 'a>> {
    Ok(match kind {
        Baseline::Policy => {
            let (net, theta) = policy.context("--checkpoint is required for the policy controller")?;
            Box::new(MeanPolicy { net, theta })
        }
        Baseline::Expert => Box::new(ExpertController(expert)),
        Baseline::Static => Box::new(Stationary),
    })
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenMaps { common, count } => {
            let cfg = common.resolve()?;
            gen_maps(&cfg, count, &common.out("maps"))
        }
        Command::Train { common, resume } => {
            let mut cfg = common.resolve()?;
            if let Some(dir) = &common.maps {
                cfg.map_dir = dir.to_string_lossy().into_owned();
            }
            let maps = train::training_maps(&cfg)?;
            let out = common.out("run");
            let summary = train::train(&cfg, &maps, &out, resume, |r| {
                eprintln!(
                    "update {:>4}  steps {:>8}  return {:>9.2}  J_c {:>7.3}  kl {:.5}  bc {:.4}  success {:.2}  {}",
                    r.update, r.steps, r.avg_return, r.j_c, r.kl, r.bc_loss, r.success_rate, r.mode
                );
            })?;
            eprintln!("{} updates, checkpoint {}", summary.updates, summary.checkpoint.display());
            Ok(())
        }
        Command::Eval { common, checkpoint, controller: kind, episodes_per_map } => {
            let cfg = config_for_checkpoint(&common, checkpoint.as_deref())?;
            let policy = checkpoint.as_deref().map(|p| load_policy(p, &cfg)).transpose()?;
            let expert = cfg.expert();
            let maps = eval_maps(&common, &cfg)?;
            let mut ctl = controller(kind, policy.as_ref(), &expert)?;
            let report = evaluate(cfg.env(), &maps, episodes_per_map, ctl.as_mut())?;
            let json = serde_json::to_string_pretty(&report)?;
            match &common.out {
                Some(path) => std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?,
                None => println!("{json}"),
            }
            eprintln!(
                "success {:.3}  connectivity {:.3}  travel {}  ({} episodes)",
                report.success_rate,
                report.connectivity_rate,
                report.travel_time_mean.map_or("n/a".into(), |t| format!("{t:.2} s")),
                report.episodes
            );
            Ok(())
        }
        Command::ExportTraj { common, checkpoint, controller: kind, map } => {
            let cfg = config_for_checkpoint(&common, checkpoint.as_deref())?;
            let policy = checkpoint.as_deref().map(|p| load_policy(p, &cfg)).transpose()?;
            let expert = cfg.expert();
            let world = WorldMap::load(&map)?;
            let mut ctl = controller(kind, policy.as_ref(), &expert)?;
            let mut env = MultiRobotEnv::new(cfg.env(), world.clone());
            let mut rows = Vec::new();
            let (outcome, steps, _, _) = rollout(&mut env, &world, ctl.as_mut(), Some(&mut rows))?;
            let out = common.out("trajectory.csv");
            write_trajectory_csv(&out, &rows)?;
            eprintln!("{outcome:?} after {steps} steps, wrote {}", out.display());
            Ok(())
        }
    }
}

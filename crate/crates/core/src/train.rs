//! The training loop: sampled rollouts of the shared policy on random training
//! maps, periodic CPO/TRPO updates, checkpoints and a diagnostics log.

use crate::config::ExperimentConfig;
use crate::cpo::{self, CpoError, Learner};
use crate::env::{EnvError, MultiRobotEnv};
use crate::net::{log_prob, Checkpoint, GaussianAction, NetError, PolicyArch, PolicyNet, ValueArch, ValueNet};
use crate::rl::{Batch, DiagnosticsLog, Episode, UpdateRecord};
use crate::world::{generate_scenarios, load_map_dir, Vec2, WorldError, WorldMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "diagnostics.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Cpo(#[from] CpoError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no training maps")]
    NoMaps,
    #[error("training map {index} has {got} robots, expected {expected}")]
    TeamSize { index: usize, expected: usize, got: usize },
    #[error("cannot resume from {path}: {reason}")]
    Resume { path: PathBuf, reason: String },
}

/// Trainer state stored in the checkpoint's `meta` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub config: ExperimentConfig,
    pub updates: usize,
    /// Pooled robot-steps consumed so far.
    pub steps: usize,
    pub env_steps: usize,
    pub phi_c: Vec<f64>,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub updates: usize,
    pub steps: usize,
}

/// Training maps: loaded from `map_dir` when set, otherwise generated from `map_seed`.
pub fn training_maps(cfg: &ExperimentConfig) -> Result<Vec<WorldMap>, WorldError> {
    if cfg.map_dir.is_empty() {
        generate_scenarios(&cfg.scenario(cfg.map_seed), cfg.train_maps)
    } else {
        load_map_dir(&cfg.map_dir)
    }
}

/// Held-out maps from a seed stream disjoint from the training one.
pub fn evaluation_maps(cfg: &ExperimentConfig) -> Result<Vec<WorldMap>, WorldError> {
    generate_scenarios(&cfg.scenario(cfg.eval_map_seed), cfg.eval_maps)
}

/// Freshly initialized networks and parameters; consumes `rng`.
pub fn init_learner(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Learner, NetError> {
    let policy = PolicyNet::new(PolicyArch::for_team(cfg.n_robots))?;
    let value = ValueNet::new(ValueArch::new(policy.obs_dim(), cfg.value_width));
    let theta = policy.init_params(cfg.init_logstd, rng);
    let phi = value.init_params(rng);
    let mut phi_c = value.init_params(rng);
    // the cost critic starts at zero output, the value of a team that never disconnects
    for name in ["value.weight", "value.bias"] {
        let range = value.layout().get(name).expect("value head present").range();
        phi_c[range].iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(Learner { policy, value, theta, phi, phi_c })
}

/// Rolls out one episode with actions sampled from the current policy.
pub fn collect_episode(
    env: &mut MultiRobotEnv,
    map: &WorldMap,
    map_index: usize,
    policy: &PolicyNet,
    theta: &[f64],
    rng: &mut impl Rng,
) -> Result<Episode, TrainError> {
    env.reset(map);
    let n = env.n_robots();
    let logstd = policy.logstd(theta);
    let mut episode = Episode::start(n, map_index);
    loop {
        let obs = env.observe_all();
        let means = policy.means(theta, &obs, n)?;
        let mut actions = Vec::with_capacity(n);
        let mut log_probs = Vec::with_capacity(n);
        for m in means.chunks_exact(2) {
            let dist = GaussianAction::new([m[0], m[1]], logstd);
            let a: Vec2 = dist.sample(rng);
            log_probs.push(log_prob(&dist, a));
            actions.push(a);
        }
        let result = env.step(&actions)?;
        episode.push(&obs, &actions, &log_probs, &result);
        if let Some(reason) = result.done {
            episode.finish(&env.observe_all(), reason);
            return Ok(episode);
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_owned(), source }
}

fn save_checkpoint(path: &Path, learner: &Learner, state: &TrainerState) -> Result<(), TrainError> {
    let mut ck = Checkpoint::new(&learner.policy, learner.theta.clone(), &learner.value, learner.phi.clone());
    ck.meta = serde_json::to_value(state).map_err(|e| TrainError::Resume { path: path.to_owned(), reason: e.to_string() })?;
    ck.save(path)?;
    Ok(())
}

/// Restores learner and trainer state from a checkpoint written by [`train`].
pub fn load_training_state(path: &Path) -> Result<(Learner, TrainerState), TrainError> {
    let ck = Checkpoint::load(path)?;
    let (policy, value) = ck.networks()?;
    let state: TrainerState = serde_json::from_value(ck.meta.clone())
        .map_err(|e| TrainError::Resume { path: path.to_owned(), reason: e.to_string() })?;
    if state.phi_c.len() != value.num_params() {
        return Err(TrainError::Resume { path: path.to_owned(), reason: "cost critic size mismatch".into() });
    }
    let learner = Learner { policy, value, theta: ck.policy, phi: ck.value, phi_c: state.phi_c.clone() };
    Ok((learner, state))
}

/// Runs training into `out_dir` (checkpoint plus diagnostics log).
///
/// With `resume`, an existing checkpoint in `out_dir` is picked up and the log
/// is truncated to the updates it covers, so an interrupted run continues
/// exactly where the last checkpoint left it. `on_update` sees every record.
pub fn train(
    cfg: &ExperimentConfig,
    maps: &[WorldMap],
    out_dir: &Path,
    resume: bool,
    mut on_update: impl FnMut(&UpdateRecord),
) -> Result<TrainSummary, TrainError> {
    if maps.is_empty() {
        return Err(TrainError::NoMaps);
    }
    if let Some((index, m)) = maps.iter().enumerate().find(|(_, m)| m.n_robots() != cfg.n_robots) {
        return Err(TrainError::TeamSize { index, expected: cfg.n_robots, got: m.n_robots() });
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let ck_path = out_dir.join(CHECKPOINT_FILE);
    let log_path = out_dir.join(LOG_FILE);

    let (mut learner, mut state, mut log) = if resume && ck_path.exists() {
        let (learner, state) = load_training_state(&ck_path)?;
        let same = ExperimentConfig { total_steps: cfg.total_steps, ..state.config.clone() };
        if &same != cfg {
            return Err(TrainError::Resume {
                path: ck_path,
                reason: "configuration differs from the checkpointed run".into(),
            });
        }
        let header = serde_json::to_value(cfg).expect("config serializes");
        let log = DiagnosticsLog::resume(&log_path, state.updates, &header).map_err(io_err(&log_path))?;
        (learner, TrainerState { config: cfg.clone(), ..state }, log)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let learner = init_learner(cfg, &mut rng)?;
        let state = TrainerState {
            config: cfg.clone(),
            updates: 0,
            steps: 0,
            env_steps: 0,
            phi_c: learner.phi_c.clone(),
            rng,
        };
        let header = serde_json::to_value(cfg).expect("config serializes");
        let log = DiagnosticsLog::create(&log_path, &header).map_err(io_err(&log_path))?;
        (learner, state, log)
    };

    let expert = cfg.expert();
    let update_cfg = cfg.update();
    let mut env = MultiRobotEnv::new(cfg.env(), maps[0].clone());
    let mut saved_at = usize::MAX;
    while state.steps < cfg.total_steps {
        let mut batch = Batch::default();
        while batch.samples() <= cfg.n_batch {
            let k = state.rng.random_range(0..maps.len());
            let ep = collect_episode(&mut env, &maps[k], k, &learner.policy, &learner.theta, &mut state.rng)?;
            batch.push(ep);
        }
        let out = cpo::update(&mut learner, &batch, &expert, &update_cfg)?;
        state.updates += 1;
        state.steps += out.samples;
        state.env_steps += out.env_steps;
        let record = UpdateRecord {
            update: state.updates,
            avg_return: out.avg_return,
            j_c: out.j_c,
            bc_loss: out.bc_loss,
            kl: out.diagnostics.kl,
            improvement: out.diagnostics.improvement,
            steps: state.steps,
            env_steps: state.env_steps,
            episodes: out.episodes,
            success_rate: out.success_rate,
            mode: out.diagnostics.mode.as_str().to_owned(),
            accepted: out.diagnostics.accepted,
            backtracks: out.diagnostics.backtracks,
            value_loss: out.value_loss,
            cost_value_loss: out.cost_value_loss,
            logstd: learner.policy.logstd(&learner.theta),
        };
        log.append(&record).map_err(io_err(&log_path))?;
        on_update(&record);
        if cfg.checkpoint_every > 0 && state.updates % cfg.checkpoint_every == 0 {
            state.phi_c.clone_from(&learner.phi_c);
            save_checkpoint(&ck_path, &learner, &state)?;
            saved_at = state.updates;
        }
    }
    if saved_at != state.updates {
        state.phi_c.clone_from(&learner.phi_c);
        save_checkpoint(&ck_path, &learner, &state)?;
    }
    Ok(TrainSummary { checkpoint: ck_path, log: log_path, updates: state.updates, steps: state.steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            total_steps: 600,
            n_batch: 256,
            train_maps: 3,
            t_max: 60,
            lbfgs_iters: 3,
            checkpoint_every: 1,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn episode_bookkeeping() {
        let cfg = tiny();
        let maps = training_maps(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let learner = init_learner(&cfg, &mut rng).unwrap();
        let mut env = MultiRobotEnv::new(cfg.env(), maps[0].clone());
        let ep = collect_episode(&mut env, &maps[1], 1, &learner.policy, &learner.theta, &mut rng).unwrap();
        assert!(!ep.is_empty() && ep.len() <= 60);
        assert_eq!(ep.robots.len(), 3);
        assert_eq!(ep.map_index, 1);
        for r in &ep.robots {
            assert_eq!(r.observations.len(), ep.len() * learner.policy.obs_dim());
            assert_eq!(r.final_observation.len(), learner.policy.obs_dim());
            assert!(r.log_probs.iter().all(|l| l.is_finite()));
        }
    }

    #[test]
    fn cost_critic_starts_at_zero() {
        let cfg = tiny();
        let learner = init_learner(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let obs = vec![0.3; learner.policy.obs_dim() * 2];
        assert_eq!(learner.value.predict(&learner.phi_c, &obs, 2).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn interrupted_run_resumes_identically() {
        let cfg = tiny();
        let maps = training_maps(&cfg).unwrap();
        let full = tempfile::tempdir().unwrap();
        let s = train(&cfg, &maps, full.path(), false, |_| {}).unwrap();
        assert!(s.updates >= 2);
        let full_log = std::fs::read_to_string(&s.log).unwrap();

        let split = tempfile::tempdir().unwrap();
        let short = ExperimentConfig { total_steps: 1, ..cfg.clone() };
        let first = train(&short, &maps, split.path(), false, |_| {}).unwrap();
        assert_eq!(first.updates, 1);
        // a record appended after the checkpoint must be dropped on resume
        std::fs::write(&first.log, std::fs::read_to_string(&first.log).unwrap() + "{\"junk\":1}\n").unwrap();
        let s2 = train(&cfg, &maps, split.path(), true, |_| {}).unwrap();
        assert_eq!(s2.updates, s.updates);
        assert_eq!(std::fs::read_to_string(&s2.log).unwrap(), full_log);
        assert_eq!(std::fs::read(&s2.checkpoint).unwrap(), std::fs::read(&s.checkpoint).unwrap());
    }

    #[test]
    fn resume_rejects_changed_config() {
        let cfg = ExperimentConfig { total_steps: 1, ..tiny() };
        let maps = training_maps(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        train(&cfg, &maps, dir.path(), false, |_| {}).unwrap();
        let other = ExperimentConfig { eta: 0.02, ..cfg };
        assert!(matches!(train(&other, &maps, dir.path(), true, |_| {}), Err(TrainError::Resume { .. })));
    }

    #[test]
    fn wrong_team_size_rejected() {
        let cfg = tiny();
        let maps = training_maps(&ExperimentConfig { n_robots: 2, ..cfg.clone() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(train(&cfg, &maps, dir.path(), false, |_| {}), Err(TrainError::TeamSize { .. })));
        assert!(matches!(train(&cfg, &[], dir.path(), false, |_| {}), Err(TrainError::NoMaps)));
    }
}

//! Experiment configuration: defaults, a plain `key = value` file format and
//! command-line overrides.

use crate::cpo::{Algo, LineSearchConfig, UpdateConfig};
use crate::env::EnvConfig;
use crate::expert::{ScriptedExpert, ScriptedExpertConfig};
use crate::rl::LbfgsConfig;
use crate::world::ScenarioConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Every knob of an experiment, flat so that each is addressable as `key = value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub bc: bool,
    pub n_robots: usize,
    /// Training budget in pooled robot-steps.
    pub total_steps: usize,
    /// Pooled robot-steps that trigger an update.
    pub n_batch: usize,
    pub gamma: f64,
    pub gamma_c: f64,
    pub lambda_e: f64,
    pub lbfgs_step: f64,
    pub lbfgs_iters: usize,
    pub eta: f64,
    pub d: f64,
    pub damping: f64,
    pub cg_iters: usize,
    pub fvp_stride: usize,
    pub value_width: usize,
    /// Initial policy log-std per action dimension.
    pub init_logstd: f64,
    pub seed: u64,
    /// Maps used for training (generated from `map_seed` when `map_dir` is empty).
    pub train_maps: usize,
    pub eval_maps: usize,
    pub map_seed: u64,
    /// Seed of the held-out evaluation map stream.
    pub eval_map_seed: u64,
    pub map_dir: String,
    pub checkpoint_every: usize,
    // environment
    pub robot_radius: f64,
    pub comm_range: f64,
    pub goal_radius: f64,
    pub v_max: f64,
    pub dt: f64,
    pub t_max: usize,
    pub max_range: f64,
    pub map_side: f64,
    pub obstacles_min: usize,
    pub obstacles_max: usize,
    pub obstacle_size_min: f64,
    pub obstacle_size_max: f64,
    pub goal_min_distance: f64,
    // expert
    pub k_g: f64,
    pub k_o: f64,
    pub d_o: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        let scen = ScenarioConfig::default();
        let expert = ScriptedExpertConfig::default();
        Self {
            algo: Algo::Cpo,
            bc: true,
            n_robots: 3,
            total_steps: 300_000,
            n_batch: 2048,
            gamma: 0.99,
            gamma_c: 0.999,
            lambda_e: 0.1,
            lbfgs_step: 0.1,
            lbfgs_iters: 25,
            eta: 0.01,
            d: 0.1,
            damping: 0.1,
            cg_iters: 10,
            fvp_stride: 4,
            value_width: 64,
            init_logstd: -1.0,
            seed: 0,
            train_maps: 20,
            eval_maps: 50,
            map_seed: 1,
            eval_map_seed: 1_000_001,
            map_dir: String::new(),
            checkpoint_every: 10,
            robot_radius: env.robot_radius,
            comm_range: env.comm_range,
            goal_radius: 1.0,
            v_max: env.v_max,
            dt: env.dt,
            t_max: env.t_max,
            max_range: env.max_range,
            map_side: scen.map_side,
            obstacles_min: scen.obstacle_count.0,
            obstacles_max: scen.obstacle_count.1,
            obstacle_size_min: scen.obstacle_size.0,
            obstacle_size_max: scen.obstacle_size.1,
            goal_min_distance: scen.goal_min_distance,
            k_g: expert.k_g,
            k_o: expert.k_o,
            d_o: expert.d_o,
        }
    }
}

fn parse_value(key: &str, raw: &str, current: &Value) -> Result<Value, ConfigError> {
    let bad = || ConfigError::BadValue { key: key.to_owned(), value: raw.to_owned() };
    Ok(match current {
        Value::Bool(_) => Value::Bool(match raw {
            "true" | "on" | "1" | "yes" => true,
            "false" | "off" | "0" | "no" => false,
            _ => return Err(bad()),
        }),
        Value::Number(n) if n.is_u64() => Value::from(raw.parse::<u64>().map_err(|_| bad())?),
        Value::Number(_) => {
            let v: f64 = raw.parse().map_err(|_| bad())?;
            serde_json::Number::from_f64(v).map(Value::Number).ok_or_else(bad)?
        }
        _ => Value::String(raw.to_owned()),
    })
}

impl ExperimentConfig {
    /// Applies `key = value` overrides on top of `self`.
    pub fn with_overrides<'a>(&self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, ConfigError> {
        let mut obj = serde_json::to_value(self).expect("config serializes");
        let map = obj.as_object_mut().expect("config is an object");
        for (key, raw) in pairs {
            let key = key.trim().replace('-', "_");
            let raw = raw.trim();
            let current = map.get(&key).ok_or_else(|| ConfigError::UnknownKey(key.clone()))?;
            let v = parse_value(&key, raw, current)?;
            map.insert(key, v);
        }
        let cfg: Self = serde_json::from_value(obj).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a `key = value` file (`#` starts a comment) over the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            pairs.push((k, v));
        }
        Self::default().with_overrides(pairs)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::parse(&text)
    }

    /// Serializes back into the `key = value` format.
    pub fn to_text(&self) -> String {
        let obj = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        for (k, v) in obj.as_object().expect("object") {
            let s = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {s}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_owned()));
        if self.n_robots == 0 {
            return fail("n_robots must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..1.0).contains(&self.gamma_c) {
            return fail("discount factors must lie in [0, 1)");
        }
        if self.eta <= 0.0 || self.n_batch == 0 || self.fvp_stride == 0 || self.value_width == 0 {
            return fail("eta, n_batch, fvp_stride and value_width must be positive");
        }
        if self.obstacles_min > self.obstacles_max || self.obstacle_size_min > self.obstacle_size_max {
            return fail("obstacle ranges are empty");
        }
        if self.k_g <= 0.0 || self.k_o <= 0.0 || self.d_o <= 0.0 {
            return fail("expert gains must be positive");
        }
        Ok(())
    }

    pub fn env(&self) -> EnvConfig {
        EnvConfig {
            robot_radius: self.robot_radius,
            comm_range: self.comm_range,
            v_max: self.v_max,
            dt: self.dt,
            t_max: self.t_max,
            max_range: self.max_range,
            ..EnvConfig::default()
        }
    }

    /// Scenario generator settings for the given map seed.
    pub fn scenario(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            n_robots: self.n_robots,
            obstacle_count: (self.obstacles_min, self.obstacles_max),
            obstacle_size: (self.obstacle_size_min, self.obstacle_size_max),
            map_side: self.map_side,
            goal_radius: self.goal_radius,
            robot_radius: self.robot_radius,
            comm_range: self.comm_range,
            goal_min_distance: self.goal_min_distance,
            seed,
            ..ScenarioConfig::default()
        }
    }

    pub fn expert(&self) -> ScriptedExpert {
        ScriptedExpert::new(ScriptedExpertConfig { k_g: self.k_g, k_o: self.k_o, d_o: self.d_o }, self.v_max, self.max_range)
    }

    pub fn update(&self) -> UpdateConfig {
        UpdateConfig {
            algo: self.algo,
            bc: self.bc,
            gamma: self.gamma,
            gamma_c: self.gamma_c,
            lambda_e: self.lambda_e,
            eta: self.eta,
            d: self.d,
            damping: self.damping,
            cg_iters: self.cg_iters,
            line_search: LineSearchConfig::default(),
            lbfgs: LbfgsConfig { initial_step: self.lbfgs_step, max_iters: self.lbfgs_iters, ..LbfgsConfig::default() },
            fvp_stride: self.fvp_stride,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_training_table() {
        let c = ExperimentConfig::default();
        assert_eq!(c.n_batch, 2048);
        assert_eq!(c.gamma, 0.99);
        assert_eq!(c.gamma_c, 0.999);
        assert_eq!(c.lambda_e, 0.1);
        assert_eq!(c.lbfgs_step, 0.1);
        assert_eq!(c.eta, 0.01);
        assert_eq!(c.d, 0.1);
    }

    #[test]
    fn file_and_overrides() {
        let c = ExperimentConfig::parse("# comment\nalgo = trpo\nbc = off\nn_robots=4\n\ncomm_range = 1.5 # trailing\n").unwrap();
        assert_eq!(c.algo, Algo::Trpo);
        assert!(!c.bc);
        assert_eq!(c.n_robots, 4);
        assert_eq!(c.comm_range, 1.5);
        let c2 = c.with_overrides([("total-steps", "1000"), ("eta", "0.02")]).unwrap();
        assert_eq!(c2.total_steps, 1000);
        assert_eq!(c2.eta, 0.02);
    }

    #[test]
    fn text_roundtrip() {
        let c = ExperimentConfig { d: 0.25, algo: Algo::Trpo, map_dir: "maps/train".into(), ..Default::default() };
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn errors() {
        assert!(matches!(ExperimentConfig::parse("nope = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(ExperimentConfig::parse("gamma"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(ExperimentConfig::parse("n_robots = x"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ExperimentConfig::parse("algo = ppo"), Err(ConfigError::Invalid(_))));
        assert!(matches!(ExperimentConfig::parse("n_robots = 0"), Err(ConfigError::Invalid(_))));
        let err = ExperimentConfig::load(Path::new("/missing/exp.cfg")).unwrap_err();
        assert!(err.to_string().contains("/missing/exp.cfg"));
    }
}

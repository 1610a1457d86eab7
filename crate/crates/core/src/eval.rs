//! Deterministic evaluation: success, connectivity and travel-time metrics
//! over a set of maps.

use crate::env::{DoneReason, EnvConfig, EnvError, MultiRobotEnv, TrajectoryRow};
use crate::expert::ExpertPolicy;
use crate::net::{NetError, PolicyNet};
use crate::world::{Vec2, WorldMap};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("map {index} has {got} robots, the controller expects {expected}")]
    TeamSize { index: usize, expected: usize, got: usize },
}

/// Maps a team observation (`n × obs_dim`) to one command per robot.
pub trait Controller {
    fn actions(&mut self, observations: &[f64], n_robots: usize) -> Result<Vec<Vec2>, EvalError>;

    /// Team size the controller was built for, if it is fixed.
    fn team_size(&self) -> Option<usize> {
        None
    }
}

/// The policy's mean action, no sampling.
pub struct MeanPolicy<'a> {
    pub net: &'a PolicyNet,
    pub theta: &'a [f64],
}

impl Controller for MeanPolicy<'_> {
    fn actions(&mut self, observations: &[f64], n_robots: usize) -> Result<Vec<Vec2>, EvalError> {
        let m = self.net.means(self.theta, observations, n_robots)?;
        Ok(m.chunks_exact(2).map(|a| Vec2::new(a[0], a[1])).collect())
    }

    fn team_size(&self) -> Option<usize> {
        let extra = self.net.arch().extra_dim;
        Some(1 + (extra - 4) / 2)
    }
}

/// Every robot runs the scripted expert on its own observation.
pub struct ExpertController<'a>(pub &'a dyn ExpertPolicy);

impl Controller for ExpertController<'_> {
    fn actions(&mut self, observations: &[f64], n_robots: usize) -> Result<Vec<Vec2>, EvalError> {
        let a = self.0.act_batch(observations, observations.len() / n_robots);
        Ok(a.chunks_exact(2).map(|a| Vec2::new(a[0], a[1])).collect())
    }
}

/// Commands zero velocity forever.
pub struct Stationary;

impl Controller for Stationary {
    fn actions(&mut self, _: &[f64], n_robots: usize) -> Result<Vec<Vec2>, EvalError> {
        Ok(vec![Vec2::ZERO; n_robots])
    }
}

/// Result of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub map: usize,
    pub episode: usize,
    pub outcome: DoneReason,
    pub steps: usize,
    /// `λ₂ > ε` held at every step (no disconnection cost was incurred).
    pub connected: bool,
    pub min_lambda2: f64,
    pub disconnected_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub successes: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub success_rate: f64,
    pub connectivity_rate: f64,
    /// Seconds, averaged over successful episodes; `None` without successes.
    pub travel_time_mean: Option<f64>,
    pub per_map: Vec<EpisodeOutcome>,
}

impl EvalReport {
    pub fn from_outcomes(per_map: Vec<EpisodeOutcome>, dt: f64) -> Self {
        let episodes = per_map.len();
        let count = |r: DoneReason| per_map.iter().filter(|o| o.outcome == r).count();
        let (successes, collisions, timeouts) =
            (count(DoneReason::Success), count(DoneReason::Collision), count(DoneReason::Timeout));
        let connected = per_map.iter().filter(|o| o.connected).count();
        let rate = |k: usize| if episodes == 0 { 0.0 } else { k as f64 / episodes as f64 };
        let travel: Vec<f64> =
            per_map.iter().filter(|o| o.outcome == DoneReason::Success).map(|o| o.steps as f64 * dt).collect();
        let travel_time_mean = (!travel.is_empty()).then(|| travel.iter().sum::<f64>() / travel.len() as f64);
        Self {
            episodes,
            successes,
            collisions,
            timeouts,
            success_rate: rate(successes),
            connectivity_rate: rate(connected),
            travel_time_mean,
            per_map,
        }
    }
}

/// Runs one episode on `map` until it ends, optionally recording every step.
pub fn rollout(
    env: &mut MultiRobotEnv,
    map: &WorldMap,
    controller: &mut dyn Controller,
    mut record: Option<&mut Vec<TrajectoryRow>>,
) -> Result<(DoneReason, usize, f64, usize), EvalError> {
    env.reset(map);
    let n = env.n_robots();
    let mut min_lambda2 = f64::INFINITY;
    let mut disconnected = 0;
    loop {
        let obs = env.observe_all();
        let actions = controller.actions(&obs, n)?;
        let result = env.step(&actions)?;
        if let Some(rows) = record.as_deref_mut() {
            rows.extend(TrajectoryRow::from_step(env, &actions, &result));
        }
        min_lambda2 = min_lambda2.min(result.lambda2);
        if result.cost > 0.0 {
            disconnected += 1;
        }
        if let Some(reason) = result.done {
            return Ok((reason, env.time(), min_lambda2, disconnected));
        }
    }
}

/// Evaluates `controller` for `episodes_per_map` episodes on each map, in order.
pub fn evaluate(
    env_cfg: EnvConfig,
    maps: &[WorldMap],
    episodes_per_map: usize,
    controller: &mut dyn Controller,
) -> Result<EvalReport, EvalError> {
    let mut per_map = Vec::with_capacity(maps.len() * episodes_per_map);
    let Some(first) = maps.first() else {
        return Ok(EvalReport::from_outcomes(per_map, env_cfg.dt));
    };
    let mut env = MultiRobotEnv::new(env_cfg, first.clone());
    for (index, map) in maps.iter().enumerate() {
        if let Some(expected) = controller.team_size() {
            if map.n_robots() != expected {
                return Err(EvalError::TeamSize { index, expected, got: map.n_robots() });
            }
        }
        for episode in 0..episodes_per_map {
            let (outcome, steps, min_lambda2, disconnected_steps) = rollout(&mut env, map, controller, None)?;
            per_map.push(EpisodeOutcome {
                map: index,
                episode,
                outcome,
                steps,
                connected: disconnected_steps == 0,
                min_lambda2,
                disconnected_steps,
            });
        }
    }
    Ok(EvalReport::from_outcomes(per_map, env_cfg.dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::{ScriptedExpert, ScriptedExpertConfig};
    use crate::world::Rect;

    fn open_map(spawns: Vec<Vec2>, goal: Vec2) -> WorldMap {
        WorldMap {
            bounds: Rect::new(Vec2::ZERO, Vec2::new(10.0, 10.0)),
            obstacles: Vec::new(),
            goal,
            goal_radius: 0.5,
            spawns,
        }
    }

    #[test]
    fn stationary_team_stays_connected_and_times_out() {
        let cfg = EnvConfig { t_max: 50, ..EnvConfig::default() };
        let map = open_map(vec![Vec2::new(1.0, 1.0), Vec2::new(2.0, 1.0), Vec2::new(1.5, 2.0)], Vec2::new(8.0, 8.0));
        let r = evaluate(cfg, &[map.clone(), map], 2, &mut Stationary).unwrap();
        assert_eq!(r.episodes, 4);
        assert_eq!(r.success_rate, 0.0);
        assert_eq!(r.connectivity_rate, 1.0);
        assert_eq!(r.timeouts, 4);
        assert_eq!(r.travel_time_mean, None);
        assert!(r.per_map.iter().all(|o| o.steps == 50));
    }

    #[test]
    fn expert_single_robot_travel_time_near_kinematic_bound() {
        let cfg = EnvConfig::default();
        let map = open_map(vec![Vec2::new(1.0, 5.0)], Vec2::new(7.0, 5.0));
        let expert = ScriptedExpert::new(ScriptedExpertConfig::default(), cfg.v_max, cfg.max_range);
        let r = evaluate(cfg, &[map], 1, &mut ExpertController(&expert)).unwrap();
        assert_eq!(r.successes, 1);
        // 5.5 m to the zone edge at 0.7 m/s is about 7.9 s; slowing near the goal adds a little
        let t = r.travel_time_mean.unwrap();
        assert!((7.8..=9.0).contains(&t), "{t}");
    }

    #[test]
    fn outcome_counts_sum_to_total() {
        let cfg = EnvConfig { t_max: 120, ..EnvConfig::default() };
        let expert = ScriptedExpert::new(ScriptedExpertConfig::default(), cfg.v_max, cfg.max_range);
        let maps = vec![
            open_map(vec![Vec2::new(1.0, 5.0)], Vec2::new(5.0, 5.0)),
            open_map(vec![Vec2::new(1.0, 1.0)], Vec2::new(9.0, 9.0)),
        ];
        let r = evaluate(cfg, &maps, 1, &mut ExpertController(&expert)).unwrap();
        assert_eq!(r.successes + r.collisions + r.timeouts, r.episodes);
        assert_eq!((r.successes, r.timeouts), (1, 1));
        assert!((0.0..=1.0).contains(&r.success_rate) && (0.0..=1.0).contains(&r.connectivity_rate));
    }

    #[test]
    fn disconnected_team_is_not_counted_connected() {
        let cfg = EnvConfig { t_max: 5, ..EnvConfig::default() };
        let map = open_map(vec![Vec2::new(1.0, 1.0), Vec2::new(6.0, 6.0)], Vec2::new(8.0, 1.0));
        let r = evaluate(cfg, &[map], 1, &mut Stationary).unwrap();
        assert_eq!(r.connectivity_rate, 0.0);
        assert_eq!(r.per_map[0].disconnected_steps, 5);
    }

    #[test]
    fn empty_map_list() {
        let r = evaluate(EnvConfig::default(), &[], 3, &mut Stationary).unwrap();
        assert_eq!(r.episodes, 0);
        assert_eq!(r.success_rate, 0.0);
    }
}

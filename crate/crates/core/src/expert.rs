//! Navigation expert over the single-robot observation `[o_l, o_v, o_g]`,
//! used as the behavior-cloning target.

use crate::env::{clamp_action, layout::NAV_DIM};
use crate::world::{beam_direction, Vec2, LIDAR_BEAMS};
use serde::{Deserialize, Serialize};

/// A deterministic single-robot navigator. Inputs are the first
/// [`NAV_DIM`] entries of an observation; teammate entries are never read.
pub trait ExpertPolicy: Send + Sync {
    fn act(&self, nav_obs: &[f64]) -> Vec2;

    /// Actions for `batch` full observations of length `obs_dim`, flattened `batch × 2`.
    fn act_batch(&self, observations: &[f64], obs_dim: usize) -> Vec<f64> {
        observations
            .chunks_exact(obs_dim)
            .flat_map(|o| {
                let a = self.act(&o[..NAV_DIM]);
                [a.x, a.y]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedExpertConfig {
    /// Attraction gain toward the goal, 1/s.
    pub k_g: f64,
    /// Repulsion gain.
    pub k_o: f64,
    /// Influence range of obstacles, meters from the robot center.
    pub d_o: f64,
}

impl Default for ScriptedExpertConfig {
    fn default() -> Self {
        Self { k_g: 2.0, k_o: 0.3, d_o: 1.0 }
    }
}

/// Potential-field expert: goal attraction plus repulsion from short scan returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedExpert {
    pub cfg: ScriptedExpertConfig,
    pub v_max: f64,
    /// Sensor cap used to turn normalized ranges back into meters.
    pub max_range: f64,
}

impl ScriptedExpert {
    pub fn new(cfg: ScriptedExpertConfig, v_max: f64, max_range: f64) -> Self {
        Self { cfg, v_max, max_range }
    }
}

impl ExpertPolicy for ScriptedExpert {
    fn act(&self, nav_obs: &[f64]) -> Vec2 {
        assert!(nav_obs.len() >= NAV_DIM, "expert needs [o_l, o_v, o_g]");
        let goal = Vec2::new(nav_obs[NAV_DIM - 2], nav_obs[NAV_DIM - 1]);
        // k_g·o_g, saturated so the attraction alone never exceeds v_max
        let pull = goal * self.cfg.k_g;
        let mut v = clamp_action(pull, 1.0) * self.v_max;
        for k in 0..LIDAR_BEAMS {
            let range = (nav_obs[k] * self.max_range).max(1e-3);
            if range < self.cfg.d_o {
                v = v - beam_direction(k) * (self.cfg.k_o * (1.0 / range - 1.0 / self.cfg.d_o));
            }
        }
        clamp_action(v, self.v_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, MultiRobotEnv};
    use crate::world::{generate_scenarios, Rect, ScenarioConfig, WorldMap};
    use proptest::prelude::*;

    fn expert() -> ScriptedExpert {
        ScriptedExpert::new(ScriptedExpertConfig::default(), 0.7, 6.0)
    }

    fn nav(lidar: f64, goal: Vec2) -> Vec<f64> {
        let mut o = vec![lidar; LIDAR_BEAMS];
        o.extend([0.0, 0.0, goal.x, goal.y]);
        o
    }

    #[test]
    fn far_goal_saturates() {
        let a = expert().act(&nav(1.0, Vec2::new(5.0, 0.0)));
        assert!((a.x - 0.7).abs() < 1e-12 && a.y.abs() < 1e-12);
    }

    #[test]
    fn near_goal_vanishes() {
        let a = expert().act(&nav(1.0, Vec2::new(0.03, -0.03)));
        assert!(a.norm() < 0.1 * 0.7);
    }

    #[test]
    fn close_return_ahead_pushes_back() {
        let e = expert();
        let beam = beam_direction(0); // points at the goal
        let mut o = nav(1.0, Vec2::new(3.0, 0.0));
        // 0.25 m: repulsion 0.3·(4 − 1) = 0.9 beats the 0.7 pull
        o[0] = 0.25 / 6.0;
        let a = e.act(&o);
        assert!(a.dot(beam) < 0.0, "{a:?}");
        // 0.4 m: repulsion 0.45 only slows the approach
        o[0] = 0.4 / 6.0;
        let a = e.act(&o);
        assert!((a.dot(beam) - 0.25).abs() < 1e-12, "{a:?}");
    }

    #[test]
    fn ignores_teammates() {
        let e = expert();
        let mut full = nav(0.5, Vec2::new(1.0, 2.0));
        let base = e.act_batch(&full, NAV_DIM);
        full.extend([0.3, -0.2]);
        assert_eq!(e.act_batch(&full, NAV_DIM + 2), base);
    }

    proptest! {
        #[test]
        fn bounded_and_parallel_when_clear(
            scan in proptest::collection::vec(0.0f64..1.0, LIDAR_BEAMS),
            gx in -6.0f64..6.0, gy in -6.0f64..6.0,
        ) {
            let e = expert();
            let mut o = scan;
            o.extend([0.0, 0.0, gx, gy]);
            prop_assert!(e.act(&o).norm() <= 0.7 + 1e-12);
            let clear = e.act(&nav(1.0, Vec2::new(gx, gy)));
            prop_assert!(clear.cross(Vec2::new(gx, gy)).abs() < 1e-9);
            prop_assert!(clear.dot(Vec2::new(gx, gy)) >= 0.0);
        }
    }

    /// Runs the expert alone on one robot and reports whether it reached the goal.
    fn solo_success(map: &WorldMap, cfg: EnvConfig, e: &ScriptedExpert) -> bool {
        let mut solo = map.clone();
        solo.spawns.truncate(1);
        let mut env = MultiRobotEnv::new(cfg, solo);
        loop {
            let obs = env.observe_all();
            let r = env.step(&[e.act(&obs[..NAV_DIM])]).unwrap();
            if let Some(reason) = r.done {
                return reason == crate::env::DoneReason::Success;
            }
        }
    }

    #[test]
    fn empty_map_travel_time() {
        let map = WorldMap {
            bounds: Rect::square(8.0),
            obstacles: vec![],
            goal: Vec2::new(6.0, 2.0),
            goal_radius: 0.5,
            spawns: vec![Vec2::new(2.0, 2.0)],
        };
        let cfg = EnvConfig::default();
        let e = expert();
        let mut env = MultiRobotEnv::new(cfg, map);
        let mut steps = 0;
        loop {
            let obs = env.observe_all();
            let r = env.step(&[e.act(&obs[..NAV_DIM])]).unwrap();
            steps += 1;
            if r.done.is_some() {
                assert_eq!(r.done, Some(crate::env::DoneReason::Success));
                break;
            }
        }
        // (4 − 0.32) m at 0.7 m/s is about 53 steps
        assert!((50..=60).contains(&steps), "{steps}");
    }

    #[test]
    fn solo_success_on_generated_maps() {
        let cfg = ScenarioConfig { obstacle_count: (0, 4), seed: 99, ..ScenarioConfig::default() };
        let maps = generate_scenarios(&cfg, 100).unwrap();
        let e = expert();
        let wins = maps.iter().filter(|m| solo_success(m, EnvConfig::default(), &e)).count();
        assert!(wins >= 80, "expert solved {wins}/100 maps");
    }
}

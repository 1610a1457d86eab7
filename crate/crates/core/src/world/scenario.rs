use super::geometry::{Rect, Vec2};
use super::{MapRules, Obstacle, WorldError, WorldMap};
use crate::connectivity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Draws allowed per placed element before generation gives up.
pub const MAX_DRAWS: usize = 10_000;

/// Parameters of the scenario randomization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_robots: usize,
    /// Inclusive range of obstacle counts.
    pub obstacle_count: (usize, usize),
    /// Inclusive range of obstacle extents (circle diameter, rectangle side), meters.
    pub obstacle_size: (f64, f64),
    pub map_side: f64,
    pub goal_radius: f64,
    /// Extra free space required around spawns, meters.
    pub clearance: f64,
    pub robot_radius: f64,
    pub comm_range: f64,
    /// Minimum distance between the goal and every spawn.
    pub goal_min_distance: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_robots: 3,
            obstacle_count: (2, 6),
            obstacle_size: (0.4, 1.2),
            map_side: 8.0,
            goal_radius: 0.5,
            clearance: 0.1,
            robot_radius: 0.18,
            comm_range: 2.0,
            goal_min_distance: 3.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn rules(&self) -> MapRules {
        MapRules { robot_radius: self.robot_radius, clearance: self.clearance, comm_range: self.comm_range }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let fail = |m: &str| Err(WorldError::InvalidConfig(m.to_owned()));
        if self.n_robots < 2 {
            return fail("n_robots must be at least 2");
        }
        if self.obstacle_count.0 > self.obstacle_count.1 {
            return fail("obstacle count range is empty");
        }
        let (lo, hi) = self.obstacle_size;
        if !(lo > 0.0 && lo <= hi) {
            return fail("obstacle size range must be positive and nonempty");
        }
        if !(self.map_side > 0.0 && hi < self.map_side) {
            return fail("map side must be positive and larger than the obstacle size");
        }
        if !(self.goal_radius > 0.0 && 2.0 * self.goal_radius < self.map_side) {
            return fail("goal radius must be positive and fit in the map");
        }
        if !(self.robot_radius > 0.0 && self.comm_range > 0.0 && self.clearance >= 0.0) {
            return fail("robot radius, communication range and clearance must be positive");
        }
        if !(self.goal_min_distance >= 0.0) {
            return fail("goal_min_distance must be nonnegative");
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn sample_obstacle(cfg: &ScenarioConfig, bounds: &Rect, rng: &mut impl Rng) -> Obstacle {
    let (lo, hi) = cfg.obstacle_size;
    if rng.random_bool(0.5) {
        let radius = 0.5 * uniform(rng, lo, hi);
        let center = Vec2::new(
            uniform(rng, bounds.min.x + radius, bounds.max.x - radius),
            uniform(rng, bounds.min.y + radius, bounds.max.y - radius),
        );
        Obstacle::circle(center, radius)
    } else {
        let w = uniform(rng, lo, hi);
        let h = uniform(rng, lo, hi);
        let min = Vec2::new(
            uniform(rng, bounds.min.x, bounds.max.x - w),
            uniform(rng, bounds.min.y, bounds.max.y - h),
        );
        Obstacle::rect(min, min + Vec2::new(w, h))
    }
}

/// Rejection-samples one scenario: obstacles first, then a connected set of
/// spawns, then the goal. Deterministic for a given RNG state.
pub fn generate_scenario(cfg: &ScenarioConfig, rng: &mut impl Rng) -> Result<WorldMap, WorldError> {
    cfg.validate()?;
    let bounds = Rect::square(cfg.map_side);
    let rules = cfg.rules();
    let n_obstacles = rng.random_range(cfg.obstacle_count.0..=cfg.obstacle_count.1);
    let obstacles: Vec<Obstacle> = (0..n_obstacles).map(|_| sample_obstacle(cfg, &bounds, rng)).collect();

    let mut map = WorldMap { bounds, obstacles, goal: bounds.center(), goal_radius: cfg.goal_radius, spawns: Vec::new() };
    let inner = bounds.inset(cfg.robot_radius);
    let free = |map: &WorldMap, p: Vec2| {
        inner.contains(p) && map.obstacle_distance(p) >= cfg.robot_radius + cfg.clearance
    };
    let min_sep = 2.0 * cfg.robot_radius + cfg.clearance;

    for i in 0..cfg.n_robots {
        let mut placed = false;
        for _ in 0..MAX_DRAWS {
            let p = if i == 0 {
                Vec2::new(uniform(rng, inner.min.x, inner.max.x), uniform(rng, inner.min.y, inner.max.y))
            } else {
                // Anchor on a random earlier spawn so the team starts connected.
                let anchor = map.spawns[rng.random_range(0..i)];
                let r = cfg.comm_range * rng.random::<f64>().sqrt();
                let theta = uniform(rng, 0.0, std::f64::consts::TAU);
                anchor + Vec2::from_angle(theta) * r
            };
            if free(&map, p) && map.spawns.iter().all(|&s| s.distance(p) >= min_sep) {
                map.spawns.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(WorldError::GenerationFailed { what: format!("spawn {i}"), attempts: MAX_DRAWS });
        }
    }
    if connectivity::connectivity_cost(&map.spawns, cfg.comm_range) != 0.0 {
        return Err(WorldError::GenerationFailed { what: "connected spawn set".into(), attempts: 1 });
    }

    let goal_area = bounds.inset(cfg.goal_radius);
    let mut placed = false;
    for _ in 0..MAX_DRAWS {
        let g = Vec2::new(uniform(rng, goal_area.min.x, goal_area.max.x), uniform(rng, goal_area.min.y, goal_area.max.y));
        if map.obstacle_distance(g) >= cfg.goal_radius
            && map.spawns.iter().all(|&s| s.distance(g) >= cfg.goal_min_distance)
        {
            map.goal = g;
            placed = true;
            break;
        }
    }
    if !placed {
        return Err(WorldError::GenerationFailed { what: "goal".into(), attempts: MAX_DRAWS });
    }
    map.validate(&rules)?;
    Ok(map)
}

/// Per-map seed derived from a base seed; distinct indices give independent streams.
pub(crate) fn map_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over the pair.
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates `count` maps; map `k` depends only on `(cfg.seed, k)`.
pub fn generate_scenarios(cfg: &ScenarioConfig, count: usize) -> Result<Vec<WorldMap>, WorldError> {
    (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(map_seed(cfg.seed, k as u64));
            generate_scenario(cfg, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::{adjacency, is_connected_bfs};

    #[test]
    fn same_seed_same_map() {
        let cfg = ScenarioConfig { seed: 11, ..Default::default() };
        let a = generate_scenarios(&cfg, 3).unwrap();
        let b = generate_scenarios(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn zero_obstacles() {
        let cfg = ScenarioConfig { obstacle_count: (0, 0), ..Default::default() };
        let maps = generate_scenarios(&cfg, 5).unwrap();
        assert!(maps.iter().all(|m| m.obstacles.is_empty()));
    }

    #[test]
    fn thousand_maps_satisfy_invariants() {
        let cfg = ScenarioConfig { seed: 3, ..Default::default() };
        let rules = cfg.rules();
        for map in generate_scenarios(&cfg, 1000).unwrap() {
            assert_eq!(map.spawns.len(), 3);
            for i in 0..3 {
                for j in i + 1..3 {
                    assert!(map.spawns[i].distance(map.spawns[j]) >= 2.0 * rules.robot_radius + rules.clearance);
                }
                assert!(map.obstacle_distance(map.spawns[i]) >= rules.robot_radius + rules.clearance);
            }
            assert!(map.obstacle_distance(map.goal) >= map.goal_radius);
            // independent oracle: graph traversal
            assert!(is_connected_bfs(&adjacency(&map.spawns, rules.comm_range)));
        }
    }

    #[test]
    fn overconstrained_config_fails() {
        let cfg = ScenarioConfig { goal_min_distance: 100.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(generate_scenario(&cfg, &mut rng), Err(WorldError::GenerationFailed { .. })));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ScenarioConfig { obstacle_count: (3, 1), ..Default::default() };
        assert!(matches!(cfg.validate(), Err(WorldError::InvalidConfig(_))));
        let cfg = ScenarioConfig { obstacle_size: (0.0, 1.0), ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn map_seeds_differ() {
        assert_ne!(map_seed(7, 0), map_seed(7, 1));
        assert_ne!(map_seed(7, 0), map_seed(8, 0));
    }
}

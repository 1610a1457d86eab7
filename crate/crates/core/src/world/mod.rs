//! Planar world model: geometry primitives, obstacle maps, a 90-beam LiDAR
//! model, and domain-randomized scenario generation.
//!
//! Maps are immutable once built and can be shared freely between rollout
//! workers. They serialize to a small JSON document (see [`WorldMap`]).

mod geometry;
mod lidar;
mod scenario;

pub use geometry::{ray_circle, ray_exit_rect, ray_rect, Circle, Rect, Vec2};
pub use lidar::{beam_direction, lidar_scan, Lidar, LidarScan, LIDAR_BEAMS};
pub use scenario::{generate_scenario, generate_scenarios, ScenarioConfig};

use crate::connectivity;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Default LiDAR cap in meters.
pub const DEFAULT_MAX_RANGE: f64 = 6.0;

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("scenario generation failed: could not place {what} after {attempts} draws")]
    GenerationFailed { what: String, attempts: usize },
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Static obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Obstacle {
    Circle { center: Vec2, radius: f64 },
    Rect { min: Vec2, max: Vec2 },
}

impl Obstacle {
    pub fn circle(center: Vec2, radius: f64) -> Self {
        Obstacle::Circle { center, radius }
    }

    pub fn rect(min: Vec2, max: Vec2) -> Self {
        Obstacle::Rect { min, max }
    }

    /// Distance from `p` to the obstacle surface, zero inside.
    pub fn distance(&self, p: Vec2) -> f64 {
        match *self {
            Obstacle::Circle { center, radius } => Circle::new(center, radius).distance(p),
            Obstacle::Rect { min, max } => Rect::new(min, max).distance(p),
        }
    }

    pub fn raycast(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match *self {
            Obstacle::Circle { center, radius } => ray_circle(origin, dir, &Circle::new(center, radius)),
            Obstacle::Rect { min, max } => ray_rect(origin, dir, &Rect::new(min, max)),
        }
    }

    pub fn bounding_rect(&self) -> Rect {
        match *self {
            Obstacle::Circle { center, radius } => Circle::new(center, radius).bounding_rect(),
            Obstacle::Rect { min, max } => Rect::new(min, max),
        }
    }

    fn has_positive_extent(&self) -> bool {
        match *self {
            Obstacle::Circle { center, radius } => center.is_finite() && radius.is_finite() && radius > 0.0,
            Obstacle::Rect { min, max } => Rect::new(min, max).is_valid(),
        }
    }
}

/// Physical parameters a map is validated against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapRules {
    pub robot_radius: f64,
    pub clearance: f64,
    pub comm_range: f64,
}

/// One randomized scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMap {
    pub bounds: Rect,
    pub obstacles: Vec<Obstacle>,
    pub goal: Vec2,
    pub goal_radius: f64,
    pub spawns: Vec<Vec2>,
}

impl WorldMap {
    pub fn n_robots(&self) -> usize {
        self.spawns.len()
    }

    /// Distance from `p` to the nearest obstacle surface (infinite when there are none).
    pub fn obstacle_distance(&self, p: Vec2) -> f64 {
        self.obstacles.iter().map(|o| o.distance(p)).fold(f64::INFINITY, f64::min)
    }

    /// Checks every structural invariant of a generated map.
    pub fn validate(&self, rules: &MapRules) -> Result<(), WorldError> {
        let bad = |msg: String| Err(WorldError::InvalidMap(msg));
        if !self.bounds.is_valid() {
            return bad("bounds must satisfy min < max".into());
        }
        for (k, o) in self.obstacles.iter().enumerate() {
            if !o.has_positive_extent() {
                return bad(format!("obstacle {k} has non-positive extent"));
            }
            if !self.bounds.contains_rect(&o.bounding_rect()) {
                return bad(format!("obstacle {k} leaves the map bounds"));
            }
        }
        if !(self.goal_radius > 0.0) {
            return bad("goal radius must be positive".into());
        }
        let goal_zone = Circle::new(self.goal, self.goal_radius);
        if !self.bounds.contains_rect(&goal_zone.bounding_rect()) {
            return bad("goal zone leaves the map bounds".into());
        }
        if self.obstacle_distance(self.goal) < self.goal_radius {
            return bad("goal zone intersects an obstacle".into());
        }
        if self.spawns.len() < 2 {
            return bad("at least two spawns are required".into());
        }
        let inner = self.bounds.inset(rules.robot_radius);
        for (i, &s) in self.spawns.iter().enumerate() {
            if !inner.contains(s) {
                return bad(format!("spawn {i} is outside the reachable area"));
            }
            if self.obstacle_distance(s) < rules.robot_radius + rules.clearance {
                return bad(format!("spawn {i} overlaps an obstacle"));
            }
            for (j, &t) in self.spawns.iter().enumerate().skip(i + 1) {
                if s.distance(t) < 2.0 * rules.robot_radius + rules.clearance {
                    return bad(format!("spawns {i} and {j} are too close"));
                }
            }
        }
        if connectivity::connectivity_cost(&self.spawns, rules.comm_range) != 0.0 {
            return bad("initial communication graph is disconnected".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serialization is infallible")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WorldError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| WorldError::Io { path: path.to_owned(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| WorldError::Io { path: path.to_owned(), source })?;
        serde_json::from_str(&text).map_err(|source| WorldError::Json { path: path.to_owned(), source })
    }
}

/// Loads every `*.json` map in `dir`, sorted by file name.
pub fn load_map_dir(dir: impl AsRef<Path>) -> Result<Vec<WorldMap>, WorldError> {
    let dir = dir.as_ref();
    let io_err = |source| WorldError::Io { path: dir.to_owned(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(WorldMap::load).collect()
}

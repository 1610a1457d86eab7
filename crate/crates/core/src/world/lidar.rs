use super::geometry::{ray_circle, ray_exit_rect, Circle, Vec2};
use super::WorldMap;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Number of beams in one 360° scan.
pub const LIDAR_BEAMS: usize = 90;

fn beam_table() -> &'static [Vec2; LIDAR_BEAMS] {
    static TABLE: OnceLock<[Vec2; LIDAR_BEAMS]> = OnceLock::new();
    TABLE.get_or_init(|| {
        std::array::from_fn(|k| Vec2::from_angle(std::f64::consts::TAU * k as f64 / LIDAR_BEAMS as f64))
    })
}

/// World-frame unit direction of beam `k`; beam 0 points along +x and beams advance counter-clockwise.
pub fn beam_direction(k: usize) -> Vec2 {
    beam_table()[k % LIDAR_BEAMS]
}

/// Range readings of one scan, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

/// Sensor model: a 360° scanner mounted at the robot center that sees
/// obstacles, the map walls, and teammates (as discs of the robot radius).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lidar {
    pub max_range: f64,
    pub robot_radius: f64,
}

impl Lidar {
    pub fn new(max_range: f64, robot_radius: f64) -> Self {
        Self { max_range, robot_radius }
    }

    /// Writes the raw ranges (meters) seen by robot `i` into `out[..LIDAR_BEAMS]`.
    pub fn scan_into(&self, map: &WorldMap, positions: &[Vec2], i: usize, out: &mut [f64]) {
        let origin = positions[i];
        let dirs = beam_table();
        let others: Vec<Circle> = positions
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &p)| Circle::new(p, self.robot_radius))
            .collect();
        for (k, slot) in out.iter_mut().take(LIDAR_BEAMS).enumerate() {
            let dir = dirs[k];
            let mut range = ray_exit_rect(origin, dir, &map.bounds).min(self.max_range);
            for obstacle in &map.obstacles {
                if let Some(t) = obstacle.raycast(origin, dir) {
                    range = range.min(t);
                }
            }
            for other in &others {
                if let Some(t) = ray_circle(origin, dir, other) {
                    range = range.min(t);
                }
            }
            *slot = range;
        }
    }

    pub fn scan(&self, map: &WorldMap, positions: &[Vec2], i: usize) -> LidarScan {
        let mut ranges = vec![0.0; LIDAR_BEAMS];
        self.scan_into(map, positions, i, &mut ranges);
        LidarScan { ranges, max_range: self.max_range }
    }
}

/// Scan of robot `i` with the given sensor.
pub fn lidar_scan(map: &WorldMap, positions: &[Vec2], i: usize, lidar: &Lidar) -> LidarScan {
    lidar.scan(map, positions, i)
}

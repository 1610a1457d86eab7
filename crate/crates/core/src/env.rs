//! Multi-robot navigation environment.
//!
//! Holonomic disc robots share one map, each observing a normalized LiDAR
//! scan, its own velocity, the goal and its teammates in a robot-centred
//! frame. Every step yields one reward per robot and a single team-wide
//! connectivity cost.

use crate::connectivity::{algebraic_connectivity, cost_from_lambda2};
use crate::world::{Lidar, Vec2, WorldMap, DEFAULT_MAX_RANGE, LIDAR_BEAMS};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("step called after the episode finished")]
    StepAfterDone,
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("non-finite action for robot {0}")]
    NonFiniteAction(usize),
    #[error("{path}: {source}")]
    Csv {
        path: std::path::PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Physical and reward constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub robot_radius: f64,
    pub comm_range: f64,
    pub v_max: f64,
    pub dt: f64,
    pub t_max: usize,
    pub max_range: f64,
    pub r_coll: f64,
    pub r_goal: f64,
    pub w_g: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            robot_radius: 0.18,
            comm_range: 2.0,
            v_max: 0.7,
            dt: 0.1,
            t_max: 500,
            max_range: DEFAULT_MAX_RANGE,
            r_coll: -100.0,
            r_goal: 100.0,
            w_g: 10.0,
        }
    }
}

impl EnvConfig {
    pub fn lidar(&self) -> Lidar {
        Lidar::new(self.max_range, self.robot_radius)
    }
}

/// Length of one robot's observation vector for a team of `n_robots`.
pub const fn obs_dim(n_robots: usize) -> usize {
    LIDAR_BEAMS + 2 + 2 + 2 * (n_robots - 1)
}

/// Offsets into the flat observation layout `[o_l, o_v, o_g, o_p]`.
pub mod layout {
    use crate::world::LIDAR_BEAMS;
    pub const LIDAR: usize = 0;
    pub const VELOCITY: usize = LIDAR_BEAMS;
    pub const GOAL: usize = LIDAR_BEAMS + 2;
    pub const TEAMMATES: usize = LIDAR_BEAMS + 4;
    /// Length of the single-robot observation `[o_l, o_v, o_g]` used by the expert.
    pub const NAV_DIM: usize = LIDAR_BEAMS + 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec2,
    pub velocity: Vec2,
}

/// Per-robot observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Scan ranges divided by the sensor cap, in `[0, 1]`.
    pub lidar: Vec<f64>,
    pub velocity: Vec2,
    /// Goal relative to the robot.
    pub goal: Vec2,
    /// Teammates relative to the robot, ascending index, self skipped.
    pub teammates: Vec<Vec2>,
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(LIDAR_BEAMS + 4 + 2 * self.teammates.len());
        v.extend_from_slice(&self.lidar);
        v.extend([self.velocity.x, self.velocity.y, self.goal.x, self.goal.y]);
        for p in &self.teammates {
            v.extend([p.x, p.y]);
        }
        v
    }

    pub fn from_slice(obs: &[f64]) -> Self {
        let teammates = obs[layout::TEAMMATES..].chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect();
        Self {
            lidar: obs[..LIDAR_BEAMS].to_vec(),
            velocity: Vec2::new(obs[layout::VELOCITY], obs[layout::VELOCITY + 1]),
            goal: Vec2::new(obs[layout::GOAL], obs[layout::GOAL + 1]),
            teammates,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoneReason {
    Success,
    Collision,
    Timeout,
}

impl DoneReason {
    /// Timeouts truncate; the other endings are true terminal states.
    pub fn is_terminal(self) -> bool {
        !matches!(self, DoneReason::Timeout)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub rewards: Vec<f64>,
    /// Team disconnection cost, 0 or 1.
    pub cost: f64,
    pub lambda2: f64,
    pub done: Option<DoneReason>,
    pub collisions: Vec<bool>,
}

/// One robot's experience at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Vec2,
    pub log_prob: f64,
    pub reward: f64,
    pub cost: f64,
    pub done: Option<DoneReason>,
    pub next_observation: Vec<f64>,
}

/// Scales `a` down to norm `v_max` if it is longer; otherwise returns it unchanged.
pub fn clamp_action(a: Vec2, v_max: f64) -> Vec2 {
    let n = a.norm();
    if n > v_max {
        a * (v_max / n)
    } else {
        a
    }
}

/// True when robot `i` touches an obstacle or another robot.
pub fn in_collision(i: usize, positions: &[Vec2], map: &WorldMap, cfg: &EnvConfig) -> bool {
    let p = positions[i];
    map.obstacle_distance(p) < cfg.robot_radius
        || positions
            .iter()
            .enumerate()
            .any(|(j, &q)| j != i && p.distance(q) < 2.0 * cfg.robot_radius)
}

/// True when every robot is inside the target zone (shrunk by the robot radius).
pub fn team_in_goal(positions: &[Vec2], map: &WorldMap, cfg: &EnvConfig) -> bool {
    positions.iter().all(|p| p.distance(map.goal) < map.goal_radius - cfg.robot_radius)
}

/// Reward of robot `i` for the move `prev_positions → positions`:
/// a goal term (team arrival bonus, else progress shaping) plus a collision penalty.
pub fn reward(i: usize, prev_positions: &[Vec2], positions: &[Vec2], map: &WorldMap, cfg: &EnvConfig) -> f64 {
    let r_goal = if team_in_goal(positions, map, cfg) {
        cfg.r_goal
    } else {
        cfg.w_g * (prev_positions[i].distance(map.goal) - positions[i].distance(map.goal))
    };
    let r_coll = if in_collision(i, positions, map, cfg) { cfg.r_coll } else { 0.0 };
    r_goal + r_coll
}

/// The team simulator for one episode at a time.
#[derive(Debug, Clone)]
pub struct MultiRobotEnv {
    cfg: EnvConfig,
    lidar: Lidar,
    map: WorldMap,
    robots: Vec<RobotState>,
    t: usize,
    done: Option<DoneReason>,
}

impl MultiRobotEnv {
    pub fn new(cfg: EnvConfig, map: WorldMap) -> Self {
        let mut env = Self { cfg, lidar: cfg.lidar(), map, robots: Vec::new(), t: 0, done: None };
        env.reset_state();
        env
    }

    /// Starts a new episode on `map`.
    pub fn reset(&mut self, map: &WorldMap) {
        self.map.clone_from(map);
        self.reset_state();
    }

    fn reset_state(&mut self) {
        self.robots = self.map.spawns.iter().map(|&p| RobotState { position: p, velocity: Vec2::ZERO }).collect();
        self.t = 0;
        self.done = None;
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn map(&self) -> &WorldMap {
        &self.map
    }

    pub fn n_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn obs_dim(&self) -> usize {
        obs_dim(self.n_robots())
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn done(&self) -> Option<DoneReason> {
        self.done
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.robots.iter().map(|r| r.position).collect()
    }

    /// Overrides the team state; used by tests and scripted scenarios.
    pub fn set_robots(&mut self, robots: Vec<RobotState>) {
        assert_eq!(robots.len(), self.robots.len());
        self.robots = robots;
    }

    /// Writes robot `i`'s flat observation into `out` (length [`obs_dim`]).
    pub fn observe_into(&self, i: usize, positions: &[Vec2], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.obs_dim());
        let me = &self.robots[i];
        self.lidar.scan_into(&self.map, positions, i, &mut out[..LIDAR_BEAMS]);
        let inv = 1.0 / self.cfg.max_range;
        out[..LIDAR_BEAMS].iter_mut().for_each(|r| *r *= inv);
        let g = self.map.goal - me.position;
        out[layout::VELOCITY..layout::GOAL].copy_from_slice(&[me.velocity.x, me.velocity.y]);
        out[layout::GOAL..layout::TEAMMATES].copy_from_slice(&[g.x, g.y]);
        let mut k = layout::TEAMMATES;
        for (j, p) in positions.iter().enumerate() {
            if j != i {
                let d = *p - me.position;
                out[k] = d.x;
                out[k + 1] = d.y;
                k += 2;
            }
        }
    }

    pub fn observe(&self, i: usize) -> Observation {
        let mut v = vec![0.0; self.obs_dim()];
        self.observe_into(i, &self.positions(), &mut v);
        Observation::from_slice(&v)
    }

    /// All robots' observations, row-major `n × obs_dim`.
    pub fn observe_all(&self) -> Vec<f64> {
        let d = self.obs_dim();
        let positions = self.positions();
        let mut out = vec![0.0; d * self.n_robots()];
        for (i, row) in out.chunks_exact_mut(d).enumerate() {
            self.observe_into(i, &positions, row);
        }
        out
    }

    /// Advances every robot simultaneously by one control period.
    pub fn step(&mut self, actions: &[Vec2]) -> Result<StepResult, EnvError> {
        if self.done.is_some() {
            return Err(EnvError::StepAfterDone);
        }
        let n = self.n_robots();
        if actions.len() != n {
            return Err(EnvError::ActionCount { expected: n, got: actions.len() });
        }
        if let Some(i) = actions.iter().position(|a| !a.is_finite()) {
            return Err(EnvError::NonFiniteAction(i));
        }
        let prev = self.positions();
        let inner = self.map.bounds.inset(self.cfg.robot_radius);
        for (robot, &a) in self.robots.iter_mut().zip(actions) {
            let mut v = clamp_action(a, self.cfg.v_max);
            let mut p = robot.position + v * self.cfg.dt;
            if p.x < inner.min.x || p.x > inner.max.x {
                p.x = p.x.clamp(inner.min.x, inner.max.x);
                v.x = 0.0;
            }
            if p.y < inner.min.y || p.y > inner.max.y {
                p.y = p.y.clamp(inner.min.y, inner.max.y);
                v.y = 0.0;
            }
            robot.position = p;
            robot.velocity = v;
        }
        self.t += 1;
        let positions = self.positions();
        let rewards: Vec<f64> = (0..n).map(|i| reward(i, &prev, &positions, &self.map, &self.cfg)).collect();
        let collisions: Vec<bool> = (0..n).map(|i| in_collision(i, &positions, &self.map, &self.cfg)).collect();
        let lambda2 = algebraic_connectivity(&positions, self.cfg.comm_range);
        let done = if collisions.iter().any(|&c| c) {
            Some(DoneReason::Collision)
        } else if team_in_goal(&positions, &self.map, &self.cfg) {
            Some(DoneReason::Success)
        } else if self.t >= self.cfg.t_max {
            Some(DoneReason::Timeout)
        } else {
            None
        };
        self.done = done;
        // a lone robot has no links to lose
        let cost = if n < 2 { 0.0 } else { cost_from_lambda2(lambda2) };
        Ok(StepResult { rewards, cost, lambda2, done, collisions })
    }
}

/// One row of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub robot: usize,
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub r: f64,
    pub c: f64,
    pub lambda2: f64,
}

impl TrajectoryRow {
    /// Rows for every robot after a step taken with `actions`.
    pub fn from_step(env: &MultiRobotEnv, actions: &[Vec2], result: &StepResult) -> Vec<TrajectoryRow> {
        env.robots()
            .iter()
            .zip(actions)
            .enumerate()
            .map(|(i, (s, a))| TrajectoryRow {
                t: env.time(),
                robot: i,
                px: s.position.x,
                py: s.position.y,
                vx: s.velocity.x,
                vy: s.velocity.y,
                ax: a.x,
                ay: a.y,
                r: result.rewards[i],
                c: result.cost,
                lambda2: result.lambda2,
            })
            .collect()
    }
}

/// Writes rows as CSV with header `t,robot,px,py,vx,vy,ax,ay,r,c,lambda2`.
pub fn write_trajectory_csv(path: impl AsRef<Path>, rows: &[TrajectoryRow]) -> Result<(), EnvError> {
    let path = path.as_ref();
    let wrap = |source| EnvError::Csv { path: path.to_owned(), source };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    w.flush().map_err(|e| wrap(e.into()))
}

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRow>, EnvError> {
    let path = path.as_ref();
    let wrap = |source| EnvError::Csv { path: path.to_owned(), source };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    r.deserialize().collect::<Result<Vec<_>, _>>().map_err(wrap)
}

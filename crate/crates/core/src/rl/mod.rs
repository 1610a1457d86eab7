//! Experience batches, returns and advantages, the discounted constraint
//! estimate, behavior-cloning loss and value fitting.

mod diagnostics;
mod lbfgs;
mod values;

pub use diagnostics::{DiagnosticsLog, UpdateRecord};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsResult, LbfgsStatus};
pub use values::{fit_values, ValueFit};

use crate::env::{DoneReason, StepResult};
use crate::net::{NetError, PolicyNet};
use crate::world::Vec2;
use std::ops::Range;

/// One robot's trajectory inside an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotTrajectory {
    /// Row-major `T × obs_dim`.
    pub observations: Vec<f64>,
    pub actions: Vec<Vec2>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Observation after the last action; used to bootstrap truncated episodes.
    pub final_observation: Vec<f64>,
}

impl RobotTrajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// A finished team episode: one trajectory per robot plus the shared cost signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub robots: Vec<RobotTrajectory>,
    /// Team cost per step.
    pub costs: Vec<f64>,
    pub outcome: DoneReason,
    pub map_index: usize,
}

impl Episode {
    /// Empty episode for `n_robots` robots with `obs_dim`-long observations.
    pub fn start(n_robots: usize, map_index: usize) -> Self {
        let robot = RobotTrajectory {
            observations: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            final_observation: Vec::new(),
        };
        Self { robots: vec![robot; n_robots], costs: Vec::new(), outcome: DoneReason::Timeout, map_index }
    }

    /// Records one team step: observations `n × obs_dim` seen before acting.
    pub fn push(&mut self, observations: &[f64], actions: &[Vec2], log_probs: &[f64], result: &StepResult) {
        let n = self.robots.len();
        let d = observations.len() / n;
        for (i, traj) in self.robots.iter_mut().enumerate() {
            traj.observations.extend_from_slice(&observations[i * d..(i + 1) * d]);
            traj.actions.push(actions[i]);
            traj.log_probs.push(log_probs[i]);
            traj.rewards.push(result.rewards[i]);
        }
        self.costs.push(result.cost);
    }

    /// Closes the episode with the observations after the last step.
    pub fn finish(&mut self, final_observations: &[f64], outcome: DoneReason) {
        let n = self.robots.len();
        let d = final_observations.len() / n;
        for (i, traj) in self.robots.iter_mut().enumerate() {
            traj.final_observation = final_observations[i * d..(i + 1) * d].to_vec();
        }
        self.outcome = outcome;
    }

    /// Team timesteps.
    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// Timeouts are truncations; value targets bootstrap past them.
    pub fn truncated(&self) -> bool {
        !self.outcome.is_terminal()
    }
}

/// Episodes collected between two updates, pooled over robots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub episodes: Vec<Episode>,
}

/// The batch flattened into per-sample arrays (one sample per robot per step).
#[derive(Debug, Clone, PartialEq)]
pub struct FlatBatch {
    pub obs_dim: usize,
    /// `samples × obs_dim`
    pub observations: Vec<f64>,
    pub actions: Vec<Vec2>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Team cost broadcast to every robot's sample.
    pub costs: Vec<f64>,
    /// Sample ranges of each robot trajectory.
    pub segments: Vec<Range<usize>>,
    /// Whether each segment ended by truncation.
    pub truncated: Vec<bool>,
    /// `segments × obs_dim`
    pub final_observations: Vec<f64>,
}

impl FlatBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn observation(&self, k: usize) -> &[f64] {
        &self.observations[k * self.obs_dim..(k + 1) * self.obs_dim]
    }
}

impl Batch {
    pub fn push(&mut self, episode: Episode) {
        self.episodes.push(episode);
    }

    /// Pooled samples: robot-steps over all episodes.
    pub fn samples(&self) -> usize {
        self.episodes.iter().map(|e| e.len() * e.robots.len()).sum()
    }

    /// Team timesteps.
    pub fn env_steps(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    /// Mean undiscounted per-robot return over episodes.
    pub fn average_return(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .episodes
            .iter()
            .map(|e| e.robots.iter().map(|r| r.rewards.iter().sum::<f64>()).sum::<f64>() / e.robots.len() as f64)
            .sum();
        total / self.episodes.len() as f64
    }

    pub fn flatten(&self) -> FlatBatch {
        let obs_dim = self
            .episodes
            .iter()
            .flat_map(|e| &e.robots)
            .find(|r| !r.final_observation.is_empty())
            .map_or(0, |r| r.final_observation.len());
        let mut flat = FlatBatch {
            obs_dim,
            observations: Vec::with_capacity(self.samples() * obs_dim),
            actions: Vec::with_capacity(self.samples()),
            log_probs: Vec::with_capacity(self.samples()),
            rewards: Vec::with_capacity(self.samples()),
            costs: Vec::with_capacity(self.samples()),
            segments: Vec::new(),
            truncated: Vec::new(),
            final_observations: Vec::new(),
        };
        for ep in &self.episodes {
            for r in &ep.robots {
                let start = flat.rewards.len();
                flat.observations.extend_from_slice(&r.observations);
                flat.actions.extend_from_slice(&r.actions);
                flat.log_probs.extend_from_slice(&r.log_probs);
                flat.rewards.extend_from_slice(&r.rewards);
                flat.costs.extend_from_slice(&ep.costs);
                flat.segments.push(start..flat.rewards.len());
                flat.truncated.push(ep.truncated());
                flat.final_observations.extend_from_slice(&r.final_observation);
            }
        }
        flat
    }
}

/// `G_t = r_t + γ·G_{t+1}`, seeded with `bootstrap` past the last step
/// (the value of the final observation for truncated episodes, 0 for terminal ones).
pub fn discounted_returns(rewards: &[f64], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

/// One-step TD advantage `r + γ·V(s') − V(s)`, with `V(s')` masked at terminal steps.
pub fn td_advantage(r: f64, v: f64, v_next: f64, gamma: f64, terminal: bool) -> f64 {
    r + if terminal { 0.0 } else { gamma * v_next } - v
}

/// TD advantages for every sample of a flattened batch.
///
/// `values` holds `V(o_t)` per sample and `final_values` holds `V` of each
/// segment's final observation. Only the last step of a non-truncated segment is terminal.
pub fn td_advantages(flat: &FlatBatch, signal: &[f64], values: &[f64], final_values: &[f64], gamma: f64) -> Vec<f64> {
    let mut adv = vec![0.0; flat.len()];
    for (s, seg) in flat.segments.iter().enumerate() {
        for t in seg.clone() {
            let last = t + 1 == seg.end;
            let v_next = if last { final_values[s] } else { values[t + 1] };
            let terminal = last && !flat.truncated[s];
            adv[t] = td_advantage(signal[t], values[t], v_next, gamma, terminal);
        }
    }
    adv
}

/// Discounted-return regression targets for every sample, bootstrapping truncated segments.
pub fn value_targets(flat: &FlatBatch, signal: &[f64], final_values: &[f64], gamma: f64) -> Vec<f64> {
    let mut targets = Vec::with_capacity(flat.len());
    for (s, seg) in flat.segments.iter().enumerate() {
        let bootstrap = if flat.truncated[s] { final_values[s] } else { 0.0 };
        targets.extend(discounted_returns(&signal[seg.clone()], gamma, bootstrap));
    }
    targets
}

/// Shifts and scales to zero mean and unit variance (left unscaled when the spread is ~0).
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 1e-8 { 1.0 / std } else { 1.0 };
    values.iter_mut().for_each(|v| *v = (*v - mean) * scale);
}

/// Sample estimate of the discounted cost return: mean over episodes of `Σ_t γ_c^t c_t`.
pub fn constraint_estimate(batch: &Batch, gamma_c: f64) -> f64 {
    if batch.episodes.is_empty() {
        return 0.0;
    }
    let total: f64 = batch.episodes.iter().map(|e| discounted_sum(&e.costs, gamma_c)).sum();
    total / batch.episodes.len() as f64
}

fn discounted_sum(xs: &[f64], gamma: f64) -> f64 {
    xs.iter().rev().fold(0.0, |acc, x| x + gamma * acc)
}

/// Mean squared distance between expert actions and policy means, and its
/// gradient w.r.t. the means. Both slices are `samples × 2`.
pub fn bc_loss(expert: &[f64], means: &[f64]) -> (f64, Vec<f64>) {
    let samples = (means.len() / 2).max(1) as f64;
    let mut loss = 0.0;
    let grad = expert
        .iter()
        .zip(means)
        .map(|(e, m)| {
            loss += (e - m) * (e - m);
            -2.0 * (e - m) / samples
        })
        .collect();
    (loss / samples, grad)
}

/// Behavior-cloning loss of `policy` at `theta` against `expert` actions
/// (`samples × 2`) and its parameter gradient. The log-std does not enter.
pub fn bc_loss_gradient(
    policy: &PolicyNet,
    theta: &[f64],
    observations: &[f64],
    expert: &[f64],
) -> Result<(f64, Vec<f64>), NetError> {
    let n = expert.len() / 2;
    let inv_n = 1.0 / n.max(1) as f64;
    policy.loss_gradient(theta, observations, n, |start, means| {
        let target = &expert[2 * start..2 * start + means.len()];
        let (loss, mut dmean) = bc_loss(target, means);
        // bc_loss averages over the chunk; rescale to the whole batch
        let chunk = means.len() as f64 / 2.0;
        dmean.iter_mut().for_each(|g| *g *= chunk * inv_n);
        (loss * chunk * inv_n, dmean)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn step(rewards: Vec<f64>, cost: f64) -> StepResult {
        let n = rewards.len();
        StepResult { rewards, cost, lambda2: 0.0, done: None, collisions: vec![false; n] }
    }

    fn episode(costs: &[f64], outcome: DoneReason) -> Episode {
        let mut ep = Episode::start(2, 0);
        for (t, &c) in costs.iter().enumerate() {
            let obs = [t as f64, 0.0, t as f64, 1.0];
            ep.push(&obs, &[Vec2::ZERO, Vec2::ZERO], &[0.0, 0.0], &step(vec![1.0, 2.0], c));
        }
        ep.finish(&[9.0, 0.0, 9.0, 1.0], outcome);
        ep
    }

    #[test]
    fn returns_hand_recursion() {
        let g = discounted_returns(&[1.0, 1.0, 1.0], 0.99, 0.0);
        assert_abs_diff_eq!(g[0], 2.9701, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 1.99, epsilon = 1e-12);
        assert_abs_diff_eq!(g[2], 1.0, epsilon = 1e-12);
        assert_eq!(discounted_returns(&[0.5, -2.0], 0.0, 7.0), vec![0.5, -2.0]);
        assert_eq!(discounted_returns(&[0.0; 4], 0.9, 0.0), vec![0.0; 4]);
    }

    #[test]
    fn returns_bootstrap_truncation() {
        let g = discounted_returns(&[0.0, 0.0], 0.5, 8.0);
        assert_eq!(g, vec![2.0, 4.0]);
    }

    #[test]
    fn td_examples() {
        assert_eq!(td_advantage(1.0, 0.0, 0.0, 0.99, false), 1.0);
        assert_abs_diff_eq!(td_advantage(0.0, 1.0, 1.0, 0.99, false), -0.01, epsilon = 1e-15);
        assert_eq!(td_advantage(0.5, 0.2, 1e9, 0.99, true), 0.5 - 0.2);
    }

    #[test]
    fn td_telescopes_on_terminal_episodes() {
        let rewards = [0.3, -1.0, 2.0, 0.7];
        let values = [0.1, 0.5, -0.4, 1.2];
        let gamma = 0.9;
        let adv: Vec<f64> = (0..4)
            .map(|t| {
                let last = t == 3;
                td_advantage(rewards[t], values[t], if last { 123.0 } else { values[t + 1] }, gamma, last)
            })
            .collect();
        let weighted: f64 = adv.iter().enumerate().map(|(t, a)| gamma.powi(t as i32) * a).sum();
        let g = discounted_returns(&rewards, gamma, 0.0);
        assert_abs_diff_eq!(weighted, g[0] - values[0], epsilon = 1e-12);
    }

    #[test]
    fn constraint_examples() {
        let mut b = Batch::default();
        b.push(episode(&[0.0, 0.0, 0.0], DoneReason::Success));
        assert_eq!(constraint_estimate(&b, 0.999), 0.0);
        let mut b = Batch::default();
        b.push(episode(&[1.0, 0.0], DoneReason::Collision));
        assert_eq!(constraint_estimate(&b, 0.999), 1.0);
        b.push(episode(&[0.0, 0.0], DoneReason::Collision));
        assert_eq!(constraint_estimate(&b, 0.999), 0.5);
    }

    #[test]
    fn constraint_bounded_by_horizon_free_limit() {
        let mut b = Batch::default();
        b.push(episode(&vec![1.0; 20_000], DoneReason::Timeout));
        let j = constraint_estimate(&b, 0.999);
        assert!(j <= 1000.0 && j > 999.0);
    }

    #[test]
    fn flatten_layout_and_counts() {
        let mut b = Batch::default();
        b.push(episode(&[0.0, 1.0], DoneReason::Timeout));
        b.push(episode(&[1.0], DoneReason::Success));
        assert_eq!(b.env_steps(), 3);
        assert_eq!(b.samples(), 6);
        let f = b.flatten();
        assert_eq!(f.obs_dim, 2);
        assert_eq!(f.segments, vec![0..2, 2..4, 4..5, 5..6]);
        assert_eq!(f.truncated, vec![true, true, false, false]);
        assert_eq!(f.rewards, vec![1.0, 1.0, 2.0, 2.0, 1.0, 2.0]);
        assert_eq!(f.costs, vec![0.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(f.observation(1), &[1.0, 0.0]);
        assert_eq!(f.observation(3), &[1.0, 1.0]);
        assert_abs_diff_eq!(b.average_return(), (3.0 + 1.5) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn advantages_and_targets_respect_segments() {
        let mut b = Batch::default();
        b.push(episode(&[0.0, 0.0], DoneReason::Timeout));
        let f = b.flatten();
        let values = [0.5, 0.25, 1.0, 2.0];
        let finals = [4.0, 8.0];
        let adv = td_advantages(&f, &f.rewards, &values, &finals, 0.5);
        assert_eq!(adv, vec![1.0 + 0.125 - 0.5, 1.0 + 2.0 - 0.25, 2.0 + 1.0 - 1.0, 2.0 + 4.0 - 2.0]);
        let tgt = value_targets(&f, &f.rewards, &finals, 0.5);
        assert_eq!(tgt, vec![1.0 + 0.5 * 3.0, 3.0, 2.0 + 0.5 * 6.0, 6.0]);
    }

    #[test]
    fn normalization() {
        let mut v = vec![1.0, 2.0, 3.0, 4.0];
        normalize(&mut v);
        let mean: f64 = v.iter().sum::<f64>() / 4.0;
        let var: f64 = v.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-12);
        let mut flat = vec![3.0; 3];
        normalize(&mut flat);
        assert_eq!(flat, vec![0.0; 3]);
    }

    #[test]
    fn bc_examples() {
        assert_eq!(bc_loss(&[0.3, -0.2], &[0.3, -0.2]).0, 0.0);
        let (l, g) = bc_loss(&[0.1, 0.0], &[0.0, 0.0]);
        assert_abs_diff_eq!(l, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], -0.2, epsilon = 1e-15);
    }
}

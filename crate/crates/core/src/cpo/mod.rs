//! Trust-region policy updates: CPO with the connectivity constraint, TRPO as
//! the unconstrained mode, and an optional behavior-cloning term in the objective.

mod cg;
mod line_search;
mod step;

pub use cg::{conjugate_gradient, CgResult};
pub use line_search::{line_search, LineSearchConfig, Trial, UpdateDiagnostics};
pub use step::{compute_step, solve_dual, DualSolution, Step, StepMode, SurrogateProblem};

use crate::env::DoneReason;
use crate::expert::ExpertPolicy;
use crate::net::{NetError, PolicyNet, ValueNet, LOG_2PI};
use crate::rl::{self, Batch, FlatBatch, LbfgsConfig};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum CpoError {
    #[error("degenerate trust-region geometry (gᵀH⁻¹g = {0})")]
    DegenerateGeometry(f64),
    #[error("batch is empty")]
    EmptyBatch,
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Cpo,
    Trpo,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Cpo => "cpo",
            Algo::Trpo => "trpo",
        })
    }
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cpo" => Ok(Algo::Cpo),
            "trpo" => Ok(Algo::Trpo),
            other => Err(format!("unknown algorithm `{other}` (expected cpo or trpo)")),
        }
    }
}

/// Per-sample data the surrogate functions are evaluated on.
#[derive(Debug, Clone)]
pub struct SurrogateData<'a> {
    pub observations: &'a [f64],
    /// `n × 2`
    pub actions: &'a [f64],
    /// `n × 2` policy means at the old parameters.
    pub old_means: &'a [f64],
    pub old_logstd: [f64; 2],
    pub advantages: &'a [f64],
    pub cost_advantages: &'a [f64],
    /// `n × 2` expert actions.
    pub expert: &'a [f64],
    /// Weight of the behavior-cloning term (0 disables it).
    pub lambda_e: f64,
}

impl SurrogateData<'_> {
    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }
}

fn gauss_log_prob(a: &[f64], mean: &[f64], logstd: [f64; 2]) -> f64 {
    (0..2)
        .map(|d| {
            let z = (a[d] - mean[d]) * (-logstd[d]).exp();
            -0.5 * z * z - logstd[d] - 0.5 * LOG_2PI
        })
        .sum()
}

/// Average closed-form `KL(old ‖ new)` over a batch of diagonal Gaussians.
pub fn avg_kl(old_means: &[f64], old_logstd: [f64; 2], new_means: &[f64], new_logstd: [f64; 2]) -> f64 {
    let n = old_means.len() / 2;
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for d in 0..2 {
        let ratio = (2.0 * (old_logstd[d] - new_logstd[d])).exp();
        let inv_var_new = (-2.0 * new_logstd[d]).exp();
        let mut sq = 0.0;
        for k in 0..n {
            let dm = old_means[2 * k + d] - new_means[2 * k + d];
            sq += dm * dm;
        }
        total += n as f64 * (new_logstd[d] - old_logstd[d] + 0.5 * ratio - 0.5)
            + 0.5 * inv_var_new * sq;
    }
    total / n as f64
}

/// Average `KL(old ‖ π_θ)` over `observations` and its gradient w.r.t. `theta`.
pub fn avg_kl_gradient(
    policy: &PolicyNet,
    theta: &[f64],
    observations: &[f64],
    old_means: &[f64],
    old_logstd: [f64; 2],
) -> Result<(f64, Vec<f64>), NetError> {
    let n = old_means.len() / 2;
    let inv_n = 1.0 / n.max(1) as f64;
    let logstd = policy.logstd(theta);
    let inv_var = [(-2.0 * logstd[0]).exp(), (-2.0 * logstd[1]).exp()];
    let var_old = [(2.0 * old_logstd[0]).exp(), (2.0 * old_logstd[1]).exp()];
    let mut dlogstd = [inv_n * n as f64; 2];
    let (value, mut grad) = policy.loss_gradient(theta, observations, n, |start, means| {
        let mut dmean = vec![0.0; means.len()];
        let mut value = 0.0;
        for k in 0..means.len() / 2 {
            let idx = start + k;
            for d in 0..2 {
                let dm = means[2 * k + d] - old_means[2 * idx + d];
                value += (logstd[d] - old_logstd[d] + 0.5 * (var_old[d] + dm * dm) * inv_var[d] - 0.5) * inv_n;
                dmean[2 * k + d] = dm * inv_var[d] * inv_n;
                dlogstd[d] -= (var_old[d] + dm * dm) * inv_var[d] * inv_n;
            }
        }
        (value, dmean)
    })?;
    grad[policy.logstd_range()].copy_from_slice(&dlogstd);
    Ok((value, grad))
}

/// Which surrogate a gradient is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surrogate {
    /// `mean(ratio·A) − λ_e·BC`
    Objective,
    /// `mean(ratio·A_c)`
    Cost,
}

/// Value and parameter gradient of a surrogate at `theta`.
pub fn surrogate_gradient(
    policy: &PolicyNet,
    theta: &[f64],
    data: &SurrogateData<'_>,
    which: Surrogate,
) -> Result<(f64, Vec<f64>), NetError> {
    let n = data.len();
    let inv_n = 1.0 / n.max(1) as f64;
    let logstd = policy.logstd(theta);
    let inv_var = [(-2.0 * logstd[0]).exp(), (-2.0 * logstd[1]).exp()];
    let (adv, lambda_e) = match which {
        Surrogate::Objective => (data.advantages, data.lambda_e),
        Surrogate::Cost => (data.cost_advantages, 0.0),
    };
    let mut dlogstd = [0.0; 2];
    let (value, mut grad) = policy.loss_gradient(theta, data.observations, n, |start, means| {
        let m = means.len() / 2;
        let mut value = 0.0;
        let mut dmean = vec![0.0; means.len()];
        for k in 0..m {
            let idx = start + k;
            let mu = &means[2 * k..2 * k + 2];
            let a = &data.actions[2 * idx..2 * idx + 2];
            let old_lp = gauss_log_prob(a, &data.old_means[2 * idx..2 * idx + 2], data.old_logstd);
            let ratio = (gauss_log_prob(a, mu, logstd) - old_lp).exp();
            let w = adv[idx] * ratio * inv_n;
            value += w;
            for d in 0..2 {
                let diff = a[d] - mu[d];
                dmean[2 * k + d] = w * diff * inv_var[d];
                dlogstd[d] += w * (diff * diff * inv_var[d] - 1.0);
            }
            if lambda_e != 0.0 {
                let e = &data.expert[2 * idx..2 * idx + 2];
                for d in 0..2 {
                    let diff = e[d] - mu[d];
                    value -= lambda_e * diff * diff * inv_n;
                    dmean[2 * k + d] += 2.0 * lambda_e * diff * inv_n;
                }
            }
        }
        (value, dmean)
    })?;
    grad[policy.logstd_range()].copy_from_slice(&dlogstd);
    Ok((value, grad))
}

/// Forward-only evaluation of a candidate: `(objective, mean ratio·A_c, avg KL, BC loss)`.
pub fn evaluate_surrogates(
    policy: &PolicyNet,
    theta: &[f64],
    data: &SurrogateData<'_>,
) -> Result<(f64, f64, f64, f64), NetError> {
    let n = data.len();
    let means = policy.means(theta, data.observations, n)?;
    let logstd = policy.logstd(theta);
    let inv_n = 1.0 / n.max(1) as f64;
    let (mut obj, mut cost, mut bc) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let a = &data.actions[2 * k..2 * k + 2];
        let mu = &means[2 * k..2 * k + 2];
        let ratio = (gauss_log_prob(a, mu, logstd) - gauss_log_prob(a, &data.old_means[2 * k..2 * k + 2], data.old_logstd)).exp();
        obj += data.advantages[k] * ratio * inv_n;
        cost += data.cost_advantages[k] * ratio * inv_n;
        let e = &data.expert[2 * k..2 * k + 2];
        bc += ((e[0] - mu[0]).powi(2) + (e[1] - mu[1]).powi(2)) * inv_n;
    }
    let kl = avg_kl(data.old_means, data.old_logstd, &means, logstd);
    Ok((obj - data.lambda_e * bc, cost, kl, bc))
}

/// Hyperparameters of one policy/value update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateConfig {
    pub algo: Algo,
    pub bc: bool,
    pub gamma: f64,
    pub gamma_c: f64,
    pub lambda_e: f64,
    /// KL radius η.
    pub eta: f64,
    /// Constraint threshold on the discounted disconnection cost.
    pub d: f64,
    pub damping: f64,
    pub cg_iters: usize,
    pub line_search: LineSearchConfig,
    pub lbfgs: LbfgsConfig,
    /// Use every `fvp_stride`-th sample in Fisher-vector products.
    pub fvp_stride: usize,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Cpo,
            bc: true,
            gamma: 0.99,
            gamma_c: 0.999,
            lambda_e: 0.1,
            eta: 0.01,
            d: 0.1,
            damping: 0.1,
            cg_iters: 10,
            line_search: LineSearchConfig::default(),
            lbfgs: LbfgsConfig::default(),
            fvp_stride: 1,
        }
    }
}

/// Policy and value parameters being trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub diagnostics: UpdateDiagnostics,
    pub j_c: f64,
    pub bc_loss: f64,
    pub avg_return: f64,
    pub value_loss: f64,
    pub cost_value_loss: f64,
    pub samples: usize,
    pub env_steps: usize,
    pub episodes: usize,
    pub success_rate: f64,
}

/// Advantages, targets and expert actions for one batch.
struct Prepared {
    flat: FlatBatch,
    actions: Vec<f64>,
    adv: Vec<f64>,
    adv_c: Vec<f64>,
    targets: Vec<f64>,
    targets_c: Vec<f64>,
    expert: Vec<f64>,
}

fn prepare(learner: &Learner, batch: &Batch, expert: &dyn ExpertPolicy, cfg: &UpdateConfig) -> Result<Prepared, CpoError> {
    let flat = batch.flatten();
    if flat.is_empty() {
        return Err(CpoError::EmptyBatch);
    }
    let n = flat.len();
    let segs = flat.segments.len();
    let v = learner.value.predict(&learner.phi, &flat.observations, n)?;
    let v_final = learner.value.predict(&learner.phi, &flat.final_observations, segs)?;
    let vc = learner.value.predict(&learner.phi_c, &flat.observations, n)?;
    let vc_final = learner.value.predict(&learner.phi_c, &flat.final_observations, segs)?;
    let mut adv = rl::td_advantages(&flat, &flat.rewards, &v, &v_final, cfg.gamma);
    rl::normalize(&mut adv);
    let adv_c = rl::td_advantages(&flat, &flat.costs, &vc, &vc_final, cfg.gamma_c);
    let targets = rl::value_targets(&flat, &flat.rewards, &v_final, cfg.gamma);
    let targets_c = rl::value_targets(&flat, &flat.costs, &vc_final, cfg.gamma_c);
    let expert = expert.act_batch(&flat.observations, flat.obs_dim);
    let actions = flat.actions.iter().flat_map(|a| [a.x, a.y]).collect();
    Ok(Prepared { flat, actions, adv, adv_c, targets, targets_c, expert })
}

fn strided(obs: &[f64], dim: usize, stride: usize) -> Vec<f64> {
    if stride <= 1 {
        return obs.to_vec();
    }
    obs.chunks_exact(dim).step_by(stride).flatten().copied().collect()
}

/// One full update on `batch`: advantages, surrogate gradients, trust-region
/// step with line search, then L-BFGS fits of both value networks.
pub fn update(
    learner: &mut Learner,
    batch: &Batch,
    expert: &dyn ExpertPolicy,
    cfg: &UpdateConfig,
) -> Result<UpdateOutcome, CpoError> {
    let prep = prepare(learner, batch, expert, cfg)?;
    let flat = &prep.flat;
    let n = flat.len();
    let policy = &learner.policy;
    let theta_k = learner.theta.clone();
    let old_means = policy.means(&theta_k, &flat.observations, n)?;
    let old_logstd = policy.logstd(&theta_k);
    let data = SurrogateData {
        observations: &flat.observations,
        actions: &prep.actions,
        old_means: &old_means,
        old_logstd,
        advantages: &prep.adv,
        cost_advantages: &prep.adv_c,
        expert: &prep.expert,
        lambda_e: if cfg.bc { cfg.lambda_e } else { 0.0 },
    };
    let j_c = rl::constraint_estimate(batch, cfg.gamma_c);
    let (base_obj, base_cost, _, bc_loss) = evaluate_surrogates(policy, &theta_k, &data)?;

    let (_, g) = surrogate_gradient(policy, &theta_k, &data, Surrogate::Objective)?;
    let b = match cfg.algo {
        Algo::Trpo => None,
        Algo::Cpo => {
            let (_, mut b) = surrogate_gradient(policy, &theta_k, &data, Surrogate::Cost)?;
            let scale = 1.0 / (1.0 - cfg.gamma_c);
            b.iter_mut().for_each(|v| *v *= scale);
            Some(b)
        }
    };
    let problem = SurrogateProblem { g, b, c: j_c - cfg.d, delta: cfg.eta };
    let fvp_obs = strided(&flat.observations, flat.obs_dim, cfg.fvp_stride);
    let fvp_n = fvp_obs.len() / flat.obs_dim;
    let ctx = policy.fisher_context(&theta_k, &fvp_obs, fvp_n)?;

    let (theta_new, diagnostics) =
        match compute_step(&problem, |v| policy.fisher_vector_product(&ctx, v, cfg.damping), cfg.cg_iters) {
            Ok(step) => {
                let cost_scale = 1.0 / (1.0 - cfg.gamma_c);
                let base = Trial { kl: 0.0, objective: base_obj, constraint: j_c };
                line_search(
                    &theta_k,
                    &step,
                    base,
                    cfg.eta,
                    cfg.d,
                    cfg.algo == Algo::Cpo,
                    &cfg.line_search,
                    |cand| match evaluate_surrogates(policy, cand, &data) {
                        Ok((obj, cost, kl, _)) => {
                            Trial { kl, objective: obj, constraint: j_c + (cost - base_cost) * cost_scale }
                        }
                        Err(_) => Trial { kl: f64::INFINITY, objective: f64::NEG_INFINITY, constraint: f64::INFINITY },
                    },
                    |p| policy.clamp_logstd(p),
                )
            }
            Err(CpoError::DegenerateGeometry(_)) => (theta_k.clone(), UpdateDiagnostics::skipped(j_c)),
            Err(e) => return Err(e),
        };
    drop(ctx);
    learner.theta = theta_new;

    let fit = rl::fit_values(&learner.value, &learner.phi, &flat.observations, &prep.targets, &cfg.lbfgs)?;
    let fit_c = rl::fit_values(&learner.value, &learner.phi_c, &flat.observations, &prep.targets_c, &cfg.lbfgs)?;
    learner.phi = fit.params;
    learner.phi_c = fit_c.params;

    let successes = batch.episodes.iter().filter(|e| e.outcome == DoneReason::Success).count();
    Ok(UpdateOutcome {
        diagnostics,
        j_c,
        bc_loss,
        avg_return: batch.average_return(),
        value_loss: fit.loss_after,
        cost_value_loss: fit_c.loss_after,
        samples: n,
        env_steps: batch.env_steps(),
        episodes: batch.episodes.len(),
        success_rate: successes as f64 / batch.episodes.len().max(1) as f64,
    })
}

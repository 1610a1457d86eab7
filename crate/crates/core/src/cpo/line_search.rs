use super::step::{Step, StepMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    pub ratio: f64,
    pub max_backtracks: usize,
    /// Tolerance on the constraint check, absorbing noise in the cost estimate.
    pub slack: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self { ratio: 0.8, max_backtracks: 10, slack: 1e-3 }
    }
}

/// Quantities measured at one candidate parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    /// Average `KL(π_k ‖ π_candidate)` over the batch.
    pub kl: f64,
    /// Surrogate objective (importance-weighted advantage minus weighted BC loss).
    pub objective: f64,
    /// Estimated constraint value `J_c + ΔL_c/(1−γ_c)`.
    pub constraint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub accepted: bool,
    /// Index `j` of the accepted candidate, or the number tried when none was accepted.
    pub backtracks: usize,
    pub kl: f64,
    pub improvement: f64,
    /// `J_c + bᵀΔ` for the full step.
    pub predicted_constraint: f64,
    pub realized_constraint: f64,
    pub recovery: bool,
    pub mode: StepMode,
}

impl UpdateDiagnostics {
    /// Record of an update that left the parameters untouched.
    pub fn skipped(j_c: f64) -> Self {
        Self {
            accepted: false,
            backtracks: 0,
            kl: 0.0,
            improvement: 0.0,
            predicted_constraint: j_c,
            realized_constraint: j_c,
            recovery: false,
            mode: StepMode::Trpo,
        }
    }
}

/// Backtracks along `step` from `theta` and returns the first acceptable candidate.
///
/// `eval` maps a candidate to its [`Trial`]; `project` is applied to each
/// candidate first (e.g. clamping the log-std). `base` is the trial at
/// `theta`, whose constraint entry is the current `J_c`. A candidate is
/// accepted when its KL is within `delta`, it does not lower the objective
/// (recovery: it lowers the constraint estimate instead) and, when
/// `constrained`, its constraint estimate stays within `max(d, J_c) + slack`.
#[allow(clippy::too_many_arguments)]
pub fn line_search<E, P>(
    theta: &[f64],
    step: &Step,
    base: Trial,
    delta: f64,
    d: f64,
    constrained: bool,
    cfg: &LineSearchConfig,
    mut eval: E,
    project: P,
) -> (Vec<f64>, UpdateDiagnostics)
where
    E: FnMut(&[f64]) -> Trial,
    P: Fn(&mut [f64]),
{
    let j_c = base.constraint;
    let recovery = step.mode == StepMode::Recovery;
    let mut diag = UpdateDiagnostics {
        accepted: false,
        backtracks: 0,
        kl: 0.0,
        improvement: 0.0,
        predicted_constraint: j_c + step.predicted_cost_change,
        realized_constraint: j_c,
        recovery,
        mode: step.mode,
    };
    if step.direction.iter().any(|v| !v.is_finite()) {
        return (theta.to_vec(), diag);
    }
    let bound = d.max(j_c) + cfg.slack;
    let mut frac = 1.0;
    for j in 0..=cfg.max_backtracks {
        let mut cand: Vec<f64> = theta.iter().zip(&step.direction).map(|(t, s)| t + frac * s).collect();
        project(&mut cand);
        let t = eval(&cand);
        let kl_ok = t.kl.is_finite() && t.kl <= delta;
        let progress_ok = if recovery { t.constraint < j_c } else { t.objective - base.objective >= 0.0 };
        let constraint_ok = !constrained || recovery || t.constraint <= bound;
        if kl_ok && progress_ok && constraint_ok {
            diag.accepted = true;
            diag.backtracks = j;
            diag.kl = t.kl;
            diag.improvement = t.objective - base.objective;
            diag.realized_constraint = t.constraint;
            return (cand, diag);
        }
        frac *= cfg.ratio;
        diag.backtracks = j + 1;
    }
    (theta.to_vec(), diag)
}

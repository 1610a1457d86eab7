//! Trust-region step for `max gᵀx  s.t.  bᵀx + c ≤ 0,  ½xᵀHx ≤ δ`.
//!
//! With `q = gᵀH⁻¹g`, `r = gᵀH⁻¹b`, `s = bᵀH⁻¹b` the Lagrange dual is
//! `min_{λ>0, ν≥0} (q − 2νr + ν²s)/(2λ) + λδ − νc` and the primal optimum is
//! `x = H⁻¹(g − νb)/λ`. For fixed `λ` the best `ν` is `max(0, (λc + r)/s)`,
//! which splits the search over `λ` into two pieces, each convex with a
//! closed-form minimizer.

use super::cg::conjugate_gradient;
use super::CpoError;
use crate::linalg::dot;
use serde::{Deserialize, Serialize};

/// Numerical floor below which `s` or `q` count as zero.
const TINY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    /// Unconstrained natural-gradient step.
    Trpo,
    /// Dual-optimal combination of the objective and cost directions.
    Cpo,
    /// Pure cost-reduction step taken when no point of the trust region is feasible.
    Recovery,
}

impl StepMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StepMode::Trpo => "trpo",
            StepMode::Cpo => "cpo",
            StepMode::Recovery => "recovery",
        }
    }
}

/// Linearized trust-region problem around the current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateProblem {
    /// Objective gradient (including the behavior-cloning term).
    pub g: Vec<f64>,
    /// Cost-surrogate gradient; `None` drops the constraint (TRPO).
    pub b: Option<Vec<f64>>,
    /// Constraint value `J_c − d` at the current parameters.
    pub c: f64,
    /// KL radius.
    pub delta: f64,
}

/// Dual solution in terms of the scalar quadratic forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSolution {
    pub mode: StepMode,
    pub lambda: f64,
    pub nu: f64,
}

/// Solves the two-variable dual given `q`, `r`, `s`, `c` and `δ`.
///
/// In recovery mode `lambda` is `√(s/(2δ))` so that the step is `−H⁻¹b/λ`.
pub fn solve_dual(q: f64, r: f64, s: f64, c: f64, delta: f64) -> DualSolution {
    let trpo = DualSolution { mode: StepMode::Trpo, lambda: (q / (2.0 * delta)).sqrt(), nu: 0.0 };
    if s <= TINY {
        // no usable cost direction; the constraint cannot be acted on
        return trpo;
    }
    let a = (q - r * r / s).max(0.0);
    let bb = 2.0 * delta - c * c / s;
    if c > 0.0 && bb <= 0.0 {
        return DualSolution { mode: StepMode::Recovery, lambda: (s / (2.0 * delta)).sqrt(), nu: 0.0 };
    }
    if c <= 0.0 && bb <= 0.0 {
        // the whole trust region satisfies the linear constraint
        return trpo;
    }

    // ν > 0 exactly where λc + r > 0.
    let (nu_region, plain_region) = split_regions(r, c);
    let dual_nu = |l: f64| 0.5 * (a / l + l * bb) - r * c / s;
    let dual_plain = |l: f64| q / (2.0 * l) + l * delta;
    let lambda_a = if bb > 0.0 { (a / bb).sqrt() } else { f64::INFINITY };
    let lambda_b = (q / (2.0 * delta)).sqrt();

    let mut best: Option<(f64, f64)> = None; // (λ, D)
    for (region, target, dual) in [
        (nu_region, lambda_a, &dual_nu as &dyn Fn(f64) -> f64),
        (plain_region, lambda_b, &dual_plain as &dyn Fn(f64) -> f64),
    ] {
        if let Some((lo, hi)) = region {
            let l = target.clamp(lo, hi).max(TINY);
            if !l.is_finite() {
                continue;
            }
            let d = dual(l);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((l, d));
            }
        }
    }
    let Some((lambda, _)) = best else { return trpo };
    let nu = ((lambda * c + r) / s).max(0.0);
    DualSolution { mode: if nu > 0.0 { StepMode::Cpo } else { StepMode::Trpo }, lambda, nu }
}

/// Closed intervals of `λ ∈ [0, ∞]` where `ν* > 0` and where `ν* = 0`.
#[allow(clippy::type_complexity)]
fn split_regions(r: f64, c: f64) -> (Option<(f64, f64)>, Option<(f64, f64)>) {
    let inf = f64::INFINITY;
    if c > 0.0 {
        let mid = -r / c;
        if mid <= 0.0 {
            (Some((0.0, inf)), None)
        } else {
            (Some((mid, inf)), Some((0.0, mid)))
        }
    } else if c < 0.0 {
        let mid = -r / c; // = r/|c|
        if mid <= 0.0 {
            (None, Some((0.0, inf)))
        } else {
            (Some((0.0, mid)), Some((mid, inf)))
        }
    } else if r > 0.0 {
        (Some((0.0, inf)), None)
    } else {
        (None, Some((0.0, inf)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub direction: Vec<f64>,
    pub mode: StepMode,
    pub lambda: f64,
    pub nu: f64,
    /// `gᵀΔ`
    pub predicted_improvement: f64,
    /// `bᵀΔ`, zero without a constraint.
    pub predicted_cost_change: f64,
}

/// Full trust-region step for `p`, solving with `fvp` (`v ↦ H·v`) by conjugate gradient.
pub fn compute_step<F>(p: &SurrogateProblem, mut fvp: F, cg_iters: usize) -> Result<Step, CpoError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let cg_tol = 1e-10;
    let hg = conjugate_gradient(&mut fvp, &p.g, cg_iters, cg_tol).x;
    let q = dot(&p.g, &hg);
    let mut rs = (0.0, 0.0);
    let (dual, hb) = match &p.b {
        None => (None, None),
        Some(b) => {
            let hb = conjugate_gradient(&mut fvp, b, cg_iters, cg_tol).x;
            rs = (dot(&p.g, &hb), dot(b, &hb));
            (Some(solve_dual(q, rs.0, rs.1, p.c, p.delta)), Some(hb))
        }
    };
    let recovery = matches!(dual, Some(DualSolution { mode: StepMode::Recovery, .. }));
    if !recovery && (q <= TINY || !q.is_finite()) {
        return Err(CpoError::DegenerateGeometry(q));
    }
    let (direction, mode, lambda, nu) = match (dual, hb) {
        (Some(d), Some(hb)) if d.mode == StepMode::Recovery => {
            (hb.iter().map(|v| -v / d.lambda).collect::<Vec<_>>(), d.mode, d.lambda, 0.0)
        }
        (Some(d), Some(hb)) if d.nu > 0.0 => {
            // (g − νb)/λ with ν = (λc + r)/s, regrouped so that nothing cancels when g ∥ b
            let (r, s) = rs;
            let x = hg.iter().zip(&hb).map(|(g, b)| (g - r / s * b) / d.lambda - p.c / s * b).collect();
            (x, d.mode, d.lambda, d.nu)
        }
        _ => {
            // ν = 0; λ may sit on a region boundary rather than at √(q/2δ)
            let lambda = dual.map_or((q / (2.0 * p.delta)).sqrt(), |d| d.lambda);
            (hg.iter().map(|v| v / lambda).collect(), StepMode::Trpo, lambda, 0.0)
        }
    };
    let predicted_improvement = dot(&p.g, &direction);
    let predicted_cost_change = p.b.as_ref().map_or(0.0, |b| dot(b, &direction));
    Ok(Step { direction, mode, lambda, nu, predicted_improvement, predicted_cost_change })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    #[test]
    fn trpo_closed_form() {
        let p = SurrogateProblem { g: vec![1.0, 0.0], b: None, c: 0.0, delta: 0.005 };
        let s = compute_step(&p, identity, 10).unwrap();
        assert!((s.direction[0] - 0.1).abs() < 1e-12 && s.direction[1].abs() < 1e-15);
        assert_eq!(s.mode, StepMode::Trpo);
    }

    #[test]
    fn absent_constraint_matches_trpo() {
        let g = vec![0.3, -0.4];
        let trpo = compute_step(&SurrogateProblem { g: g.clone(), b: None, c: 0.0, delta: 0.01 }, identity, 10).unwrap();
        let cpo =
            compute_step(&SurrogateProblem { g, b: Some(vec![0.0, 0.0]), c: -0.1, delta: 0.01 }, identity, 10).unwrap();
        assert_eq!(trpo.direction, cpo.direction);
    }

    #[test]
    fn recovery_closed_form() {
        let p = SurrogateProblem { g: vec![0.0, 1.0], b: Some(vec![1.0, 0.0]), c: 1.0, delta: 0.5 };
        let s = compute_step(&p, identity, 10).unwrap();
        assert_eq!(s.mode, StepMode::Recovery);
        assert!((s.direction[0] + 1.0).abs() < 1e-12 && s.direction[1].abs() < 1e-15);
        assert!(s.predicted_cost_change < 0.0);
    }

    #[test]
    fn active_constraint_lands_on_boundary() {
        // g = (1,0), b = (1,0), c = −0.05: TRPO step 0.1 would violate bᵀx ≤ 0.05
        let p = SurrogateProblem { g: vec![1.0, 0.0], b: Some(vec![1.0, 0.0]), c: -0.05, delta: 0.005 };
        let s = compute_step(&p, identity, 10).unwrap();
        assert_eq!(s.mode, StepMode::Cpo);
        assert!((s.direction[0] - 0.05).abs() < 1e-9, "{:?}", s.direction);
    }

    #[test]
    fn degenerate_objective() {
        let p = SurrogateProblem { g: vec![0.0, 0.0], b: None, c: 0.0, delta: 0.01 };
        assert!(matches!(compute_step(&p, identity, 10), Err(CpoError::DegenerateGeometry(_))));
    }
}

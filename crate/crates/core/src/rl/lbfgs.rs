use crate::linalg::{axpy, dot, norm};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Scale of the first step, taken along the raw negative gradient before
    /// any curvature pairs exist. Later steps start from the unit quasi-Newton step.
    pub initial_step: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 10, max_iters: 25, grad_tol: 1e-6, initial_step: 0.1, armijo: 1e-4, backtrack: 0.5, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    /// No step along the search direction decreased the objective; the best iterate is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
}

/// Minimizes `f` (returning value and gradient) from `x0` with limited-memory BFGS:
/// two-loop recursion for the direction and Armijo backtracking for the step.
pub fn lbfgs_minimize<F>(mut f: F, x0: &[f64], cfg: &LbfgsConfig) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if norm(&g) <= cfg.grad_tol {
            status = LbfgsStatus::Converged;
            break;
        }
        let mut d = direction(&g, &history);
        let mut slope = dot(&g, &d);
        if history.is_empty() || slope >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -cfg.initial_step * v).collect();
            slope = dot(&g, &d);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let mut cand = x.clone();
            axpy(t, &d, &mut cand);
            let (fc, gc) = f(&cand);
            evaluations += 1;
            if fc.is_finite() && fc <= fx + cfg.armijo * t * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            t *= cfg.backtrack;
        }
        let Some((xn, fn_, gn)) = accepted else {
            status = LbfgsStatus::LineSearchFailed;
            break;
        };
        iterations += 1;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    if status == LbfgsStatus::MaxIterations && norm(&g) <= cfg.grad_tol {
        status = LbfgsStatus::Converged;
    }
    LbfgsResult { grad_norm: norm(&g), x, f: fx, iterations, evaluations, status }
}

/// Two-loop recursion: `−H_k·g` with the initial inverse Hessian `γ·I`, `γ = sᵀy / yᵀy`.
fn direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        axpy(-a, y, &mut q);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        axpy(a - b, s, &mut q);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_quadratic() {
        let r = lbfgs_minimize(|x| ((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]), &[0.0], &LbfgsConfig::default());
        assert!((r.x[0] - 3.0).abs() < 1e-6, "{r:?}");
        assert_eq!(r.status, LbfgsStatus::Converged);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (v, g)
        };
        let cfg = LbfgsConfig { max_iters: 500, grad_tol: 1e-10, ..LbfgsConfig::default() };
        let r = lbfgs_minimize(f, &[-1.2, 1.0], &cfg);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn start_at_minimum() {
        let r = lbfgs_minimize(|x| (x[0] * x[0], vec![2.0 * x[0]]), &[0.0], &LbfgsConfig::default());
        assert_eq!(r.x, vec![0.0]);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.status, LbfgsStatus::Converged);
    }

    #[test]
    fn never_worse_than_start() {
        // gradient points the wrong way: every trial step increases f
        let r = lbfgs_minimize(|x| (x[0] * x[0], vec![-1.0]), &[1.0], &LbfgsConfig::default());
        assert_eq!(r.status, LbfgsStatus::LineSearchFailed);
        assert_eq!(r.x, vec![1.0]);
    }
}

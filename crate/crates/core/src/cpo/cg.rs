use crate::linalg::{axpy, dot};

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    /// Norm of `rhs − A·x` for the returned iterate (tracked by recurrence).
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Approximately solves `A·x = rhs` for symmetric positive definite `A`
/// given only products `v ↦ A·v`. Stops after `iters` iterations or once the
/// residual norm drops to `tol`, returning the iterate with the smallest residual.
pub fn conjugate_gradient<F>(mut apply: F, rhs: &[f64], iters: usize, tol: f64) -> CgResult
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut best = CgResult { x: x.clone(), residual_norm: rr.sqrt(), iterations: 0 };
    for k in 0..iters {
        if rr.sqrt() <= tol {
            break;
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() < best.residual_norm {
            best = CgResult { x: x.clone(), residual_norm: rr_new.sqrt(), iterations: k + 1 };
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(a: &[f64], n: usize) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        move |v: &[f64]| (0..n).map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum()).collect()
    }

    #[test]
    fn identity_one_iteration() {
        let r = conjugate_gradient(|v| v.to_vec(), &[1.0, -2.0, 3.0], 10, 1e-12);
        assert_eq!(r.x, vec![1.0, -2.0, 3.0]);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn diagonal_system() {
        let a = [2.0, 0.0, 0.0, 4.0];
        let r = conjugate_gradient(matvec(&a, 2), &[2.0, 4.0], 10, 1e-12);
        assert!((r.x[0] - 1.0).abs() < 1e-12 && (r.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs() {
        let r = conjugate_gradient(|v| v.to_vec(), &[0.0; 4], 10, 1e-10);
        assert_eq!(r.x, vec![0.0; 4]);
        assert_eq!(r.iterations, 0);
    }
}

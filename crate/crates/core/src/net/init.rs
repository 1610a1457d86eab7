use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Orthogonal weight matrix (row-major `rows × cols`) scaled by `gain`.
///
/// Rows are orthonormal when `rows ≤ cols` (`W·Wᵀ = gain²·I`), otherwise
/// columns are (`Wᵀ·W = gain²·I`). Built from the QR factorization of a
/// Gaussian matrix with the sign of `R`'s diagonal folded into `Q`.
pub fn orthogonal_init(rows: usize, cols: usize, gain: f64, rng: &mut impl Rng) -> Vec<f64> {
    assert!(rows >= 1 && cols >= 1, "orthogonal_init needs a non-empty shape");
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    // q: tall × short with orthonormal columns
    let mut w = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows <= cols { q[(j, i)] } else { q[(i, j)] };
            w[i * cols + j] = gain * v;
        }
    }
    w
}

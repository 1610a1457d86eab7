//! Batched dense-layer kernels shared by the policy and value networks.
//! Weights are stored `out × in`, row-major; activations `rows × dim`.

use crate::linalg::{gemm, Op};

/// `y = x·Wᵀ + b`
pub(crate) fn dense_forward(x: &[f64], rows: usize, w: &[f64], b: &[f64], y: &mut [f64]) {
    let out = b.len();
    let inp = w.len() / out;
    for row in y.chunks_exact_mut(out) {
        row.copy_from_slice(b);
    }
    gemm(rows, inp, out, 1.0, x, Op::N, w, Op::T, 1.0, y);
}

/// Accumulates `dW += dyᵀ·x`, `db += Σ dy` and, when requested, writes `dx = dy·W`.
pub(crate) fn dense_backward(
    x: &[f64],
    rows: usize,
    w: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let out = db.len();
    let inp = w.len() / out;
    gemm(out, rows, inp, 1.0, dy, Op::T, x, Op::N, 1.0, dw);
    for row in dy.chunks_exact(out) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }
    if let Some(dx) = dx {
        gemm(rows, out, inp, 1.0, dy, Op::N, w, Op::N, 0.0, dx);
    }
}

/// Forward-mode tangent of a dense layer: `ẏ = ẋ·Wᵀ + x·Ẇᵀ + ḃ`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_tangent(
    x: &[f64],
    dx: Option<&[f64]>,
    rows: usize,
    w: &[f64],
    dw: &[f64],
    db: &[f64],
    dy: &mut [f64],
) {
    let out = db.len();
    let inp = w.len() / out;
    for row in dy.chunks_exact_mut(out) {
        row.copy_from_slice(db);
    }
    gemm(rows, inp, out, 1.0, x, Op::N, dw, Op::T, 1.0, dy);
    if let Some(dx) = dx {
        gemm(rows, inp, out, 1.0, dx, Op::N, w, Op::T, 1.0, dy);
    }
}

/// `tanh(x) = 1 − 2/(e^{2x} + 1)` with `e^{2x}` from a range-reduced Taylor
/// polynomial. Branch-free so the loop vectorizes; libm's `tanh` dominated
/// network evaluation. Absolute error is within a few ulp of 1.
#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    const MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5·2^52, rounds to nearest integer
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let y = (2.0 * x).clamp(-60.0, 60.0);
    let t = y * std::f64::consts::LOG2_E + MAGIC;
    let n = t - MAGIC;
    let r = y - n * LN2_HI - n * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    for k in (1..12).rev() {
        p = p * r + INV_FACT[k];
    }
    p = p * r + 1.0;
    let scale = f64::from_bits((t.to_bits().wrapping_sub(MAGIC.to_bits()).wrapping_add(1023)) << 52);
    1.0 - 2.0 / (p * scale + 1.0)
}

const INV_FACT: [f64; 12] = [
    1.0,
    1.0,
    1.0 / 2.0,
    1.0 / 6.0,
    1.0 / 24.0,
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5040.0,
    1.0 / 40320.0,
    1.0 / 362_880.0,
    1.0 / 3_628_800.0,
    1.0 / 39_916_800.0,
];

pub(crate) fn tanh_inplace(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = tanh(*x));
}

/// Turns an upstream gradient w.r.t. `y = tanh(z)` into one w.r.t. `z`, in place.
pub(crate) fn tanh_backward(dy: &mut [f64], y: &[f64]) {
    for (d, &t) in dy.iter_mut().zip(y) {
        *d *= 1.0 - t * t;
    }
}

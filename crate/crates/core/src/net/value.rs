//! State-value baseline: an MLP with two tanh hidden layers over the full observation.

use super::init::orthogonal_init;
use super::layers::{dense_backward, dense_forward, tanh_backward, tanh_inplace};
use super::{Layout, NetError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueArch {
    pub input_dim: usize,
    pub hidden: [usize; 2],
}

impl ValueArch {
    pub fn new(input_dim: usize, width: usize) -> Self {
        Self { input_dim, hidden: [width, width] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    arch: ValueArch,
    layout: Layout,
    blocks: [Range<usize>; 6],
}

impl ValueNet {
    pub fn new(arch: ValueArch) -> Self {
        let mut layout = Layout::default();
        let [h1, h2] = arch.hidden;
        let blocks = [
            layout.push("hidden1.weight", &[h1, arch.input_dim]),
            layout.push("hidden1.bias", &[h1]),
            layout.push("hidden2.weight", &[h2, h1]),
            layout.push("hidden2.bias", &[h2]),
            layout.push("value.weight", &[1, h2]),
            layout.push("value.bias", &[1]),
        ];
        Self { arch, layout, blocks }
    }

    pub fn arch(&self) -> &ValueArch {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.len()
    }

    /// Orthogonal weights (gain √2 hidden, 1 on the output), zero biases.
    pub fn init_params(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut phi = vec![0.0; self.num_params()];
        let [h1, h2] = self.arch.hidden;
        let s2 = 2f64.sqrt();
        for (block, rows, cols, gain) in
            [(0, h1, self.arch.input_dim, s2), (2, h2, h1, s2), (4, 1, h2, 1.0)]
        {
            phi[self.blocks[block].clone()].copy_from_slice(&orthogonal_init(rows, cols, gain, rng));
        }
        phi
    }

    fn check(&self, phi: &[f64], obs: &[f64], batch: usize) -> Result<(), NetError> {
        if phi.len() != self.num_params() {
            return Err(NetError::ShapeMismatch(format!(
                "expected {} value parameters, got {}",
                self.num_params(),
                phi.len()
            )));
        }
        if obs.len() != batch * self.arch.input_dim {
            return Err(NetError::ShapeMismatch(format!(
                "expected {batch} inputs of length {}, got {} values",
                self.arch.input_dim,
                obs.len()
            )));
        }
        Ok(())
    }

    fn forward_chunk(&self, phi: &[f64], x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let b = &self.blocks;
        let [w1, w2] = self.arch.hidden;
        let mut h1 = vec![0.0; n * w1];
        dense_forward(x, n, &phi[b[0].clone()], &phi[b[1].clone()], &mut h1);
        tanh_inplace(&mut h1);
        let mut h2 = vec![0.0; n * w2];
        dense_forward(&h1, n, &phi[b[2].clone()], &phi[b[3].clone()], &mut h2);
        tanh_inplace(&mut h2);
        let mut v = vec![0.0; n];
        dense_forward(&h2, n, &phi[b[4].clone()], &phi[b[5].clone()], &mut v);
        (h1, h2, v)
    }

    /// Value estimates for `batch` row-major inputs.
    pub fn predict(&self, phi: &[f64], obs: &[f64], batch: usize) -> Result<Vec<f64>, NetError> {
        self.check(phi, obs, batch)?;
        let d = self.arch.input_dim;
        let mut out = Vec::with_capacity(batch);
        for start in (0..batch).step_by(CHUNK) {
            let n = CHUNK.min(batch - start);
            out.extend(self.forward_chunk(phi, &obs[start * d..(start + n) * d], n).2);
        }
        Ok(out)
    }

    /// Mean squared error against `targets` and its gradient.
    pub fn mse_and_grad(&self, phi: &[f64], obs: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>), NetError> {
        let batch = targets.len();
        self.check(phi, obs, batch)?;
        let d = self.arch.input_dim;
        let [w1, w2] = self.arch.hidden;
        let b = &self.blocks;
        let mut grad = vec![0.0; self.num_params()];
        let mut loss = 0.0;
        let inv = 1.0 / batch.max(1) as f64;
        for start in (0..batch).step_by(CHUNK) {
            let n = CHUNK.min(batch - start);
            let x = &obs[start * d..(start + n) * d];
            let (h1, h2, v) = self.forward_chunk(phi, x, n);
            let dv: Vec<f64> = v
                .iter()
                .zip(&targets[start..start + n])
                .map(|(v, y)| {
                    loss += (v - y) * (v - y) * inv;
                    2.0 * (v - y) * inv
                })
                .collect();
            let mut dh2 = vec![0.0; n * w2];
            {
                let (dw, db) = grad[b[4].start..b[5].end].split_at_mut(b[4].len());
                dense_backward(&h2, n, &phi[b[4].clone()], &dv, dw, db, Some(&mut dh2));
            }
            tanh_backward(&mut dh2, &h2);
            let mut dh1 = vec![0.0; n * w1];
            {
                let (dw, db) = grad[b[2].start..b[3].end].split_at_mut(b[2].len());
                dense_backward(&h1, n, &phi[b[2].clone()], &dh2, dw, db, Some(&mut dh1));
            }
            tanh_backward(&mut dh1, &h1);
            let (dw, db) = grad[b[0].start..b[1].end].split_at_mut(b[0].len());
            dense_backward(x, n, &phi[b[0].clone()], &dh1, dw, db, None);
        }
        Ok((loss, grad))
    }
}

use super::layers::dense_forward;
use super::NetError;
use serde::{Deserialize, Serialize};

/// 1-D convolution with valid padding over a channel-minor sequence
/// (`len × in_channels`, row-major). Filters are stored `filters × (kernel·in_channels)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn output_len(&self, len: usize) -> Result<usize, NetError> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(NetError::ShapeMismatch("kernel and stride must be positive".into()));
        }
        if len < self.kernel {
            return Err(NetError::ShapeMismatch(format!("sequence length {len} shorter than kernel {}", self.kernel)));
        }
        Ok((len - self.kernel) / self.stride + 1)
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.in_channels
    }

    pub fn weight_len(&self) -> usize {
        self.filters * self.patch_len()
    }

    /// Gathers receptive fields into a `(batch·out_len) × (kernel·in_channels)` matrix.
    ///
    /// Sample `b` starts at `input[b·batch_stride + offset]` and holds `len × in_channels` values.
    pub(crate) fn im2col(&self, input: &[f64], batch: usize, batch_stride: usize, offset: usize, len: usize) -> Vec<f64> {
        let out_len = (len - self.kernel) / self.stride + 1;
        let pl = self.patch_len();
        let mut patches = vec![0.0; batch * out_len * pl];
        for b in 0..batch {
            let base = b * batch_stride + offset;
            for p in 0..out_len {
                let start = base + p * self.stride * self.in_channels;
                let dst = (b * out_len + p) * pl;
                patches[dst..dst + pl].copy_from_slice(&input[start..start + pl]);
            }
        }
        patches
    }

    /// Scatter-adds patch gradients back onto a contiguous `batch × len × in_channels` buffer.
    pub(crate) fn col2im(&self, dpatches: &[f64], batch: usize, len: usize) -> Vec<f64> {
        let out_len = (len - self.kernel) / self.stride + 1;
        let pl = self.patch_len();
        let c = self.in_channels;
        let mut dinput = vec![0.0; batch * len * c];
        for b in 0..batch {
            for p in 0..out_len {
                let start = (b * len + p * self.stride) * c;
                let src = (b * out_len + p) * pl;
                for (d, s) in dinput[start..start + pl].iter_mut().zip(&dpatches[src..src + pl]) {
                    *d += s;
                }
            }
        }
        dinput
    }
}

/// Single-sample convolution: `input` is `len × conv.in_channels`; returns `out_len × filters`.
pub fn conv1d_forward(conv: &Conv1d, input: &[f64], weights: &[f64], bias: &[f64]) -> Result<Vec<f64>, NetError> {
    if conv.in_channels == 0 || input.len() % conv.in_channels != 0 {
        return Err(NetError::ShapeMismatch("input length is not a multiple of the channel count".into()));
    }
    let len = input.len() / conv.in_channels;
    let out_len = conv.output_len(len)?;
    if weights.len() != conv.weight_len() || bias.len() != conv.filters {
        return Err(NetError::ShapeMismatch(format!(
            "expected {} weights and {} biases, got {} and {}",
            conv.weight_len(),
            conv.filters,
            weights.len(),
            bias.len()
        )));
    }
    let patches = conv.im2col(input, 1, input.len(), 0, len);
    let mut out = vec![0.0; out_len * conv.filters];
    dense_forward(&patches, out_len, weights, bias, &mut out);
    Ok(out)
}

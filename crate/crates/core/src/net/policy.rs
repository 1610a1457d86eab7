//! Gaussian policy: two Conv1D layers and a feature layer over the scan,
//! concatenated with the rest of the observation, two tanh hidden layers and
//! a linear mean head. The log standard deviation is a free 2-vector stored
//! at the end of the parameter vector.

use super::conv::Conv1d;
use super::gaussian::GaussianAction;
use super::init::orthogonal_init;
use super::layers::{dense_backward, dense_forward, dense_tangent, tanh_backward, tanh_inplace};
use super::{Layout, NetError};
use crate::env::obs_dim;
use crate::world::LIDAR_BEAMS;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

pub const LOGSTD_MIN: f64 = -5.0;
pub const LOGSTD_MAX: f64 = 1.0;
const ACTION_DIM: usize = 2;
/// Samples processed per forward/backward chunk.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyArch {
    pub lidar_len: usize,
    /// Non-scan observation entries: velocity, goal and teammates.
    pub extra_dim: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub feature_dim: usize,
    pub hidden: [usize; 2],
}

impl PolicyArch {
    /// Default architecture for a team of `n_robots`.
    pub fn for_team(n_robots: usize) -> Self {
        Self {
            lidar_len: LIDAR_BEAMS,
            extra_dim: obs_dim(n_robots) - LIDAR_BEAMS,
            conv1: ConvSpec { filters: 32, kernel: 5, stride: 2 },
            conv2: ConvSpec { filters: 32, kernel: 3, stride: 2 },
            feature_dim: 128,
            hidden: [128, 128],
        }
    }

    /// A small network (under 500 parameters) with the same structure, for
    /// gradient checks against finite differences.
    pub fn compact(lidar_len: usize, extra_dim: usize) -> Self {
        Self {
            lidar_len,
            extra_dim,
            conv1: ConvSpec { filters: 3, kernel: 3, stride: 2 },
            conv2: ConvSpec { filters: 2, kernel: 3, stride: 1 },
            feature_dim: 6,
            hidden: [6, 6],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.lidar_len + self.extra_dim
    }

    fn conv1(&self) -> Conv1d {
        Conv1d { in_channels: 1, filters: self.conv1.filters, kernel: self.conv1.kernel, stride: self.conv1.stride }
    }

    fn conv2(&self) -> Conv1d {
        Conv1d {
            in_channels: self.conv1.filters,
            filters: self.conv2.filters,
            kernel: self.conv2.kernel,
            stride: self.conv2.stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Blocks {
    c1w: Range<usize>,
    c1b: Range<usize>,
    c2w: Range<usize>,
    c2b: Range<usize>,
    fw: Range<usize>,
    fb: Range<usize>,
    h1w: Range<usize>,
    h1b: Range<usize>,
    h2w: Range<usize>,
    h2b: Range<usize>,
    ow: Range<usize>,
    ob: Range<usize>,
    logstd: Range<usize>,
}

/// Stateless policy network description.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    arch: PolicyArch,
    layout: Layout,
    blocks: Blocks,
    conv1: Conv1d,
    conv2: Conv1d,
    len1: usize,
    len2: usize,
}

/// Intermediate activations of one forward pass, kept for backward/tangent passes.
#[derive(Debug, Clone)]
pub struct PolicyCache {
    pub batch: usize,
    p1: Vec<f64>,
    c1: Vec<f64>,
    p2: Vec<f64>,
    c2: Vec<f64>,
    feat: Vec<f64>,
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    /// Action means, `batch × 2`.
    pub mean: Vec<f64>,
}

fn split_wb<'a>(g: &'a mut [f64], w: &Range<usize>, b: &Range<usize>) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(w.end, b.start);
    let (dw, db) = g[w.start..b.end].split_at_mut(w.len());
    (dw, db)
}

impl PolicyNet {
    pub fn new(arch: PolicyArch) -> Result<Self, NetError> {
        let conv1 = arch.conv1();
        let conv2 = arch.conv2();
        let len1 = conv1.output_len(arch.lidar_len)?;
        let len2 = conv2.output_len(len1)?;
        let mut layout = Layout::default();
        let concat = arch.feature_dim + arch.extra_dim;
        let blocks = Blocks {
            c1w: layout.push("conv1.weight", &[conv1.filters, conv1.patch_len()]),
            c1b: layout.push("conv1.bias", &[conv1.filters]),
            c2w: layout.push("conv2.weight", &[conv2.filters, conv2.patch_len()]),
            c2b: layout.push("conv2.bias", &[conv2.filters]),
            fw: layout.push("feature.weight", &[arch.feature_dim, len2 * conv2.filters]),
            fb: layout.push("feature.bias", &[arch.feature_dim]),
            h1w: layout.push("hidden1.weight", &[arch.hidden[0], concat]),
            h1b: layout.push("hidden1.bias", &[arch.hidden[0]]),
            h2w: layout.push("hidden2.weight", &[arch.hidden[1], arch.hidden[0]]),
            h2b: layout.push("hidden2.bias", &[arch.hidden[1]]),
            ow: layout.push("mean.weight", &[ACTION_DIM, arch.hidden[1]]),
            ob: layout.push("mean.bias", &[ACTION_DIM]),
            logstd: layout.push("logstd", &[ACTION_DIM]),
        };
        Ok(Self { arch, layout, blocks, conv1, conv2, len1, len2 })
    }

    pub fn arch(&self) -> &PolicyArch {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.arch.obs_dim()
    }

    pub fn logstd_range(&self) -> Range<usize> {
        self.blocks.logstd.clone()
    }

    pub fn logstd(&self, theta: &[f64]) -> [f64; 2] {
        let s = &theta[self.blocks.logstd.clone()];
        [s[0], s[1]]
    }

    pub fn clamp_logstd(&self, theta: &mut [f64]) {
        theta[self.blocks.logstd.clone()].iter_mut().for_each(|s| *s = s.clamp(LOGSTD_MIN, LOGSTD_MAX));
    }

    /// Orthogonal weights (gain √2 on tanh layers, 0.01 on the mean head), zero biases.
    pub fn init_params(&self, logstd_init: f64, rng: &mut impl Rng) -> Vec<f64> {
        let mut theta = vec![0.0; self.num_params()];
        let hidden_gain = 2f64.sqrt();
        for (block, gain) in [
            (&self.blocks.c1w, hidden_gain),
            (&self.blocks.c2w, hidden_gain),
            (&self.blocks.fw, hidden_gain),
            (&self.blocks.h1w, hidden_gain),
            (&self.blocks.h2w, hidden_gain),
            (&self.blocks.ow, 0.01),
        ] {
            let entry = self.layout.entries().iter().find(|e| e.range() == *block).expect("block registered");
            let w = orthogonal_init(entry.shape[0], entry.shape[1], gain, rng);
            theta[block.clone()].copy_from_slice(&w);
        }
        theta[self.blocks.logstd.clone()].fill(logstd_init);
        theta
    }

    fn check(&self, theta: &[f64], obs: &[f64], batch: usize) -> Result<(), NetError> {
        if theta.len() != self.num_params() {
            return Err(NetError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        if obs.len() != batch * self.obs_dim() {
            return Err(NetError::ShapeMismatch(format!(
                "expected {batch} observations of length {}, got {} values",
                self.obs_dim(),
                obs.len()
            )));
        }
        Ok(())
    }

    /// Forward pass over `batch` row-major observations, keeping activations.
    pub fn forward(&self, theta: &[f64], obs: &[f64], batch: usize) -> Result<PolicyCache, NetError> {
        self.check(theta, obs, batch)?;
        Ok(self.forward_unchecked(theta, obs, batch))
    }

    fn forward_unchecked(&self, theta: &[f64], obs: &[f64], batch: usize) -> PolicyCache {
        let b = &self.blocks;
        let a = &self.arch;
        let d = self.obs_dim();
        let p1 = self.conv1.im2col(obs, batch, d, 0, a.lidar_len);
        let mut c1 = vec![0.0; batch * self.len1 * self.conv1.filters];
        dense_forward(&p1, batch * self.len1, &theta[b.c1w.clone()], &theta[b.c1b.clone()], &mut c1);
        tanh_inplace(&mut c1);
        let p2 = self.conv2.im2col(&c1, batch, self.len1 * self.conv1.filters, 0, self.len1);
        let mut c2 = vec![0.0; batch * self.len2 * self.conv2.filters];
        dense_forward(&p2, batch * self.len2, &theta[b.c2w.clone()], &theta[b.c2b.clone()], &mut c2);
        tanh_inplace(&mut c2);
        let mut feat = vec![0.0; batch * a.feature_dim];
        dense_forward(&c2, batch, &theta[b.fw.clone()], &theta[b.fb.clone()], &mut feat);
        tanh_inplace(&mut feat);
        let concat = a.feature_dim + a.extra_dim;
        let mut x = vec![0.0; batch * concat];
        for i in 0..batch {
            let row = &mut x[i * concat..(i + 1) * concat];
            row[..a.feature_dim].copy_from_slice(&feat[i * a.feature_dim..(i + 1) * a.feature_dim]);
            row[a.feature_dim..].copy_from_slice(&obs[i * d + a.lidar_len..(i + 1) * d]);
        }
        let mut h1 = vec![0.0; batch * a.hidden[0]];
        dense_forward(&x, batch, &theta[b.h1w.clone()], &theta[b.h1b.clone()], &mut h1);
        tanh_inplace(&mut h1);
        let mut h2 = vec![0.0; batch * a.hidden[1]];
        dense_forward(&h1, batch, &theta[b.h2w.clone()], &theta[b.h2b.clone()], &mut h2);
        tanh_inplace(&mut h2);
        let mut mean = vec![0.0; batch * ACTION_DIM];
        dense_forward(&h2, batch, &theta[b.ow.clone()], &theta[b.ob.clone()], &mut mean);
        PolicyCache { batch, p1, c1, p2, c2, feat, x, h1, h2, mean }
    }

    /// Action means for a batch, `batch × 2`, computed chunk by chunk.
    pub fn means(&self, theta: &[f64], obs: &[f64], batch: usize) -> Result<Vec<f64>, NetError> {
        self.check(theta, obs, batch)?;
        let d = self.obs_dim();
        let mut out = Vec::with_capacity(batch * ACTION_DIM);
        for start in (0..batch).step_by(CHUNK) {
            let n = CHUNK.min(batch - start);
            let cache = self.forward_unchecked(theta, &obs[start * d..(start + n) * d], n);
            out.extend_from_slice(&cache.mean);
        }
        Ok(out)
    }

    /// Action distribution for a single observation.
    pub fn distribution(&self, theta: &[f64], obs: &[f64]) -> Result<GaussianAction, NetError> {
        let m = self.means(theta, obs, 1)?;
        Ok(GaussianAction::new([m[0], m[1]], self.logstd(theta)))
    }

    /// Reverse pass: gradient of a loss whose partials w.r.t. the means are
    /// `dmean` (`batch × 2`) and w.r.t. the log-std are `dlogstd`.
    pub fn backward(&self, theta: &[f64], cache: &PolicyCache, dmean: &[f64], dlogstd: [f64; 2]) -> Vec<f64> {
        let mut grad = vec![0.0; self.num_params()];
        self.backward_into(theta, cache, dmean, &mut grad);
        grad[self.blocks.logstd.clone()].copy_from_slice(&dlogstd);
        grad
    }

    fn backward_into(&self, theta: &[f64], cache: &PolicyCache, dmean: &[f64], grad: &mut [f64]) {
        let b = &self.blocks;
        let a = &self.arch;
        let n = cache.batch;
        assert_eq!(dmean.len(), n * ACTION_DIM, "dmean must be batch × 2");

        let mut dh2 = vec![0.0; n * a.hidden[1]];
        let (dw, db) = split_wb(grad, &b.ow, &b.ob);
        dense_backward(&cache.h2, n, &theta[b.ow.clone()], dmean, dw, db, Some(&mut dh2));
        tanh_backward(&mut dh2, &cache.h2);

        let mut dh1 = vec![0.0; n * a.hidden[0]];
        let (dw, db) = split_wb(grad, &b.h2w, &b.h2b);
        dense_backward(&cache.h1, n, &theta[b.h2w.clone()], &dh2, dw, db, Some(&mut dh1));
        tanh_backward(&mut dh1, &cache.h1);

        let concat = a.feature_dim + a.extra_dim;
        let mut dx = vec![0.0; n * concat];
        let (dw, db) = split_wb(grad, &b.h1w, &b.h1b);
        dense_backward(&cache.x, n, &theta[b.h1w.clone()], &dh1, dw, db, Some(&mut dx));

        let mut dfeat: Vec<f64> = dx.chunks_exact(concat).flat_map(|row| row[..a.feature_dim].iter().copied()).collect();
        tanh_backward(&mut dfeat, &cache.feat);

        let mut dc2 = vec![0.0; cache.c2.len()];
        let (dw, db) = split_wb(grad, &b.fw, &b.fb);
        dense_backward(&cache.c2, n, &theta[b.fw.clone()], &dfeat, dw, db, Some(&mut dc2));
        tanh_backward(&mut dc2, &cache.c2);

        let mut dp2 = vec![0.0; cache.p2.len()];
        let (dw, db) = split_wb(grad, &b.c2w, &b.c2b);
        dense_backward(&cache.p2, n * self.len2, &theta[b.c2w.clone()], &dc2, dw, db, Some(&mut dp2));
        let mut dc1 = self.conv2.col2im(&dp2, n, self.len1);
        tanh_backward(&mut dc1, &cache.c1);

        let (dw, db) = split_wb(grad, &b.c1w, &b.c1b);
        dense_backward(&cache.p1, n * self.len1, &theta[b.c1w.clone()], &dc1, dw, db, None);
    }

    /// Gradient of a batch loss that depends on the policy through its means
    /// and log-std, evaluated chunk by chunk.
    ///
    /// `head(start, means)` receives the means of samples `start..start+len`
    /// and returns `(loss contribution, ∂loss/∂means)` for that chunk.
    /// `dlogstd` is the loss's direct partial w.r.t. the log-std entries.
    pub fn loss_gradient<F>(
        &self,
        theta: &[f64],
        obs: &[f64],
        batch: usize,
        mut head: F,
    ) -> Result<(f64, Vec<f64>), NetError>
    where
        F: FnMut(usize, &[f64]) -> (f64, Vec<f64>),
    {
        self.check(theta, obs, batch)?;
        let d = self.obs_dim();
        let mut grad = vec![0.0; self.num_params()];
        let mut loss = 0.0;
        for start in (0..batch).step_by(CHUNK) {
            let n = CHUNK.min(batch - start);
            let cache = self.forward_unchecked(theta, &obs[start * d..(start + n) * d], n);
            let (l, dmean) = head(start, &cache.mean);
            loss += l;
            self.backward_into(theta, &cache, &dmean, &mut grad);
        }
        Ok((loss, grad))
    }

    /// Forward-mode directional derivative of the means along `tangent`, `batch × 2`.
    pub fn jvp(&self, theta: &[f64], cache: &PolicyCache, tangent: &[f64]) -> Vec<f64> {
        let b = &self.blocks;
        let a = &self.arch;
        let n = cache.batch;
        let t = tangent;

        let mut dc1 = vec![0.0; cache.c1.len()];
        dense_tangent(&cache.p1, None, n * self.len1, &theta[b.c1w.clone()], &t[b.c1w.clone()], &t[b.c1b.clone()], &mut dc1);
        tanh_backward(&mut dc1, &cache.c1);

        let dp2 = self.conv2.im2col(&dc1, n, self.len1 * self.conv1.filters, 0, self.len1);
        let mut dc2 = vec![0.0; cache.c2.len()];
        dense_tangent(&cache.p2, Some(&dp2), n * self.len2, &theta[b.c2w.clone()], &t[b.c2w.clone()], &t[b.c2b.clone()], &mut dc2);
        tanh_backward(&mut dc2, &cache.c2);

        let mut dfeat = vec![0.0; cache.feat.len()];
        dense_tangent(&cache.c2, Some(&dc2), n, &theta[b.fw.clone()], &t[b.fw.clone()], &t[b.fb.clone()], &mut dfeat);
        tanh_backward(&mut dfeat, &cache.feat);

        let concat = a.feature_dim + a.extra_dim;
        let mut dx = vec![0.0; n * concat];
        for i in 0..n {
            dx[i * concat..i * concat + a.feature_dim].copy_from_slice(&dfeat[i * a.feature_dim..(i + 1) * a.feature_dim]);
        }
        let mut dh1 = vec![0.0; cache.h1.len()];
        dense_tangent(&cache.x, Some(&dx), n, &theta[b.h1w.clone()], &t[b.h1w.clone()], &t[b.h1b.clone()], &mut dh1);
        tanh_backward(&mut dh1, &cache.h1);

        let mut dh2 = vec![0.0; cache.h2.len()];
        dense_tangent(&cache.h1, Some(&dh1), n, &theta[b.h2w.clone()], &t[b.h2w.clone()], &t[b.h2b.clone()], &mut dh2);
        tanh_backward(&mut dh2, &cache.h2);

        let mut dmean = vec![0.0; n * ACTION_DIM];
        dense_tangent(&cache.h2, Some(&dh2), n, &theta[b.ow.clone()], &t[b.ow.clone()], &t[b.ob.clone()], &mut dmean);
        dmean
    }

    /// Prepares the reusable state for Fisher-vector products at `theta_old`.
    pub fn fisher_context(&self, theta_old: &[f64], obs: &[f64], batch: usize) -> Result<FisherContext, NetError> {
        self.check(theta_old, obs, batch)?;
        let d = self.obs_dim();
        let chunks = (0..batch)
            .step_by(CHUNK)
            .map(|start| {
                let n = CHUNK.min(batch - start);
                self.forward_unchecked(theta_old, &obs[start * d..(start + n) * d], n)
            })
            .collect();
        Ok(FisherContext { theta_old: theta_old.to_vec(), logstd: self.logstd(theta_old), batch, chunks })
    }

    /// `(H + damping·I)·v` where `H` is the Hessian of the average KL
    /// divergence `KL(π_old ‖ π_θ)` at `θ = θ_old`.
    ///
    /// For a Gaussian with state-independent log-std the Hessian is block
    /// diagonal: `Jᵀ·diag(1/σ²)·J / B` over the mean parameters and `2·I` over
    /// the log-std entries, evaluated here with one tangent and one adjoint pass.
    pub fn fisher_vector_product(&self, ctx: &FisherContext, v: &[f64], damping: f64) -> Vec<f64> {
        assert_eq!(v.len(), self.num_params(), "vector length must match the parameter count");
        let inv_var = [(-2.0 * ctx.logstd[0]).exp(), (-2.0 * ctx.logstd[1]).exp()];
        let scale = 1.0 / ctx.batch as f64;
        let mut out = vec![0.0; self.num_params()];
        for cache in &ctx.chunks {
            let mut u = self.jvp(&ctx.theta_old, cache, v);
            for row in u.chunks_exact_mut(ACTION_DIM) {
                row[0] *= inv_var[0] * scale;
                row[1] *= inv_var[1] * scale;
            }
            self.backward_into(&ctx.theta_old, cache, &u, &mut out);
        }
        for i in self.blocks.logstd.clone() {
            out[i] = 2.0 * v[i];
        }
        for (o, vi) in out.iter_mut().zip(v) {
            *o += damping * vi;
        }
        out
    }
}

/// Forward activations at the old parameters, reused across Fisher-vector products.
#[derive(Debug, Clone)]
pub struct FisherContext {
    theta_old: Vec<f64>,
    logstd: [f64; 2],
    batch: usize,
    chunks: Vec<PolicyCache>,
}

impl FisherContext {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Action means at the old parameters, `batch × 2`.
    pub fn old_means(&self) -> Vec<f64> {
        self.chunks.iter().flat_map(|c| c.mean.iter().copied()).collect()
    }

    pub fn old_logstd(&self) -> [f64; 2] {
        self.logstd
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_shapes() {
        let net = PolicyNet::new(PolicyArch::for_team(3)).unwrap();
        assert_eq!(net.len1, 43);
        assert_eq!(net.len2, 21);
        assert_eq!(net.obs_dim(), 98);
        assert_eq!(net.layout().get("feature.weight").unwrap().shape, vec![128, 672]);
        assert_eq!(net.layout().get("hidden1.weight").unwrap().shape, vec![128, 136]);
    }

    #[test]
    fn zero_params_give_zero_mean() {
        let net = PolicyNet::new(PolicyArch::for_team(3)).unwrap();
        let theta = vec![0.0; net.num_params()];
        let obs: Vec<f64> = (0..98).map(|i| (i as f64 * 0.1).sin()).collect();
        let dist = net.distribution(&theta, &obs).unwrap();
        assert_eq!(dist.mean, [0.0, 0.0]);
    }

    #[test]
    fn forward_is_pure() {
        let net = PolicyNet::new(PolicyArch::for_team(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = net.init_params(-1.0, &mut rng);
        let obs: Vec<f64> = (0..3 * net.obs_dim()).map(|i| (i as f64 * 0.7).cos()).collect();
        let a = net.means(&theta, &obs, 3).unwrap();
        let b = net.means(&theta, &obs, 3).unwrap();
        assert_eq!(a, b);
        // batched and single evaluations agree
        let single = net.means(&theta, &obs[net.obs_dim()..2 * net.obs_dim()], 1).unwrap();
        assert!((single[0] - a[2]).abs() < 1e-14 && (single[1] - a[3]).abs() < 1e-14);
    }

    #[test]
    fn shape_errors() {
        let net = PolicyNet::new(PolicyArch::for_team(3)).unwrap();
        let theta = vec![0.0; net.num_params()];
        assert!(matches!(net.means(&theta, &[0.0; 97], 1), Err(NetError::ShapeMismatch(_))));
        assert!(matches!(net.means(&theta[1..], &[0.0; 98], 1), Err(NetError::ShapeMismatch(_))));
        let tiny = PolicyArch { lidar_len: 4, ..PolicyArch::for_team(3) };
        assert!(PolicyNet::new(tiny).is_err());
    }

    #[test]
    fn logstd_initialized_and_clamped() {
        let net = PolicyNet::new(PolicyArch::for_team(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let init = (0.5f64 * 0.7).ln();
        let mut theta = net.init_params(init, &mut rng);
        assert_eq!(net.logstd(&theta), [init, init]);
        let r = net.logstd_range();
        theta[r.start] = 3.0;
        theta[r.start + 1] = -9.0;
        net.clamp_logstd(&mut theta);
        assert_eq!(net.logstd(&theta), [LOGSTD_MAX, LOGSTD_MIN]);
    }
}

use crate::world::Vec2;
use rand::Rng;
use rand_distr::StandardNormal;

/// `ln(2π)`
pub const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal Gaussian over the 2-D velocity command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianAction {
    pub mean: [f64; 2],
    pub logstd: [f64; 2],
}

impl GaussianAction {
    pub fn new(mean: [f64; 2], logstd: [f64; 2]) -> Self {
        Self { mean, logstd }
    }

    pub fn std(&self) -> [f64; 2] {
        [self.logstd[0].exp(), self.logstd[1].exp()]
    }

    pub fn mean_vec(&self) -> Vec2 {
        Vec2::new(self.mean[0], self.mean[1])
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec2 {
        let s = self.std();
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        Vec2::new(self.mean[0] + s[0] * e0, self.mean[1] + s[1] * e1)
    }
}

/// `Σ_d −(a_d−μ_d)²/(2σ_d²) − log σ_d − ½·log 2π`
pub fn log_prob(dist: &GaussianAction, a: Vec2) -> f64 {
    let a = [a.x, a.y];
    (0..2)
        .map(|d| {
            let z = (a[d] - dist.mean[d]) * (-dist.logstd[d]).exp();
            -0.5 * z * z - dist.logstd[d] - 0.5 * LOG_2PI
        })
        .sum()
}

/// Closed-form `KL(old ‖ new)` between diagonal Gaussians.
pub fn kl_divergence(old: &GaussianAction, new: &GaussianAction) -> f64 {
    (0..2)
        .map(|d| {
            let var_old = (2.0 * old.logstd[d]).exp();
            let var_new = (2.0 * new.logstd[d]).exp();
            let dm = old.mean[d] - new.mean[d];
            new.logstd[d] - old.logstd[d] + (var_old + dm * dm) / (2.0 * var_new) - 0.5
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn log_prob_at_mean() {
        let d = GaussianAction::new([0.3, -0.2], [0.0, 0.0]);
        assert_abs_diff_eq!(log_prob(&d, Vec2::new(0.3, -0.2)), -1.837877, epsilon = 1e-6);
    }

    #[test]
    fn one_sigma_off_costs_half() {
        let d = GaussianAction::new([0.0, 0.0], [-1.0, 0.5]);
        let at_mean = log_prob(&d, Vec2::ZERO);
        let off = log_prob(&d, Vec2::new((-1.0f64).exp(), 0.0));
        assert_abs_diff_eq!(off, at_mean - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn wider_is_less_likely_at_mean() {
        let a = GaussianAction::new([0.0, 0.0], [0.0, 0.0]);
        let b = GaussianAction::new([0.0, 0.0], [0.3, 0.0]);
        assert!(log_prob(&b, Vec2::ZERO) < log_prob(&a, Vec2::ZERO));
    }

    #[test]
    fn kl_mean_shift_unit_sigma() {
        let a = GaussianAction::new([0.0, 0.0], [0.0, 0.0]);
        let b = GaussianAction::new([0.2, -0.1], [0.0, 0.0]);
        assert_abs_diff_eq!(kl_divergence(&a, &b), (0.04 + 0.01) / 2.0, epsilon = 1e-15);
        assert_eq!(kl_divergence(&a, &a), 0.0);
    }

    proptest! {
        #[test]
        fn kl_nonnegative(m in proptest::array::uniform4(-2.0f64..2.0), s in proptest::array::uniform4(-2.0f64..1.0)) {
            let a = GaussianAction::new([m[0], m[1]], [s[0], s[1]]);
            let b = GaussianAction::new([m[2], m[3]], [s[2], s[3]]);
            prop_assert!(kl_divergence(&a, &b) >= -1e-12);
        }
    }
}

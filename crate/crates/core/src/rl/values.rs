use super::lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsStatus};
use crate::net::{NetError, ValueNet};

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFit {
    pub params: Vec<f64>,
    pub loss_before: f64,
    pub loss_after: f64,
    pub status: LbfgsStatus,
}

/// Regresses `net` onto `targets` by minimizing the mean squared error with L-BFGS.
/// The returned parameters never have a higher training loss than `phi`.
pub fn fit_values(
    net: &ValueNet,
    phi: &[f64],
    observations: &[f64],
    targets: &[f64],
    cfg: &LbfgsConfig,
) -> Result<ValueFit, NetError> {
    let (loss_before, _) = net.mse_and_grad(phi, observations, targets)?;
    let r = lbfgs_minimize(
        |p| net.mse_and_grad(p, observations, targets).expect("shapes checked before the fit"),
        phi,
        cfg,
    );
    Ok(ValueFit { params: r.x, loss_before, loss_after: r.f, status: r.status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ValueArch;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_targets_improve() {
        let net = ValueNet::new(ValueArch::new(3, 8));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = net.init_params(&mut rng);
        let obs: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fit = fit_values(&net, &phi, &obs, &[2.5; 20], &LbfgsConfig::default()).unwrap();
        assert!(fit.loss_after < fit.loss_before);
    }

    #[test]
    fn zero_targets_zero_head_stay_zero() {
        let net = ValueNet::new(ValueArch::new(3, 8));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut phi = net.init_params(&mut rng);
        let head = net.layout().get("value.weight").unwrap().range();
        phi[head].fill(0.0);
        let obs: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fit = fit_values(&net, &phi, &obs, &[0.0; 10], &LbfgsConfig::default()).unwrap();
        assert_eq!(fit.loss_before, 0.0);
        assert_eq!(fit.loss_after, 0.0);
    }

    #[test]
    fn recovers_linear_function() {
        let net = ValueNet::new(ValueArch::new(2, 16));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = net.init_params(&mut rng);
        let n = 200;
        let obs: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = obs.chunks(2).map(|o| 0.5 * o[0] - 0.3 * o[1] + 0.1).collect();
        let cfg = LbfgsConfig { max_iters: 300, ..LbfgsConfig::default() };
        let fit = fit_values(&net, &phi, &obs, &y, &cfg).unwrap();
        assert!(fit.loss_after < 1e-3, "mse {}", fit.loss_after);
    }
}

use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{E, PI};

use super::mlp::{Activation, Cache, Mlp};
use crate::error::{invalid, Error, Result};

pub const HIDDEN_GAIN: f64 = 1.0;
pub const POLICY_OUTPUT_GAIN: f64 = 0.01;
pub const CRITIC_OUTPUT_GAIN: f64 = 1.0;
pub const INITIAL_LOG_STD: f64 = -0.5;

/// Diagonal Gaussian over raw actions with a state-independent log std.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(mean: Mlp, log_std: Vec<f64>) -> Result<Self> {
        if mean.output_activation() != Activation::Tanh {
            return Err(invalid("policy mean network must use a tanh head"));
        }
        if log_std.len() != mean.out_dim() {
            return Err(Error::DimensionMismatch { expected: mean.out_dim(), got: log_std.len() });
        }
        if log_std.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(invalid("log_std must not be NaN or +inf"));
        }
        Ok(Self { mean, log_std })
    }

    pub fn init<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut R) -> Result<Self> {
        let mean = Mlp::orthogonal(obs_dim, hidden, act_dim, Activation::Tanh, HIDDEN_GAIN, POLICY_OUTPUT_GAIN, rng)?;
        Self::new(mean, vec![INITIAL_LOG_STD; act_dim])
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.in_dim()
    }

    /// Mean network parameters followed by log std.
    pub fn param_count(&self) -> usize {
        self.mean.param_count() + self.log_std.len()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.mean.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::DimensionMismatch { expected: self.param_count(), got: p.len() });
        }
        let n = self.mean.param_count();
        self.mean.set_params(&p[..n])?;
        self.log_std.copy_from_slice(&p[n..]);
        Ok(())
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.mean.forward(obs)
    }

    /// Draws an unclipped action and returns it with its log density.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let mu = self.mean.forward(obs)?;
        let action: Vec<f64> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(&m, &ls)| {
                let z: f64 = rng.sample(StandardNormal);
                m + ls.exp() * z
            })
            .collect();
        let lp = log_prob(&mu, &self.log_std, &action);
        Ok((action, lp))
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.log_std)
    }
}

/// Log density of a diagonal Gaussian.
pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// Gradients of [`log_prob`] with respect to the mean and the log std.
pub fn log_prob_grads(mean: &[f64], log_std: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut dm = Vec::with_capacity(mean.len());
    let mut ds = Vec::with_capacity(mean.len());
    for ((&m, &ls), &a) in mean.iter().zip(log_std).zip(action) {
        let inv_var = (-2.0 * ls).exp();
        let d = a - m;
        dm.push(d * inv_var);
        ds.push(d * d * inv_var - 1.0);
    }
    (dm, ds)
}

pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (2.0 * PI * E).ln()).sum()
}

/// KL(old || new) between diagonal Gaussians.
pub fn kl_divergence(mean_old: &[f64], log_std_old: &[f64], mean_new: &[f64], log_std_new: &[f64]) -> f64 {
    mean_old
        .iter()
        .zip(log_std_old)
        .zip(mean_new.iter().zip(log_std_new))
        .map(|((&mo, &so), (&mn, &sn))| {
            let var_o = (2.0 * so).exp();
            let var_n = (2.0 * sn).exp();
            sn - so + (var_o + (mo - mn).powi(2)) / (2.0 * var_n) - 0.5
        })
        .sum()
}

/// Scalar state-value network.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: Mlp,
}

impl Critic {
    pub fn new(net: Mlp) -> Result<Self> {
        if net.out_dim() != 1 || net.output_activation() != Activation::Linear {
            return Err(invalid("critic needs a single linear output"));
        }
        Ok(Self { net })
    }

    pub fn init<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Self::new(Mlp::orthogonal(obs_dim, hidden, 1, Activation::Linear, HIDDEN_GAIN, CRITIC_OUTPUT_GAIN, rng)?)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.net.forward(obs)?[0])
    }

    pub fn value_cached(&self, obs: &[f64], cache: &mut Cache) -> Result<f64> {
        self.net.forward_into(obs, cache)?;
        Ok(cache.output()[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::DEFAULT_HIDDEN;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_prob_at_mean() {
        let ls = [-0.5, 0.2, 1.0];
        let mu = [0.1, -0.3, 0.0];
        let want = -(ls.iter().sum::<f64>()) - 1.5 * (2.0 * PI).ln();
        assert!((log_prob(&mu, &ls, &mu) - want).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        let (m, ls) = (0.3, -0.4);
        let h = 1e-3;
        let total: f64 = (-10_000..=10_000)
            .map(|k| log_prob(&[m], &[ls], &[m + k as f64 * h]).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn sample_mean_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pol = GaussianPolicy::init(9, &DEFAULT_HIDDEN, 2, &mut rng).unwrap();
        let obs = [0.1, -0.2, 0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 0.0];
        let mu = pol.mean_action(&obs).unwrap();
        let n = 100_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let (a, _) = pol.sample(&obs, &mut rng).unwrap();
            acc[0] += a[0];
            acc[1] += a[1];
        }
        let sigma = INITIAL_LOG_STD.exp();
        for k in 0..2 {
            assert!((acc[k] / n as f64 - mu[k]).abs() < 4.0 * sigma / (n as f64).sqrt());
        }
    }

    #[test]
    fn vanishing_std_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pol = GaussianPolicy::init(3, &[4], 1, &mut rng).unwrap();
        pol.log_std = vec![f64::NEG_INFINITY];
        let obs = [0.5, 0.1, -0.3];
        let (a, _) = pol.sample(&obs, &mut rng).unwrap();
        assert_eq!(a, pol.mean_action(&obs).unwrap());
    }

    #[test]
    fn log_prob_gradients_match_differences() {
        let mu = [0.2, -0.7];
        let ls = [-0.3, 0.4];
        let a = [0.9, -0.1];
        let (dm, ds) = log_prob_grads(&mu, &ls, &a);
        let h = 1e-6;
        for k in 0..2 {
            let mut up = mu;
            let mut dn = mu;
            up[k] += h;
            dn[k] -= h;
            let fd = (log_prob(&up, &ls, &a) - log_prob(&dn, &ls, &a)) / (2.0 * h);
            assert!((fd - dm[k]).abs() < 1e-7);
            let mut up = ls;
            let mut dn = ls;
            up[k] += h;
            dn[k] -= h;
            let fd = (log_prob(&mu, &up, &a) - log_prob(&mu, &dn, &a)) / (2.0 * h);
            assert!((fd - ds[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn kl_properties() {
        assert_eq!(kl_divergence(&[0.3], &[-0.5], &[0.3], &[-0.5]), 0.0);
        let k = kl_divergence(&[0.0], &[0.0], &[1.0], &[0.0]);
        assert!((k - 0.5).abs() < 1e-15);
        assert!(kl_divergence(&[0.1, 0.2], &[0.0, -1.0], &[-0.4, 0.0], &[0.3, 0.2]) > 0.0);
    }

    #[test]
    fn entropy_of_standard_normal() {
        assert!((entropy(&[0.0]) - 1.4189385332046727).abs() < 1e-14);
    }

    #[test]
    fn initial_actions_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pol = GaussianPolicy::init(9, &DEFAULT_HIDDEN, 1, &mut rng).unwrap();
        let a = pol.mean_action(&[0.0, 0.0, 0.0, 1.0, 0.0, 2.25, 0.0, 1.0, 0.0]).unwrap();
        assert!(a[0].abs() < 0.05);
    }
}

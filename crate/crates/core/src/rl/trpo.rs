use rand::seq::SliceRandom;
use rand::Rng;

use super::buffer::RolloutBuffer;
use crate::error::{invalid, Error, Result};
use crate::nn::mlp::dot;
use crate::nn::policy::{entropy, kl_divergence, log_prob, log_prob_grads};
use crate::nn::{Adam, AdamConfig, Cache, Critic, GaussianPolicy, DEFAULT_HIDDEN};

#[derive(Debug, Clone, PartialEq)]
pub struct TrpoConfig {
    pub batch: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub max_kl: f64,
    /// Regression passes over the batch for the critic.
    pub critic_epochs: usize,
    pub critic_minibatch: usize,
    pub critic_lr: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub backtracks: usize,
    pub budget: u64,
    pub normalize_advantages: bool,
    pub hidden: Vec<usize>,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            batch: 2000,
            gamma: 0.99,
            lambda: 0.98,
            max_kl: 0.01,
            critic_epochs: 20,
            critic_minibatch: 250,
            critic_lr: 1e-3,
            cg_iters: 10,
            cg_damping: 0.1,
            backtracks: 10,
            budget: 100_000,
            normalize_advantages: true,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

impl TrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_kl > 0.0) {
            return Err(invalid("trpo max_kl must be positive"));
        }
        if self.cg_iters == 0 {
            return Err(invalid("trpo cg_iters must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid("trpo gamma must lie in (0, 1] and lambda in [0, 1]"));
        }
        if self.batch == 0 || self.critic_minibatch == 0 || self.critic_epochs == 0 {
            return Err(invalid("trpo batch, critic_minibatch and critic_epochs must be positive"));
        }
        if !(self.cg_damping >= 0.0) {
            return Err(invalid("trpo cg_damping must be non-negative"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden layer widths must be positive"));
        }
        AdamConfig::with_lr(self.critic_lr).validate()
    }
}

/// Conjugate gradient for `A x = b` with `A` symmetric positive definite,
/// given only the product `x -> A x`.
pub fn conjugate_gradient<F>(mut apply: F, b: &[f64], iters: usize, tol: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    for _ in 0..iters {
        if rr <= tol {
            break;
        }
        let ap = apply(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrpoStats {
    pub accepted: bool,
    /// Measured mean KL of the accepted step (0 when rejected).
    pub kl: f64,
    pub surrogate_gain: f64,
    /// Fraction of the full natural step that was taken.
    pub step_fraction: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct TrpoLearner {
    pub policy: GaussianPolicy,
    pub critic: Critic,
    pub config: TrpoConfig,
    critic_opt: Adam,
}

impl TrpoLearner {
    pub fn new(policy: GaussianPolicy, critic: Critic, config: TrpoConfig) -> Result<Self> {
        config.validate()?;
        let critic_opt = Adam::new(critic.net.param_count(), AdamConfig::with_lr(config.critic_lr));
        Ok(Self { policy, critic, config, critic_opt })
    }

    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &mut RolloutBuffer, rng: &mut R) -> Result<TrpoStats> {
        trpo_update(self, buffer, rng)
    }
}

struct Batch {
    caches: Vec<Cache>,
    means: Vec<Vec<f64>>,
}

fn forward_batch(policy: &GaussianPolicy, buffer: &RolloutBuffer) -> Result<Batch> {
    let mut caches = Vec::with_capacity(buffer.len());
    let mut means = Vec::with_capacity(buffer.len());
    for t in &buffer.transitions {
        let c = policy.mean.forward_cached(t.obs.as_slice())?;
        means.push(c.output().to_vec());
        caches.push(c);
    }
    Ok(Batch { caches, means })
}

fn surrogate(policy: &GaussianPolicy, buffer: &RolloutBuffer, adv: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut total = 0.0;
    let mut means = Vec::with_capacity(buffer.len());
    for (t, a) in buffer.transitions.iter().zip(adv) {
        let mu = policy.mean.forward(t.obs.as_slice())?;
        total += (log_prob(&mu, &policy.log_std, &t.action) - t.log_prob).exp() * a;
        means.push(mu);
    }
    Ok((total / buffer.len() as f64, means))
}

fn mean_kl(old_means: &[Vec<f64>], old_log_std: &[f64], new_means: &[Vec<f64>], new_log_std: &[f64]) -> f64 {
    let total: f64 =
        old_means.iter().zip(new_means).map(|(mo, mn)| kl_divergence(mo, old_log_std, mn, new_log_std)).sum();
    total / old_means.len() as f64
}

/// Fisher-vector product of the mean KL at the current policy, plus damping.
fn fisher_vector_product(policy: &GaussianPolicy, batch: &Batch, v: &[f64], damping: f64) -> Result<Vec<f64>> {
    let n_mean = policy.mean.param_count();
    let (v_mean, v_ls) = v.split_at(n_mean);
    let inv_var: Vec<f64> = policy.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let mut out = vec![0.0; v.len()];
    let scale = 1.0 / batch.caches.len() as f64;
    for cache in &batch.caches {
        let jv = policy.mean.jvp(cache, v_mean)?;
        let u: Vec<f64> = jv.iter().zip(&inv_var).map(|(j, w)| scale * j * w).collect();
        policy.mean.backward(cache, &u, &mut out[..n_mean])?;
    }
    for (o, &vl) in out[n_mean..].iter_mut().zip(v_ls) {
        *o = 2.0 * vl;
    }
    for (o, &vi) in out.iter_mut().zip(v) {
        *o += damping * vi;
    }
    Ok(out)
}

pub fn trpo_update<R: Rng + ?Sized>(
    learner: &mut TrpoLearner,
    buffer: &mut RolloutBuffer,
    rng: &mut R,
) -> Result<TrpoStats> {
    if buffer.is_empty() {
        return Err(Error::Empty("rollout buffer"));
    }
    let cfg = learner.config.clone();
    if !buffer.is_finalized() {
        buffer.finalize(cfg.gamma, cfg.lambda)?;
    }
    let adv = buffer.training_advantages(cfg.normalize_advantages)?;
    let returns = buffer.returns()?.to_vec();
    let n = buffer.len();
    let policy = &learner.policy;
    let n_mean = policy.mean.param_count();
    let act_dim = policy.act_dim();

    let batch = forward_batch(policy, buffer)?;
    let mut grad = vec![0.0; policy.param_count()];
    let mut upstream = vec![0.0; act_dim];
    for (i, t) in buffer.transitions.iter().enumerate() {
        let mu = &batch.means[i];
        let ratio = (log_prob(mu, &policy.log_std, &t.action) - t.log_prob).exp();
        let w = ratio * adv[i] / n as f64;
        let (dmu, dls) = log_prob_grads(mu, &policy.log_std, &t.action);
        for k in 0..act_dim {
            upstream[k] = w * dmu[k];
            grad[n_mean + k] += w * dls[k];
        }
        policy.mean.backward(&batch.caches[i], &upstream, &mut grad[..n_mean])?;
    }

    let mut stats = TrpoStats::default();
    let old_params = policy.flat_params();
    let old_log_std = policy.log_std.clone();
    if dot(&grad, &grad) > 0.0 {
        let x = conjugate_gradient(
            |v| fisher_vector_product(policy, &batch, v, cfg.cg_damping),
            &grad,
            cfg.cg_iters,
            1e-10,
        )?;
        let shs = 0.5 * dot(&x, &fisher_vector_product(policy, &batch, &x, cfg.cg_damping)?);
        if shs > 0.0 && shs.is_finite() {
            let step_scale = (cfg.max_kl / shs).sqrt();
            let (base, _) = surrogate(policy, buffer, &adv)?;
            let mut trial = policy.clone();
            let mut frac = 1.0;
            for _ in 0..cfg.backtracks.max(1) {
                let p: Vec<f64> = old_params.iter().zip(&x).map(|(o, d)| o + frac * step_scale * d).collect();
                trial.set_flat_params(&p)?;
                let (value, new_means) = surrogate(&trial, buffer, &adv)?;
                let kl = mean_kl(&batch.means, &old_log_std, &new_means, &trial.log_std);
                if value > base && kl <= cfg.max_kl && p.iter().all(|v| v.is_finite()) {
                    stats = TrpoStats {
                        accepted: true,
                        kl,
                        surrogate_gain: value - base,
                        step_fraction: frac,
                        ..stats
                    };
                    break;
                }
                frac *= 0.5;
            }
            if stats.accepted {
                learner.policy = trial;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut cgrad = vec![0.0; learner.critic.net.param_count()];
    let mut cache = Cache::default();
    for _ in 0..cfg.critic_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.critic_minibatch.min(n)) {
            cgrad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let v = learner.critic.value_cached(buffer.transitions[i].obs.as_slice(), &mut cache)?;
                learner.critic.net.backward(&cache, &[2.0 * scale * (v - returns[i])], &mut cgrad)?;
            }
            learner.critic_opt.step(learner.critic.net.params_mut(), &cgrad)?;
        }
    }
    if !learner.critic.net.params().iter().all(|p| p.is_finite()) {
        return Err(Error::UpdateFailed("non-finite critic parameters after TRPO update".into()));
    }
    let mut vl = 0.0;
    for (t, r) in buffer.transitions.iter().zip(&returns) {
        vl += (learner.critic.value(t.obs.as_slice())? - r).powi(2);
    }
    stats.value_loss = vl / n as f64;
    stats.entropy = entropy(&learner.policy.log_std);
    Ok(stats)
}

use rand::seq::SliceRandom;
use rand::Rng;

use super::buffer::RolloutBuffer;
use crate::error::{invalid, Error, Result};
use crate::nn::policy::{entropy, log_prob, log_prob_grads};
use crate::nn::{Adam, AdamConfig, Cache, Critic, GaussianPolicy, DEFAULT_HIDDEN};

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub horizon: usize,
    pub minibatch: usize,
    pub gamma: f64,
    pub clip: f64,
    pub lambda: f64,
    pub vf_coef: f64,
    pub entropy_coef: f64,
    pub epochs: usize,
    pub lr: f64,
    pub budget: u64,
    pub normalize_advantages: bool,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            horizon: 20_000,
            minibatch: 4096,
            gamma: 0.95,
            clip: 0.2,
            lambda: 0.95,
            vf_coef: 0.5,
            entropy_coef: 0.0,
            epochs: 20,
            lr: 2e-4,
            budget: 150_000,
            normalize_advantages: true,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid("ppo gamma must lie in (0, 1]"));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(invalid("ppo clip must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid("ppo lambda must lie in [0, 1]"));
        }
        if self.horizon == 0 || self.minibatch == 0 || self.minibatch > self.horizon {
            return Err(invalid("ppo needs 1 <= minibatch <= horizon"));
        }
        if self.epochs == 0 {
            return Err(invalid("ppo epochs must be at least 1"));
        }
        if !(self.vf_coef >= 0.0 && self.entropy_coef >= 0.0) {
            return Err(invalid("ppo loss coefficients must be non-negative"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden layer widths must be positive"));
        }
        AdamConfig::with_lr(self.lr).validate()
    }
}

/// One term of the clipped surrogate objective.
pub fn ppo_surrogate(log_prob_new: f64, log_prob_old: f64, advantage: f64, clip: f64) -> f64 {
    let r = (log_prob_new - log_prob_old).exp();
    (r * advantage).min(r.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Derivative of [`ppo_surrogate`] with respect to `log_prob_new`.
pub fn ppo_surrogate_grad(log_prob_new: f64, log_prob_old: f64, advantage: f64, clip: f64) -> f64 {
    let r = (log_prob_new - log_prob_old).exp();
    if r * advantage <= r.clamp(1.0 - clip, 1.0 + clip) * advantage {
        r * advantage
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    /// Mean probability ratio on the batch after the update.
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
}

/// Actor, critic and their optimizer states.
#[derive(Debug, Clone)]
pub struct PpoLearner {
    pub policy: GaussianPolicy,
    pub critic: Critic,
    pub config: PpoConfig,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl PpoLearner {
    pub fn new(policy: GaussianPolicy, critic: Critic, config: PpoConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamConfig::with_lr(config.lr);
        Ok(Self {
            actor_opt: Adam::new(policy.param_count(), adam),
            critic_opt: Adam::new(critic.net.param_count(), adam),
            policy,
            critic,
            config,
        })
    }

    /// Finalizes `buffer` and runs the clipped-surrogate epochs over it.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &mut RolloutBuffer, rng: &mut R) -> Result<PpoStats> {
        ppo_update(self, buffer, rng)
    }
}

pub fn ppo_update<R: Rng + ?Sized>(
    learner: &mut PpoLearner,
    buffer: &mut RolloutBuffer,
    rng: &mut R,
) -> Result<PpoStats> {
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
    let mb = cfg.minibatch.min(n);
    let act_dim = learner.policy.act_dim();
    let n_mean = learner.policy.mean.param_count();

    let mut order: Vec<usize> = (0..n).collect();
    let mut actor_grad = vec![0.0; learner.policy.param_count()];
    let mut critic_grad = vec![0.0; learner.critic.net.param_count()];
    let mut cache = Cache::default();
    let mut upstream = vec![0.0; act_dim];

    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            actor_grad.iter_mut().for_each(|g| *g = 0.0);
            critic_grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let log_std = learner.policy.log_std.clone();
            for &i in chunk {
                let t = &buffer.transitions[i];
                let obs = t.obs.as_slice();

                learner.policy.mean.forward_into(obs, &mut cache)?;
                let mu = cache.output().to_vec();
                let lp = log_prob(&mu, &log_std, &t.action);
                let g = ppo_surrogate_grad(lp, t.log_prob, adv[i], cfg.clip);
                if g != 0.0 {
                    let (dmu, dls) = log_prob_grads(&mu, &log_std, &t.action);
                    for k in 0..act_dim {
                        upstream[k] = -scale * g * dmu[k];
                        actor_grad[n_mean + k] -= scale * g * dls[k];
                    }
                    learner.policy.mean.backward(&cache, &upstream, &mut actor_grad[..n_mean])?;
                }

                let v = learner.critic.value_cached(obs, &mut cache)?;
                let dv = 2.0 * cfg.vf_coef * scale * (v - returns[i]);
                learner.critic.net.backward(&cache, &[dv], &mut critic_grad)?;
            }
            if cfg.entropy_coef > 0.0 {
                for k in 0..act_dim {
                    actor_grad[n_mean + k] -= cfg.entropy_coef;
                }
            }

            let mut params = learner.policy.flat_params();
            learner.actor_opt.step(&mut params, &actor_grad)?;
            learner.policy.set_flat_params(&params)?;
            learner.critic_opt.step(learner.critic.net.params_mut(), &critic_grad)?;
        }
    }

    let finite = learner.policy.flat_params().iter().all(|p| p.is_finite())
        && learner.critic.net.params().iter().all(|p| p.is_finite());
    if !finite {
        return Err(Error::UpdateFailed("non-finite parameters after PPO update".into()));
    }

    let mut stats = PpoStats { entropy: entropy(&learner.policy.log_std), ..PpoStats::default() };
    for (i, t) in buffer.transitions.iter().enumerate() {
        let obs = t.obs.as_slice();
        let mu = learner.policy.mean.forward(obs)?;
        let lp = log_prob(&mu, &learner.policy.log_std, &t.action);
        let r = (lp - t.log_prob).exp();
        stats.mean_ratio += r;
        if (r - 1.0).abs() > cfg.clip {
            stats.clip_fraction += 1.0;
        }
        stats.approx_kl += t.log_prob - lp;
        let v = learner.critic.value(obs)?;
        stats.value_loss += (v - returns[i]).powi(2);
    }
    let nf = n as f64;
    stats.mean_ratio /= nf;
    stats.clip_fraction /= nf;
    stats.approx_kl /= nf;
    stats.value_loss /= nf;
    Ok(stats)
}

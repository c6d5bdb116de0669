use crate::env::Observation;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    /// Unclipped sample from the policy.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// Generalized advantage estimates and value targets.
///
/// `bootstrap` is the value of the state after the last transition; it is
/// ignored when that transition ends an episode.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: values.len() });
    }
    if dones.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: dones.len() });
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lambda) {
        return Err(invalid("gamma and lambda must lie in [0, 1]"));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Scales to zero mean and unit standard deviation; a constant input maps to zeros.
pub fn normalize(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        vec![0.0; xs.len()]
    } else {
        xs.iter().map(|x| (x - mean) / std).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub bootstrap: f64,
    advantages: Option<Vec<f64>>,
    returns: Option<Vec<f64>>,
}

impl RolloutBuffer {
    pub fn new(transitions: Vec<Transition>, bootstrap: f64) -> Self {
        Self { transitions, bootstrap, advantages: None, returns: None }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn finalize(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let rewards: Vec<f64> = self.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = self.transitions.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = self.transitions.iter().map(|t| t.done).collect();
        let (adv, ret) = compute_gae(&rewards, &values, &dones, self.bootstrap, gamma, lambda)?;
        self.advantages = Some(adv);
        self.returns = Some(ret);
        Ok(())
    }

    pub fn is_finalized(&self) -> bool {
        self.advantages.is_some()
    }

    pub fn advantages(&self) -> Result<&[f64]> {
        self.advantages.as_deref().ok_or_else(|| invalid("rollout buffer not finalized"))
    }

    pub fn returns(&self) -> Result<&[f64]> {
        self.returns.as_deref().ok_or_else(|| invalid("rollout buffer not finalized"))
    }

    /// Advantages used by the policy loss, optionally standardized.
    pub fn training_advantages(&self, normalize_advantages: bool) -> Result<Vec<f64>> {
        let adv = self.advantages()?;
        Ok(if normalize_advantages { normalize(adv) } else { adv.to_vec() })
    }
}

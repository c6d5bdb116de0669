use super::ppo::{PpoConfig, PpoLearner, PpoStats};
use super::runner::{collect_rollout, seeded, EpisodeRecord, Runner};
use super::trpo::{TrpoConfig, TrpoLearner, TrpoStats};
use crate::env::{EnvConfig, OBS_DIM};
use crate::error::Result;
use crate::nn::{Critic, GaussianPolicy};

const INIT_STREAM: u64 = 0;
const ROLLOUT_STREAM: u64 = 1;
const UPDATE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum Algo {
    Ppo(PpoConfig),
    Trpo(TrpoConfig),
}

impl Algo {
    pub fn name(&self) -> &'static str {
        match self {
            Algo::Ppo(_) => "ppo",
            Algo::Trpo(_) => "trpo",
        }
    }

    pub fn budget(&self) -> u64 {
        match self {
            Algo::Ppo(c) => c.budget,
            Algo::Trpo(c) => c.budget,
        }
    }

    fn hidden(&self) -> &[usize] {
        match self {
            Algo::Ppo(c) => &c.hidden,
            Algo::Trpo(c) => &c.hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateStats {
    Ppo(PpoStats),
    Trpo(TrpoStats),
}

/// Progress passed to the per-update callback.
pub struct UpdateEvent<'a> {
    pub index: usize,
    pub timestep: u64,
    pub stats: UpdateStats,
    pub policy: &'a GaussianPolicy,
    pub critic: &'a Critic,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: GaussianPolicy,
    pub critic: Critic,
    pub curve: Vec<EpisodeRecord>,
    pub updates: Vec<UpdateStats>,
    pub timesteps: u64,
}

/// Fresh actor and critic for `env`, drawn from the seed's init stream.
pub fn init_agent(env: &EnvConfig, hidden: &[usize], seed: u64) -> Result<(GaussianPolicy, Critic)> {
    let mut rng = seeded(seed, INIT_STREAM);
    let policy = GaussianPolicy::init(OBS_DIM, hidden, env.action_mode.action_dim(), &mut rng)?;
    let critic = Critic::init(OBS_DIM, hidden, &mut rng)?;
    Ok((policy, critic))
}

enum Learner {
    Ppo(Box<PpoLearner>),
    Trpo(Box<TrpoLearner>),
}

/// Trains until the step budget is spent. `on_update` runs after every
/// policy update.
pub fn train<F>(env: &EnvConfig, algo: &Algo, seed: u64, mut on_update: F) -> Result<TrainOutcome>
where
    F: FnMut(&UpdateEvent<'_>) -> Result<()>,
{
    env.validate()?;
    let (policy, critic) = init_agent(env, algo.hidden(), seed)?;
    let (mut learner, horizon) = match algo {
        Algo::Ppo(c) => (Learner::Ppo(Box::new(PpoLearner::new(policy, critic, c.clone())?)), c.horizon),
        Algo::Trpo(c) => (Learner::Trpo(Box::new(TrpoLearner::new(policy, critic, c.clone())?)), c.batch),
    };
    let mut runner = Runner::new(*env, seeded(seed, ROLLOUT_STREAM))?;
    let mut update_rng = seeded(seed, UPDATE_STREAM);
    let budget = algo.budget();
    let mut updates = Vec::new();

    while runner.total_steps < budget {
        let h = horizon.min((budget - runner.total_steps) as usize);
        let (stats, policy, critic) = match &mut learner {
            Learner::Ppo(l) => {
                let mut buf = collect_rollout(&l.policy, &l.critic, &mut runner, h)?;
                let s = l.update(&mut buf, &mut update_rng)?;
                (UpdateStats::Ppo(s), &l.policy, &l.critic)
            }
            Learner::Trpo(l) => {
                let mut buf = collect_rollout(&l.policy, &l.critic, &mut runner, h)?;
                let s = l.update(&mut buf, &mut update_rng)?;
                (UpdateStats::Trpo(s), &l.policy, &l.critic)
            }
        };
        on_update(&UpdateEvent { index: updates.len(), timestep: runner.total_steps, stats, policy, critic })?;
        updates.push(stats);
    }

    let (policy, critic) = match learner {
        Learner::Ppo(l) => (l.policy, l.critic),
        Learner::Trpo(l) => (l.policy, l.critic),
    };
    Ok(TrainOutcome { policy, critic, curve: runner.episodes, updates, timesteps: runner.total_steps })
}

/// Windowed mean of the last `window` episode returns.
pub fn final_window_mean(curve: &[EpisodeRecord], window: usize) -> Option<f64> {
    if curve.is_empty() || window == 0 {
        return None;
    }
    let tail = &curve[curve.len().saturating_sub(window)..];
    Some(tail.iter().map(|e| e.episode_return).sum::<f64>() / tail.len() as f64)
}

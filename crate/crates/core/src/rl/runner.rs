use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::buffer::{RolloutBuffer, Transition};
use crate::env::{EnvConfig, Observation, SnakeEnv};
use crate::error::{invalid, Result};
use crate::metrics::{Trace, TraceMeta};
use crate::nn::{Critic, GaussianPolicy};

/// One finished training episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    /// Global environment step count at the end of the episode.
    pub timestep: u64,
    pub episode_return: f64,
    pub episode_length: usize,
    pub reached_goal: bool,
}

/// Environment plus sampling state carried across rollouts.
#[derive(Debug, Clone)]
pub struct Runner {
    env: SnakeEnv,
    obs: Observation,
    rng: ChaCha8Rng,
    episode_return: f64,
    episode_length: usize,
    pub total_steps: u64,
    pub episodes: Vec<EpisodeRecord>,
}

impl Runner {
    pub fn new(config: EnvConfig, rng: ChaCha8Rng) -> Result<Self> {
        let mut env = SnakeEnv::new(config)?;
        let obs = env.reset(0)?;
        Ok(Self {
            env,
            obs,
            rng,
            episode_return: 0.0,
            episode_length: 0,
            total_steps: 0,
            episodes: Vec::new(),
        })
    }

    pub fn env(&self) -> &SnakeEnv {
        &self.env
    }
}

/// Steps the environment `horizon` times under the stochastic policy,
/// resetting after every finished episode.
pub fn collect_rollout(
    policy: &GaussianPolicy,
    critic: &Critic,
    runner: &mut Runner,
    horizon: usize,
) -> Result<RolloutBuffer> {
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    let mut transitions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let obs = runner.obs;
        let value = critic.value(obs.as_slice())?;
        let (action, log_prob) = policy.sample(obs.as_slice(), &mut runner.rng)?;
        let out = runner.env.step(&action)?;
        runner.total_steps += 1;
        runner.episode_return += out.reward;
        runner.episode_length += 1;
        transitions.push(Transition { obs, action, log_prob, reward: out.reward, value, done: out.done });
        if out.done {
            runner.episodes.push(EpisodeRecord {
                timestep: runner.total_steps,
                episode_return: runner.episode_return,
                episode_length: runner.episode_length,
                reached_goal: out.info.reached_goal,
            });
            runner.episode_return = 0.0;
            runner.episode_length = 0;
            runner.obs = runner.env.reset(0)?;
        } else {
            runner.obs = out.observation;
        }
    }
    let last_done = transitions.last().is_some_and(|t| t.done);
    let bootstrap = if last_done { 0.0 } else { critic.value(runner.obs.as_slice())? };
    Ok(RolloutBuffer::new(transitions, bootstrap))
}

/// Something that picks joint speeds each control step.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// Constant wave speed, rad/s.
    Serpenoid { speed: f64 },
    /// Mean action of a trained policy.
    Policy(&'a GaussianPolicy),
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub trace: Trace,
    pub episode_return: f64,
    pub reached_goal: bool,
    pub time_to_goal: Option<f64>,
}

/// Runs one deterministic episode and records every step.
pub fn run_episode(controller: Controller<'_>, config: &EnvConfig) -> Result<EpisodeResult> {
    let mut env = SnakeEnv::new(*config)?;
    let mut obs = env.reset(0)?;
    let mut trace = Trace::start(TraceMeta::from_config(config), config, env.state().unwrap());
    let constant = match controller {
        Controller::Serpenoid { speed } => Some(vec![speed; config.n_joints]),
        Controller::Policy(p) => {
            if p.act_dim() != env.action_dim() {
                return Err(invalid(format!(
                    "policy outputs {} actions but the environment expects {}",
                    p.act_dim(),
                    env.action_dim()
                )));
            }
            None
        }
    };
    loop {
        let out = match (&constant, controller) {
            (Some(speeds), _) => env.step_speeds(speeds)?,
            (None, Controller::Policy(p)) => env.step(&p.mean_action(obs.as_slice())?)?,
            (None, Controller::Serpenoid { .. }) => unreachable!(),
        };
        trace.push(&out);
        obs = out.observation;
        if out.done {
            let time_to_goal = out.info.reached_goal.then_some(out.info.time);
            return Ok(EpisodeResult {
                episode_return: trace.episode_return(),
                reached_goal: out.info.reached_goal,
                time_to_goal,
                trace,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub mean_return: f64,
    pub success_rate: f64,
    /// Mean over successful episodes.
    pub mean_time_to_goal: Option<f64>,
}

/// Deterministic (mean-action) evaluation.
///
/// Resets are fixed and the dynamics are deterministic, so every episode is
/// identical; `seed` is accepted for interface symmetry with training.
pub fn evaluate_policy(policy: &GaussianPolicy, config: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalSummary> {
    evaluate(Controller::Policy(policy), config, episodes, seed)
}

pub fn evaluate(controller: Controller<'_>, config: &EnvConfig, episodes: usize, _seed: u64) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(invalid("need at least one evaluation episode"));
    }
    let results = (0..episodes).map(|_| run_episode(controller, config)).collect::<Result<Vec<_>>>()?;
    let n = episodes as f64;
    let times: Vec<f64> = results.iter().filter_map(|r| r.time_to_goal).collect();
    Ok(EvalSummary {
        mean_return: results.iter().map(|r| r.episode_return).sum::<f64>() / n,
        success_rate: results.iter().filter(|r| r.reached_goal).count() as f64 / n,
        mean_time_to_goal: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
    })
}

pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DEFAULT_HIDDEN;

    fn agent(seed: u64) -> (GaussianPolicy, Critic) {
        let mut rng = seeded(seed, 0);
        (
            GaussianPolicy::init(9, &DEFAULT_HIDDEN, 1, &mut rng).unwrap(),
            Critic::init(9, &DEFAULT_HIDDEN, &mut rng).unwrap(),
        )
    }

    #[test]
    fn horizon_one() {
        let (p, c) = agent(0);
        let mut r = Runner::new(EnvConfig::default(), seeded(0, 1)).unwrap();
        let buf = collect_rollout(&p, &c, &mut r, 1).unwrap();
        assert_eq!(buf.len(), 1);
        assert!(collect_rollout(&p, &c, &mut r, 0).is_err());
    }

    #[test]
    fn deterministic_policy_collections_match() {
        let (mut p, c) = agent(3);
        p.log_std = vec![f64::NEG_INFINITY];
        let collect = |seed| {
            let mut r = Runner::new(EnvConfig::default(), seeded(seed, 1)).unwrap();
            collect_rollout(&p, &c, &mut r, 40).unwrap().transitions
        };
        let a: Vec<_> = collect(1).into_iter().map(|t| (t.obs, t.action, t.reward)).collect();
        let b: Vec<_> = collect(2).into_iter().map(|t| (t.obs, t.action, t.reward)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn stationary_returns_are_geometric() {
        let mut cfg = EnvConfig::default();
        cfg.gait.amplitude = 0.0;
        cfg.episode.heading_gain = 0.0;
        cfg.episode.max_steps = 25;
        let (p, mut c) = agent(4);
        c.net.params_mut().iter_mut().for_each(|w| *w = 0.0);
        let mut r = Runner::new(cfg, seeded(4, 1)).unwrap();
        let mut buf = collect_rollout(&p, &c, &mut r, 25).unwrap();
        buf.finalize(0.95, 1.0).unwrap();
        for (t, ret) in buf.returns().unwrap().iter().enumerate() {
            let left = 25 - t;
            let want = -(1.0 - 0.95f64.powi(left as i32)) / (1.0 - 0.95);
            assert!((ret - want).abs() < 1e-9, "t={t}: {ret} vs {want}");
        }
        assert_eq!(r.episodes.len(), 1);
        assert_eq!(r.episodes[0].episode_length, 25);
    }

    #[test]
    fn zero_policy_never_arrives() {
        let mut cfg = EnvConfig::default();
        cfg.gait.amplitude = 0.0;
        cfg.episode.max_steps = 50;
        let (p, _) = agent(5);
        let s = evaluate_policy(&p, &cfg, 2, 0).unwrap();
        assert!((s.mean_return + 50.0).abs() < 1e-9);
        assert_eq!(s.success_rate, 0.0);
        assert_eq!(s.mean_time_to_goal, None);
        assert_eq!(evaluate_policy(&p, &cfg, 2, 9).unwrap(), s);
    }

    #[test]
    fn serpenoid_controller_succeeds() {
        let cfg = EnvConfig::default();
        let s = evaluate(Controller::Serpenoid { speed: cfg.gait.speed }, &cfg, 1, 0).unwrap();
        assert_eq!(s.success_rate, 1.0);
    }
}

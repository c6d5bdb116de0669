//! Clipped-surrogate PPO and trust-region TRPO over [`SnakeEnv`](crate::env::SnakeEnv).

pub mod buffer;
pub mod ppo;
pub mod runner;
pub mod train;
pub mod trpo;

pub use buffer::{compute_gae, RolloutBuffer, Transition};
pub use ppo::{ppo_surrogate, ppo_update, PpoConfig, PpoLearner, PpoStats};
pub use runner::{
    collect_rollout, evaluate, evaluate_policy, run_episode, Controller, EpisodeRecord, EpisodeResult, EvalSummary,
    Runner,
};
pub use train::{final_window_mean, init_agent, train, Algo, TrainOutcome, UpdateEvent, UpdateStats};
pub use trpo::{conjugate_gradient, trpo_update, TrpoConfig, TrpoLearner, TrpoStats};

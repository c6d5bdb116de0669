//! Goal-reaching environment around the snake chain.
//!
//! The agent commands serpenoid wave speeds; amplitude and phase lag stay at
//! the gait defaults. A small heading-hold bias keeps the body pointed at the
//! target so that every controller, scripted or learned, is compared on
//! forward locomotion rather than on open-loop drift.

use crate::dynamics::{
    advance, build_robot, Actuation, DynamicsConfig, FrictionModel, Geometry, RobotState, ServoGains,
};
use crate::error::{invalid, Error, Result};
use crate::gait::{joint_target, GaitParams};
use crate::math::{wrap_angle, Vec2};

pub const OBS_DIM: usize = 9;

/// The 9 observation channels, in order.
pub const OBS_NAMES: [&str; OBS_DIM] = [
    "head_x",
    "head_y",
    "head_sin",
    "head_cos",
    "centroid_x",
    "centroid_y",
    "centroid_sin",
    "centroid_cos",
    "centroid_forward_velocity",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn head(&self) -> Vec2 {
        Vec2::new(self.0[0], self.0[1])
    }

    pub fn centroid(&self) -> Vec2 {
        Vec2::new(self.0[4], self.0[5])
    }

    pub fn forward_velocity(&self) -> f64 {
        self.0[8]
    }
}

/// How raw policy outputs map onto joint speeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    /// One speed shared by every joint.
    SharedSpeed,
    /// `n` speeds interpolated linearly from head to tail.
    PerGroup(usize),
}

impl ActionMode {
    pub fn action_dim(&self) -> usize {
        match *self {
            ActionMode::SharedSpeed => 1,
            ActionMode::PerGroup(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub target: Vec2,
    pub goal_radius: f64,
    pub max_steps: usize,
    pub lateral_bound: f64,
    pub lateral_penalty: f64,
    pub goal_reward: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Heading-hold gain, rad of joint bias per rad of bearing error.
    pub heading_gain: f64,
    /// Clamp on the heading-hold bias, rad.
    pub steer_limit: f64,
    /// Wave phase at reset, rad. A value of pi mirrors the default gait.
    pub initial_phase: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            target: Vec2::new(0.0, -10.0),
            goal_radius: 0.5,
            max_steps: 3000,
            lateral_bound: 1.5,
            lateral_penalty: -100.0,
            goal_reward: 100.0,
            omega_min: 0.1,
            omega_max: 6.0,
            heading_gain: 0.3,
            steer_limit: 0.15,
            initial_phase: 0.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.goal_radius > 0.0) {
            return Err(invalid("goal_radius must be positive"));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be at least 1"));
        }
        if !(self.omega_min > 0.0 && self.omega_min < self.omega_max) {
            return Err(invalid("omega range needs 0 < omega_min < omega_max"));
        }
        if !(self.lateral_bound > 0.0) {
            return Err(invalid("lateral_bound must be positive"));
        }
        if !(self.heading_gain >= 0.0 && self.steer_limit >= 0.0) {
            return Err(invalid("heading_gain and steer_limit must be non-negative"));
        }
        if !self.initial_phase.is_finite() {
            return Err(invalid("initial_phase must be finite"));
        }
        if !self.target.is_finite() {
            return Err(invalid("target must be finite"));
        }
        Ok(())
    }

    pub fn omega_mid(&self) -> f64 {
        0.5 * (self.omega_min + self.omega_max)
    }

    pub fn omega_half(&self) -> f64 {
        0.5 * (self.omega_max - self.omega_min)
    }

    /// Affine map from a raw action in [-1, 1] to a wave speed.
    pub fn speed_from_action(&self, u: f64) -> f64 {
        self.omega_mid() + self.omega_half() * u.clamp(-1.0, 1.0)
    }

    /// Inverse of [`speed_from_action`](Self::speed_from_action).
    pub fn action_from_speed(&self, omega: f64) -> f64 {
        ((omega - self.omega_mid()) / self.omega_half()).clamp(-1.0, 1.0)
    }
}

/// Everything needed to build and drive one environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub n_joints: usize,
    pub geometry: Geometry,
    pub gains: ServoGains,
    pub friction: FrictionModel,
    pub dynamics: DynamicsConfig,
    /// Amplitude and phase lag of the wave; `speed` is only used by the
    /// scripted controller.
    pub gait: GaitParams,
    pub episode: EpisodeConfig,
    pub action_mode: ActionMode,
}

impl EnvConfig {
    pub fn with_joints(n_joints: usize) -> Self {
        Self {
            n_joints,
            geometry: Geometry::default(),
            gains: ServoGains::default(),
            friction: FrictionModel::default(),
            dynamics: DynamicsConfig::default(),
            gait: GaitParams::baseline(n_joints),
            episode: EpisodeConfig::default(),
            action_mode: ActionMode::SharedSpeed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_joints == 0 {
            return Err(invalid("n_joints must be at least 1"));
        }
        if !self.gait.is_valid() {
            return Err(invalid("gait needs amplitude >= 0, speed >= 0 and a finite phase offset"));
        }
        if let ActionMode::PerGroup(0) = self.action_mode {
            return Err(invalid("per-group action mode needs at least one group"));
        }
        self.gains.validate()?;
        self.friction.validate()?;
        self.dynamics.validate()?;
        self.episode.validate()
    }

    /// True when two configs describe the same physical experiment.
    pub fn same_physics(&self, other: &EnvConfig) -> bool {
        self.n_joints == other.n_joints
            && self.geometry == other.geometry
            && self.gains == other.gains
            && self.friction == other.friction
            && self.dynamics == other.dynamics
            && self.episode == other.episode
            && self.gait.amplitude == other.gait.amplitude
            && self.gait.phase_offset == other.gait.phase_offset
    }
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::with_joints(17)
    }
}

/// Instantaneous observation of `state` relative to the episode target.
pub fn observe(state: &RobotState, episode: &EpisodeConfig) -> Observation {
    let head = state.head();
    let tip = head.front_pin();
    let (hs, hc) = head.heading.sin_cos();
    let c = state.centroid();
    let (cs, cc) = state.centroid_heading().sin_cos();
    let to_target = episode.target - c;
    let dist = to_target.norm();
    let forward = if dist > 0.0 { state.centroid_velocity().dot(to_target * (1.0 / dist)) } else { 0.0 };
    Observation([tip.x, tip.y, hs, hc, c.x, c.y, cs, cc, forward])
}

/// Per-step reward: the goal bonus on arrival, otherwise
/// `max(progress, 0) + forward_velocity - 1`.
pub fn reward(progress: f64, forward_velocity: f64, reached_goal: bool, episode: &EpisodeConfig) -> f64 {
    if reached_goal {
        episode.goal_reward
    } else {
        progress.max(0.0) + forward_velocity - 1.0
    }
}

/// Side information for metrics and traces.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub time: f64,
    pub torques: Vec<f64>,
    pub peak_torques: Vec<f64>,
    pub joint_angles: Vec<f64>,
    pub joint_rates: Vec<f64>,
    pub joint_targets: Vec<f64>,
    pub speeds: Vec<f64>,
    pub steer: f64,
    pub reached_goal: bool,
    pub lateral_exit: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
struct Episode {
    state: RobotState,
    phases: Vec<f64>,
    prev_dist: f64,
    steps: usize,
    finished: bool,
}

/// Single-threaded environment instance.
#[derive(Debug, Clone)]
pub struct SnakeEnv {
    config: EnvConfig,
    episode: Option<Episode>,
}

impl SnakeEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, episode: None })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn action_dim(&self) -> usize {
        self.config.action_mode.action_dim()
    }

    pub fn state(&self) -> Option<&RobotState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn steps(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.steps)
    }

    /// Straight chain, head tip at the origin, body along +y.
    ///
    /// The pose is fixed; `_seed` only exists so callers can thread their
    /// exploration seed through a uniform interface.
    pub fn reset(&mut self, _seed: u64) -> Result<Observation> {
        let cfg = &self.config;
        let mut state = build_robot(cfg.n_joints, &cfg.geometry)?;
        let shift = Vec2::ZERO - state.head().front_pin();
        for l in &mut state.links {
            l.position += shift;
        }
        let prev_dist = (cfg.episode.target - state.centroid()).norm();
        let obs = observe(&state, &cfg.episode);
        self.episode = Some(Episode {
            state,
            phases: vec![cfg.episode.initial_phase; cfg.n_joints],
            prev_dist,
            steps: 0,
            finished: false,
        });
        Ok(obs)
    }

    /// Maps raw actions to per-joint speeds.
    pub fn speeds_from_action(&self, action: &[f64]) -> Result<Vec<f64>> {
        let dim = self.action_dim();
        if action.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: action.len() });
        }
        if action.iter().any(|u| !u.is_finite()) {
            return Err(invalid("non-finite action"));
        }
        let ep = &self.config.episode;
        let k = self.config.n_joints;
        let group: Vec<f64> = action.iter().map(|&u| ep.speed_from_action(u)).collect();
        Ok(interpolate_groups(&group, k))
    }

    /// Steps with raw policy outputs in [-1, 1] (values outside are clipped).
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let speeds = self.speeds_from_action(action)?;
        self.step_speeds(&speeds)
    }

    /// Steps with one wave speed per joint, rad/s.
    pub fn step_speeds(&mut self, speeds: &[f64]) -> Result<StepOutcome> {
        let cfg = self.config;
        let ep_cfg = &cfg.episode;
        let episode = self.episode.as_mut().ok_or(Error::NotReset)?;
        if episode.finished {
            return Err(invalid("episode finished; call reset"));
        }
        if speeds.len() != cfg.n_joints {
            return Err(Error::DimensionMismatch { expected: cfg.n_joints, got: speeds.len() });
        }

        let dt = cfg.dynamics.dt_control;
        for (phase, &w) in episode.phases.iter_mut().zip(speeds) {
            *phase += w * dt;
        }
        let steer = heading_bias(&episode.state, ep_cfg);
        let targets: Vec<f64> = episode
            .phases
            .iter()
            .enumerate()
            .map(|(j, &phase)| joint_target(phase, cfg.gait.amplitude, cfg.gait.phase_offset, j + 1) + steer)
            .collect();

        let (state, report) = advance(
            &episode.state,
            Actuation::Servo { targets: &targets, gains: cfg.gains },
            &cfg.friction,
            &cfg.dynamics,
        )?;
        episode.state = state;
        episode.steps += 1;

        let obs = observe(&episode.state, ep_cfg);
        let centroid = obs.centroid();
        let dist = (ep_cfg.target - centroid).norm();
        let progress = episode.prev_dist - dist;
        episode.prev_dist = dist;

        let reached_goal = dist <= ep_cfg.goal_radius;
        let lateral_exit = !reached_goal && centroid.x.abs() > ep_cfg.lateral_bound;
        let truncated = !reached_goal && !lateral_exit && episode.steps >= ep_cfg.max_steps;
        let mut r = reward(progress, obs.forward_velocity(), reached_goal, ep_cfg);
        if lateral_exit {
            r += ep_cfg.lateral_penalty;
        }
        let done = reached_goal || lateral_exit || truncated;
        episode.finished = done;

        let info = StepInfo {
            time: episode.state.time,
            torques: report.torques,
            peak_torques: report.peak_torques,
            joint_angles: episode.state.joint_angles(),
            joint_rates: episode.state.joint_rates(),
            joint_targets: targets,
            speeds: speeds.to_vec(),
            steer,
            reached_goal,
            lateral_exit,
            truncated,
        };
        Ok(StepOutcome { observation: obs, reward: r, done, info })
    }
}

/// Bearing-hold joint bias that turns the body towards the target.
///
/// A positive joint angle bends the front of the body counter-clockwise, so a
/// bias of the bearing error's sign steers onto the line of sight.
pub fn heading_bias(state: &RobotState, episode: &EpisodeConfig) -> f64 {
    if episode.heading_gain == 0.0 || episode.steer_limit == 0.0 {
        return 0.0;
    }
    let to_target = episode.target - state.centroid();
    let bearing = to_target.y.atan2(to_target.x);
    let error = wrap_angle(bearing - state.centroid_heading());
    (episode.heading_gain * error).clamp(-episode.steer_limit, episode.steer_limit)
}

/// Linear head-to-tail interpolation of group values onto `n` joints.
pub fn interpolate_groups(groups: &[f64], n: usize) -> Vec<f64> {
    match groups.len() {
        0 => Vec::new(),
        1 => vec![groups[0]; n],
        g => (0..n)
            .map(|i| {
                let s = if n == 1 { 0.0 } else { i as f64 * (g - 1) as f64 / (n - 1) as f64 };
                let lo = (s.floor() as usize).min(g - 2);
                let frac = s - lo as f64;
                groups[lo] * (1.0 - frac) + groups[lo + 1] * frac
            })
            .collect(),
    }
}

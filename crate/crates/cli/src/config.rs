//! `section.key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key must be known.
//! Environment variables named `SNAKELAB_<SECTION>__<KEY>` (for example
//! `SNAKELAB_PPO__BUDGET=20000`) override file values.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use snakelab_core::dynamics::{DynamicsConfig, FrictionModel, Geometry, ServoGains};
use snakelab_core::env::{ActionMode, EnvConfig, EpisodeConfig};
use snakelab_core::gait::GaitParams;
use snakelab_core::rl::{Algo, PpoConfig, TrpoConfig};
use snakelab_core::Vec2;

use crate::CliError;

pub const ENV_PREFIX: &str = "SNAKELAB_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoKind {
    Ppo,
    Trpo,
    Serpenoid,
}

impl FromStr for AlgoKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ppo" => Ok(AlgoKind::Ppo),
            "trpo" => Ok(AlgoKind::Trpo),
            "serpenoid" => Ok(AlgoKind::Serpenoid),
            _ => Err(format!("unknown algorithm {s:?} (expected ppo, trpo or serpenoid)")),
        }
    }
}

impl Display for AlgoKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlgoKind::Ppo => "ppo",
            AlgoKind::Trpo => "trpo",
            AlgoKind::Serpenoid => "serpenoid",
        })
    }
}

/// Inclusive joint-count range written `A..B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointRange {
    pub start: usize,
    pub end: usize,
}

impl JointRange {
    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }
}

impl FromStr for JointRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once("..").ok_or_else(|| format!("joint range {s:?} must look like A..B"))?;
        let start: usize = a.trim().parse().map_err(|_| format!("bad joint range start {a:?}"))?;
        let end: usize = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad joint range end {b:?}"))?;
        if start == 0 || start > end {
            return Err(format!("joint range {s:?} must satisfy 1 <= A <= B"));
        }
        Ok(Self { start, end })
    }
}

impl Display for JointRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_joints: usize,
    pub geometry: Geometry,
    pub gains: ServoGains,
    pub friction: FrictionModel,
    pub dynamics: DynamicsConfig,
    pub amplitude: f64,
    pub speed: f64,
    /// `None` means one full wave along the body, `2 pi / K`.
    pub phase_offset: Option<f64>,
    pub episode: EpisodeConfig,
    pub action_groups: Option<usize>,
    pub algo: AlgoKind,
    pub ppo: PpoConfig,
    pub trpo: TrpoConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub trials: usize,
    pub workers: usize,
    pub joints: JointRange,
    pub checkpoint_every: usize,
    pub curve_bin: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        Self {
            n_joints: env.n_joints,
            geometry: env.geometry,
            gains: env.gains,
            friction: env.friction,
            dynamics: env.dynamics,
            amplitude: env.gait.amplitude,
            speed: env.gait.speed,
            phase_offset: None,
            episode: env.episode,
            action_groups: None,
            algo: AlgoKind::Ppo,
            ppo: PpoConfig::default(),
            trpo: TrpoConfig::default(),
            seed: 0,
            out: PathBuf::from("out"),
            trials: 10,
            workers: 1,
            joints: JointRange { start: 5, end: 18 },
            checkpoint_every: 1,
            curve_bin: 5000,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    value.parse::<T>().map_err(|e| CliError::Usage(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    value.split(',').map(|v| parse::<usize>(key, v.trim())).collect()
}

fn list(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let e = &self.episode;
        let p = &self.ppo;
        let t = &self.trpo;
        vec![
            ("robot.n_joints", self.n_joints.to_string()),
            ("robot.link_length", self.geometry.link_length.to_string()),
            ("robot.link_mass", self.geometry.link_mass.to_string()),
            ("servo.kp", self.gains.kp.to_string()),
            ("servo.kd", self.gains.kd.to_string()),
            ("servo.tau_max", self.gains.tau_max.to_string()),
            ("friction.c_n", self.friction.c_n.to_string()),
            ("friction.c_t", self.friction.c_t.to_string()),
            ("friction.c_rot", self.friction.c_rot.to_string()),
            ("dynamics.dt_control", self.dynamics.dt_control.to_string()),
            ("dynamics.substeps", self.dynamics.substeps.to_string()),
            ("dynamics.solver_iters", self.dynamics.solver_iters.to_string()),
            ("dynamics.baumgarte_beta", self.dynamics.baumgarte_beta.to_string()),
            ("dynamics.position_iters", self.dynamics.position_iters.to_string()),
            ("dynamics.gravity", self.dynamics.gravity.to_string()),
            ("gait.amplitude", self.amplitude.to_string()),
            ("gait.speed", self.speed.to_string()),
            ("gait.phase_offset", self.phase_offset.map_or("auto".into(), |v| v.to_string())),
            ("episode.target_x", e.target.x.to_string()),
            ("episode.target_y", e.target.y.to_string()),
            ("episode.goal_radius", e.goal_radius.to_string()),
            ("episode.max_steps", e.max_steps.to_string()),
            ("episode.lateral_bound", e.lateral_bound.to_string()),
            ("episode.lateral_penalty", e.lateral_penalty.to_string()),
            ("episode.goal_reward", e.goal_reward.to_string()),
            ("episode.omega_min", e.omega_min.to_string()),
            ("episode.omega_max", e.omega_max.to_string()),
            ("episode.heading_gain", e.heading_gain.to_string()),
            ("episode.steer_limit", e.steer_limit.to_string()),
            ("episode.initial_phase", e.initial_phase.to_string()),
            ("episode.action_groups", self.action_groups.map_or("shared".into(), |g| g.to_string())),
            ("ppo.horizon", p.horizon.to_string()),
            ("ppo.minibatch", p.minibatch.to_string()),
            ("ppo.gamma", p.gamma.to_string()),
            ("ppo.clip", p.clip.to_string()),
            ("ppo.lambda", p.lambda.to_string()),
            ("ppo.vf_coef", p.vf_coef.to_string()),
            ("ppo.entropy_coef", p.entropy_coef.to_string()),
            ("ppo.epochs", p.epochs.to_string()),
            ("ppo.lr", p.lr.to_string()),
            ("ppo.budget", p.budget.to_string()),
            ("ppo.normalize_advantages", p.normalize_advantages.to_string()),
            ("ppo.hidden", list(&p.hidden)),
            ("trpo.batch", t.batch.to_string()),
            ("trpo.gamma", t.gamma.to_string()),
            ("trpo.lambda", t.lambda.to_string()),
            ("trpo.max_kl", t.max_kl.to_string()),
            ("trpo.critic_epochs", t.critic_epochs.to_string()),
            ("trpo.critic_minibatch", t.critic_minibatch.to_string()),
            ("trpo.critic_lr", t.critic_lr.to_string()),
            ("trpo.cg_iters", t.cg_iters.to_string()),
            ("trpo.cg_damping", t.cg_damping.to_string()),
            ("trpo.backtracks", t.backtracks.to_string()),
            ("trpo.budget", t.budget.to_string()),
            ("trpo.normalize_advantages", t.normalize_advantages.to_string()),
            ("trpo.hidden", list(&t.hidden)),
            ("run.algo", self.algo.to_string()),
            ("run.seed", self.seed.to_string()),
            ("run.out", self.out.display().to_string()),
            ("run.trials", self.trials.to_string()),
            ("run.workers", self.workers.to_string()),
            ("run.joints", self.joints.to_string()),
            ("run.checkpoint_every", self.checkpoint_every.to_string()),
            ("run.curve_bin", self.curve_bin.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        let k = key.trim();
        match k {
            "robot.n_joints" => self.n_joints = parse(k, v)?,
            "robot.link_length" => self.geometry.link_length = parse(k, v)?,
            "robot.link_mass" => self.geometry.link_mass = parse(k, v)?,
            "servo.kp" => self.gains.kp = parse(k, v)?,
            "servo.kd" => self.gains.kd = parse(k, v)?,
            "servo.tau_max" => self.gains.tau_max = parse(k, v)?,
            "friction.c_n" => self.friction.c_n = parse(k, v)?,
            "friction.c_t" => self.friction.c_t = parse(k, v)?,
            "friction.c_rot" => self.friction.c_rot = parse(k, v)?,
            "dynamics.dt_control" => self.dynamics.dt_control = parse(k, v)?,
            "dynamics.substeps" => self.dynamics.substeps = parse(k, v)?,
            "dynamics.solver_iters" => self.dynamics.solver_iters = parse(k, v)?,
            "dynamics.baumgarte_beta" => self.dynamics.baumgarte_beta = parse(k, v)?,
            "dynamics.position_iters" => self.dynamics.position_iters = parse(k, v)?,
            "dynamics.gravity" => self.dynamics.gravity = parse(k, v)?,
            "gait.amplitude" => self.amplitude = parse(k, v)?,
            "gait.speed" => self.speed = parse(k, v)?,
            "gait.phase_offset" => self.phase_offset = if v == "auto" { None } else { Some(parse(k, v)?) },
            "episode.target_x" => self.episode.target.x = parse(k, v)?,
            "episode.target_y" => self.episode.target.y = parse(k, v)?,
            "episode.goal_radius" => self.episode.goal_radius = parse(k, v)?,
            "episode.max_steps" => self.episode.max_steps = parse(k, v)?,
            "episode.lateral_bound" => self.episode.lateral_bound = parse(k, v)?,
            "episode.lateral_penalty" => self.episode.lateral_penalty = parse(k, v)?,
            "episode.goal_reward" => self.episode.goal_reward = parse(k, v)?,
            "episode.omega_min" => self.episode.omega_min = parse(k, v)?,
            "episode.omega_max" => self.episode.omega_max = parse(k, v)?,
            "episode.heading_gain" => self.episode.heading_gain = parse(k, v)?,
            "episode.steer_limit" => self.episode.steer_limit = parse(k, v)?,
            "episode.initial_phase" => self.episode.initial_phase = parse(k, v)?,
            "episode.action_groups" => {
                self.action_groups = if v == "shared" { None } else { Some(parse(k, v)?) }
            }
            "ppo.horizon" => self.ppo.horizon = parse(k, v)?,
            "ppo.minibatch" => self.ppo.minibatch = parse(k, v)?,
            "ppo.gamma" => self.ppo.gamma = parse(k, v)?,
            "ppo.clip" => self.ppo.clip = parse(k, v)?,
            "ppo.lambda" => self.ppo.lambda = parse(k, v)?,
            "ppo.vf_coef" => self.ppo.vf_coef = parse(k, v)?,
            "ppo.entropy_coef" => self.ppo.entropy_coef = parse(k, v)?,
            "ppo.epochs" => self.ppo.epochs = parse(k, v)?,
            "ppo.lr" => self.ppo.lr = parse(k, v)?,
            "ppo.budget" => self.ppo.budget = parse(k, v)?,
            "ppo.normalize_advantages" => self.ppo.normalize_advantages = parse_bool(k, v)?,
            "ppo.hidden" => self.ppo.hidden = parse_list(k, v)?,
            "trpo.batch" => self.trpo.batch = parse(k, v)?,
            "trpo.gamma" => self.trpo.gamma = parse(k, v)?,
            "trpo.lambda" => self.trpo.lambda = parse(k, v)?,
            "trpo.max_kl" => self.trpo.max_kl = parse(k, v)?,
            "trpo.critic_epochs" => self.trpo.critic_epochs = parse(k, v)?,
            "trpo.critic_minibatch" => self.trpo.critic_minibatch = parse(k, v)?,
            "trpo.critic_lr" => self.trpo.critic_lr = parse(k, v)?,
            "trpo.cg_iters" => self.trpo.cg_iters = parse(k, v)?,
            "trpo.cg_damping" => self.trpo.cg_damping = parse(k, v)?,
            "trpo.backtracks" => self.trpo.backtracks = parse(k, v)?,
            "trpo.budget" => self.trpo.budget = parse(k, v)?,
            "trpo.normalize_advantages" => self.trpo.normalize_advantages = parse_bool(k, v)?,
            "trpo.hidden" => self.trpo.hidden = parse_list(k, v)?,
            "run.algo" => self.algo = parse(k, v)?,
            "run.seed" => self.seed = parse(k, v)?,
            "run.out" => self.out = PathBuf::from(v),
            "run.trials" => self.trials = parse(k, v)?,
            "run.workers" => self.workers = parse(k, v)?,
            "run.joints" => self.joints = parse(k, v)?,
            "run.checkpoint_every" => self.checkpoint_every = parse(k, v)?,
            "run.curve_bin" => self.curve_bin = parse(k, v)?,
            _ => return Err(CliError::Usage(format!("unknown config key {k:?}"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `section.key = value`", n + 1)))?;
            self.set(k, v).map_err(|e| CliError::Usage(format!("config line {}: {}", n + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Applies `SNAKELAB_<SECTION>__<KEY>` overrides from `vars`.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(name, value)| {
                let rest = name.strip_prefix(ENV_PREFIX)?;
                let (section, key) = rest.split_once("__")?;
                Some((format!("{}.{}", section.to_lowercase(), key.to_lowercase()), value))
            })
            .collect();
        overrides.sort();
        for (key, value) in overrides {
            self.set(&key, &value).map_err(|e| CliError::Usage(format!("environment override: {}", e.message())))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut section = "";
        for (k, v) in self.entries() {
            let sec = k.split('.').next().unwrap();
            if sec != section {
                if !section.is_empty() {
                    s.push('\n');
                }
                section = sec;
            }
            s += &format!("{k} = {v}\n");
        }
        s
    }

    /// Environment for a chain of `n_joints`, rescaling an automatic phase lag.
    pub fn env_for(&self, n_joints: usize) -> Result<EnvConfig, CliError> {
        let mut gait = GaitParams::baseline(n_joints);
        gait.amplitude = self.amplitude;
        gait.speed = self.speed;
        if let Some(phi) = self.phase_offset {
            gait.phase_offset = phi;
        }
        let env = EnvConfig {
            n_joints,
            geometry: self.geometry,
            gains: self.gains,
            friction: self.friction,
            dynamics: self.dynamics,
            gait,
            episode: self.episode,
            action_mode: self.action_groups.map_or(ActionMode::SharedSpeed, ActionMode::PerGroup),
        };
        env.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(env)
    }

    pub fn env(&self) -> Result<EnvConfig, CliError> {
        self.env_for(self.n_joints)
    }

    pub fn learner(&self) -> Result<Algo, CliError> {
        let algo = match self.algo {
            AlgoKind::Ppo => {
                self.ppo.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                Algo::Ppo(self.ppo.clone())
            }
            AlgoKind::Trpo => {
                self.trpo.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                Algo::Trpo(self.trpo.clone())
            }
            AlgoKind::Serpenoid => {
                return Err(CliError::Usage("the serpenoid controller is scripted and cannot be trained".into()))
            }
        };
        Ok(algo)
    }

    pub fn target(&self) -> Vec2 {
        self.episode.target
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.ppo.budget = 1234;
        c.phase_offset = Some(0.5);
        c.action_groups = Some(9);
        c.friction.c_n = 1.0 / 3.0;
        let back = RunConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn comments_and_spacing() {
        let c = RunConfig::from_text("# header\n\n  ppo.budget=10   # inline\nrun.algo = trpo\n").unwrap();
        assert_eq!(c.ppo.budget, 10);
        assert_eq!(c.algo, AlgoKind::Trpo);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(RunConfig::from_text("ppo.bugdet = 10\n").is_err());
        assert!(RunConfig::from_text("ppo.budget 10\n").is_err());
        assert!(RunConfig::from_text("ppo.budget = ten\n").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut c = RunConfig::default();
        let vars = vec![
            ("SNAKELAB_PPO__BUDGET".to_string(), "77".to_string()),
            ("SNAKELAB_FRICTION__C_N".to_string(), "4.5".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        c.apply_env(vars).unwrap();
        assert_eq!(c.ppo.budget, 77);
        assert_eq!(c.friction.c_n, 4.5);
        assert!(c.apply_env(vec![("SNAKELAB_PPO__NOPE".to_string(), "1".to_string())]).is_err());
    }

    #[test]
    fn auto_phase_rescales() {
        let c = RunConfig::default();
        let e = c.env_for(8).unwrap();
        assert!((e.gait.phase_offset - std::f64::consts::TAU / 8.0).abs() < 1e-15);
        assert_eq!(e.gait.amplitude, c.amplitude);
    }

    #[test]
    fn joint_ranges() {
        assert_eq!("5..18".parse::<JointRange>().unwrap(), JointRange { start: 5, end: 18 });
        assert_eq!("3..=4".parse::<JointRange>().unwrap(), JointRange { start: 3, end: 4 });
        assert!("9..5".parse::<JointRange>().is_err());
        assert!("0..5".parse::<JointRange>().is_err());
        assert!("7".parse::<JointRange>().is_err());
    }
}

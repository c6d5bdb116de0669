use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{cmd_compare, cmd_curves, cmd_rollout, cmd_sweep, cmd_train, ControllerSpec};
use crate::config::{AlgoKind, JointRange, RunConfig, ENV_PREFIX};
use crate::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "snakelab", version, about = "Planar snake-robot locomotion lab")]
#[command(after_help = "Configuration precedence: defaults < --config file < SNAKELAB_<SECTION>__<KEY> \
environment variables < command-line flags.\nExit status: 0 success, 1 usage error, 2 runtime failure.")]
pub struct Cli {
    /// `section.key = value` run configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = clap::value_parser!(AlgoKind))]
    pub algo: Option<AlgoKind>,
    /// Joint-count range for `sweep`, e.g. 5..18.
    #[arg(long, global = true, value_name = "A..B")]
    pub joints: Option<JointRange>,
    #[arg(long, global = true, value_name = "N")]
    pub trials: Option<usize>,
    /// Worker threads for independent trials.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a PPO or TRPO agent; writes rewards.csv and checkpoints.
    Train,
    /// Run one deterministic episode; writes trajectory.csv and energy.csv.
    Rollout {
        /// Policy checkpoint; defaults to OUT/final.ckpt unless --algo serpenoid.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Compare controllers (`serpenoid` or checkpoint paths, each optionally `@CONFIG`).
    Compare {
        #[arg(required = true, num_args = 2.., value_name = "CONTROLLER")]
        controllers: Vec<String>,
    },
    /// Train and measure average joint power for every joint count in --joints.
    Sweep,
    /// Aggregate reward curves over --trials independent trainings.
    Curves,
}

impl Cli {
    /// Effective configuration after file, environment and flags.
    pub fn resolve<I>(&self, env_vars: I) -> Result<RunConfig>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_env(env_vars)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(a) = self.algo {
            cfg.algo = a;
        }
        if let Some(j) = self.joints {
            cfg.joints = j;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        Ok(cfg)
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let vars = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX));
    let cfg = cli.resolve(vars)?;
    match &cli.command {
        Command::Train => cmd_train(&cfg).map(|_| ()),
        Command::Rollout { checkpoint } => cmd_rollout(&cfg, checkpoint.as_deref()).map(|_| ()),
        Command::Compare { controllers } => {
            let specs = controllers.iter().map(|c| ControllerSpec::parse(c, &cfg)).collect::<Result<Vec<_>>>()?;
            cmd_compare(&cfg, &specs).map(|_| ())
        }
        Command::Sweep => cmd_sweep(&cfg).map(|_| ()),
        Command::Curves => cmd_curves(&cfg).map(|_| ()),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

impl From<clap::Error> for CliError {
    fn from(e: clap::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

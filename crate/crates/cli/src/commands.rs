use std::path::{Path, PathBuf};

use rayon::prelude::*;
use snakelab_core::env::EnvConfig;
use snakelab_core::metrics::{run_summary, EnergyReport};
use snakelab_core::nn::{agent_checkpoint, agent_from_checkpoint, Checkpoint, GaussianPolicy};
use snakelab_core::rl::{evaluate_policy, run_episode, train, Controller, EpisodeRecord, EvalSummary, TrainOutcome};

use crate::config::{AlgoKind, RunConfig};
use crate::output::{ensure_dir, mean, std_dev, write_csv};
use crate::{CliError, Result};

pub const REWARDS_HEADER: [&str; 3] = ["timestep", "episode_return", "episode_length"];

fn curve_rows(curve: &[EpisodeRecord]) -> Vec<Vec<String>> {
    curve
        .iter()
        .map(|e| vec![e.timestep.to_string(), e.episode_return.to_string(), e.episode_length.to_string()])
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))
}

/// Seed of trial `trial` derived from the run seed.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub outcome: TrainOutcome,
    pub eval: EvalSummary,
}

/// Trains `cfg.algo` on `env` with no file output.
pub fn train_agent(cfg: &RunConfig, env: &EnvConfig, seed: u64) -> Result<TrainOutcome> {
    Ok(train(env, &cfg.learner()?, seed, |_| Ok(()))?)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let env = cfg.env()?;
    let algo = cfg.learner()?;
    ensure_dir(&cfg.out)?;
    std::fs::write(cfg.out.join("config.txt"), cfg.to_text())?;
    let every = cfg.checkpoint_every;
    let out_dir = cfg.out.clone();
    let outcome = train(&env, &algo, cfg.seed, |ev| {
        if every > 0 && (ev.index + 1) % every == 0 {
            let path = out_dir.join(format!("ckpt_{:04}.ckpt", ev.index + 1));
            agent_checkpoint(ev.policy, ev.critic)?.save(&path)?;
        }
        Ok(())
    })?;
    write_csv(&cfg.out.join("rewards.csv"), &REWARDS_HEADER, &curve_rows(&outcome.curve))?;
    agent_checkpoint(&outcome.policy, &outcome.critic)?.save(&cfg.out.join("final.ckpt"))?;
    let eval = evaluate_policy(&outcome.policy, &env, 1, cfg.seed)?;
    println!(
        "{} trained {} steps, {} episodes, {} updates; deterministic return {:.2}, success {:.0}%",
        algo.name(),
        outcome.timesteps,
        outcome.curve.len(),
        outcome.updates.len(),
        eval.mean_return,
        100.0 * eval.success_rate
    );
    Ok(TrainSummary { outcome, eval })
}

pub fn load_policy(path: &Path) -> Result<GaussianPolicy> {
    let ck = Checkpoint::load(path)
        .map_err(|e| CliError::Usage(format!("cannot load checkpoint {}: {e}", path.display())))?;
    Ok(agent_from_checkpoint(&ck)?.0)
}

#[derive(Debug, Clone)]
pub struct RolloutSummary {
    pub report: EnergyReport,
    pub episode_return: f64,
    pub reached_goal: bool,
}

fn rollout_with(env: &EnvConfig, speed: f64, policy: Option<&GaussianPolicy>) -> Result<(RolloutSummary, snakelab_core::metrics::Trace)> {
    let controller = match policy {
        Some(p) => Controller::Policy(p),
        None => Controller::Serpenoid { speed },
    };
    let ep = run_episode(controller, env)?;
    let report = run_summary(&ep.trace)?;
    Ok((RolloutSummary { report, episode_return: ep.episode_return, reached_goal: ep.reached_goal }, ep.trace))
}

/// One deterministic episode with the serpenoid gait or a checkpoint.
pub fn cmd_rollout(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<RolloutSummary> {
    let env = cfg.env()?;
    let policy = match (checkpoint, cfg.algo) {
        (Some(p), _) => Some(load_policy(p)?),
        (None, AlgoKind::Serpenoid) => None,
        (None, _) => {
            let fallback = cfg.out.join("final.ckpt");
            if fallback.exists() {
                Some(load_policy(&fallback)?)
            } else {
                return Err(CliError::Usage(format!(
                    "no checkpoint given and {} does not exist; pass --checkpoint or --algo serpenoid",
                    fallback.display()
                )));
            }
        }
    };
    let label = if policy.is_some() { "policy" } else { "serpenoid" };
    let (summary, trace) = rollout_with(&env, cfg.speed, policy.as_ref())?;
    ensure_dir(&cfg.out)?;
    trace.write_csv(std::fs::File::create(cfg.out.join("trajectory.csv"))?)?;
    write_csv(&cfg.out.join("energy.csv"), &EnergyReport::CSV_HEADER, &[summary.report.csv_record(label)])?;
    let block = summary.report.summary(label);
    std::fs::write(cfg.out.join("summary.txt"), &block)?;
    print!("{block}");
    Ok(summary)
}

/// Controller argument of `compare`: `serpenoid` or a checkpoint path,
/// optionally followed by `@CONFIG` to evaluate it under another config.
#[derive(Debug, Clone)]
pub struct ControllerSpec {
    pub label: String,
    pub checkpoint: Option<PathBuf>,
    pub config: RunConfig,
}

impl ControllerSpec {
    pub fn parse(arg: &str, base: &RunConfig) -> Result<Self> {
        let (what, config) = match arg.split_once('@') {
            Some((w, c)) => (w, RunConfig::load(Path::new(c))?),
            None => (arg, base.clone()),
        };
        if what.is_empty() {
            return Err(CliError::Usage(format!("empty controller in {arg:?}")));
        }
        let checkpoint = (what != "serpenoid").then(|| PathBuf::from(what));
        Ok(Self { label: what.to_string(), checkpoint, config })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub controller: String,
    pub report: EnergyReport,
}

pub const COMPARE_HEADER: [&str; 8] = [
    "controller",
    "time_to_goal_s",
    "total_power_W",
    "average_power_W",
    "mean_velocity_mps",
    "speed_gain_vs_first",
    "speed_gain_vs_self",
    "power_saving_vs_first",
];

pub fn cmd_compare(cfg: &RunConfig, specs: &[ControllerSpec]) -> Result<Vec<CompareRow>> {
    if specs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two controllers".into()));
    }
    let envs = specs.iter().map(|s| s.config.env()).collect::<Result<Vec<_>>>()?;
    for (s, e) in specs.iter().zip(&envs).skip(1) {
        if !e.same_physics(&envs[0]) {
            return Err(CliError::Usage(format!(
                "controller {:?} runs under a different robot/physics/episode config than {:?}; refusing an unfair comparison",
                s.label, specs[0].label
            )));
        }
    }
    let mut rows = Vec::new();
    for (s, env) in specs.iter().zip(&envs) {
        let policy = s.checkpoint.as_deref().map(load_policy).transpose()?;
        let (summary, _) = rollout_with(env, s.config.speed, policy.as_ref())?;
        rows.push(CompareRow { controller: s.label.clone(), report: summary.report });
    }
    let reference = rows[0].report.clone();
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let v = r.report.mean_forward_velocity;
            vec![
                r.controller.clone(),
                r.report.time_to_goal.map(|t| t.to_string()).unwrap_or_default(),
                r.report.total_power.to_string(),
                r.report.average_power.to_string(),
                v.to_string(),
                (v / reference.mean_forward_velocity - 1.0).to_string(),
                (1.0 - reference.mean_forward_velocity / v).to_string(),
                (1.0 - r.report.total_power / reference.total_power).to_string(),
            ]
        })
        .collect();
    ensure_dir(&cfg.out)?;
    write_csv(&cfg.out.join("comparison.csv"), &COMPARE_HEADER, &records)?;
    println!("{:<24} {:>10} {:>10} {:>10} {:>10}", "controller", "goal (s)", "q (W)", "q_avg (W)", "v (m/s)");
    for r in &rows {
        let t = r.report.time_to_goal.map_or("-".to_string(), |t| format!("{t:.2}"));
        println!(
            "{:<24} {:>10} {:>10.4} {:>10.4} {:>10.4}",
            r.controller, t, r.report.total_power, r.report.average_power, r.report.mean_forward_velocity
        );
    }
    Ok(rows)
}

pub const SWEEP_HEADER: [&str; 4] = ["n_joints", "controller", "trial", "average_power_W"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_joints: usize,
    pub controller: String,
    pub trial: usize,
    pub average_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Coefficient of variation of the baseline's mean average power across joint counts.
    pub baseline_cv: f64,
    pub learned_cv: f64,
    /// Joint count with the lowest mean learned average power.
    pub learned_min_joints: usize,
}

fn per_joint_means(rows: &[SweepRow], controller: &str) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    let mut ks: Vec<usize> = rows.iter().map(|r| r.n_joints).collect();
    ks.dedup();
    for k in ks {
        let v: Vec<f64> =
            rows.iter().filter(|r| r.n_joints == k && r.controller == controller).map(|r| r.average_power).collect();
        if !v.is_empty() {
            out.push((k, mean(&v)));
        }
    }
    out
}

fn cv(xs: &[f64]) -> f64 {
    std_dev(xs) / mean(xs).abs()
}

/// Trains a fresh agent per joint count and trial, then records the average
/// joint power of it and of the serpenoid baseline.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepSummary> {
    if cfg.trials == 0 {
        return Err(CliError::Usage("sweep needs at least one trial".into()));
    }
    let label = cfg.algo.to_string();
    cfg.learner()?;
    let jobs: Vec<(usize, usize)> =
        cfg.joints.iter().flat_map(|k| (0..cfg.trials).map(move |t| (k, t))).collect();
    let results = pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(k, trial)| -> Result<[SweepRow; 2]> {
                let env = cfg.env_for(k)?;
                let outcome = train_agent(cfg, &env, trial_seed(cfg.seed, trial))?;
                let (learned, _) = rollout_with(&env, cfg.speed, Some(&outcome.policy))?;
                let (base, _) = rollout_with(&env, cfg.speed, None)?;
                Ok([
                    SweepRow { n_joints: k, controller: label.clone(), trial, average_power: learned.report.average_power },
                    SweepRow { n_joints: k, controller: "serpenoid".into(), trial, average_power: base.report.average_power },
                ])
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<SweepRow> = results.into_iter().flatten().collect();
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.n_joints.to_string(), r.controller.clone(), r.trial.to_string(), r.average_power.to_string()])
        .collect();
    ensure_dir(&cfg.out)?;
    write_csv(&cfg.out.join("sweep.csv"), &SWEEP_HEADER, &records)?;

    let base = per_joint_means(&rows, "serpenoid");
    let learned = per_joint_means(&rows, &label);
    let base_vals: Vec<f64> = base.iter().map(|p| p.1).collect();
    let learned_vals: Vec<f64> = learned.iter().map(|p| p.1).collect();
    let learned_min_joints = learned.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|p| p.0).unwrap_or(0);
    let summary = SweepSummary { baseline_cv: cv(&base_vals), learned_cv: cv(&learned_vals), learned_min_joints, rows };
    let text = format!(
        "baseline average power coefficient of variation {:.4}\n{label} average power coefficient of variation {:.4}\n{label} minimum average power at {} joints\n",
        summary.baseline_cv, summary.learned_cv, summary.learned_min_joints
    );
    std::fs::write(cfg.out.join("sweep_summary.txt"), &text)?;
    print!("{text}");
    Ok(summary)
}

pub const CURVES_HEADER: [&str; 3] = ["timestep", "mean_return", "std_return"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub timestep: u64,
    pub mean_return: f64,
    pub std_return: f64,
}

/// Mean and spread of episode returns across trials on a shared step grid.
///
/// Each trial contributes the mean return of the episodes that ended inside
/// a bin, or its latest earlier value when none did. Bins before any trial
/// finished an episode are dropped.
pub fn bin_curves(curves: &[Vec<EpisodeRecord>], bin: u64, horizon: u64) -> Vec<CurvePoint> {
    let bin = bin.max(1);
    let n_bins = horizon.div_ceil(bin) as usize;
    let mut per_trial: Vec<Vec<Option<f64>>> = Vec::new();
    for curve in curves {
        let mut vals = vec![None; n_bins];
        let mut last = None;
        for (b, slot) in vals.iter_mut().enumerate() {
            let (lo, hi) = (b as u64 * bin, (b as u64 + 1) * bin);
            let inside: Vec<f64> =
                curve.iter().filter(|e| e.timestep > lo && e.timestep <= hi).map(|e| e.episode_return).collect();
            if !inside.is_empty() {
                last = Some(mean(&inside));
            }
            *slot = last;
        }
        per_trial.push(vals);
    }
    (0..n_bins)
        .filter_map(|b| {
            let v: Vec<f64> = per_trial.iter().filter_map(|t| t[b]).collect();
            (!v.is_empty()).then(|| CurvePoint {
                timestep: ((b as u64 + 1) * bin).min(horizon),
                mean_return: mean(&v),
                std_return: std_dev(&v),
            })
        })
        .collect()
}

pub fn cmd_curves(cfg: &RunConfig) -> Result<Vec<CurvePoint>> {
    if cfg.trials == 0 {
        return Err(CliError::Usage("curves needs at least one trial".into()));
    }
    let env = cfg.env()?;
    let algo = cfg.learner()?;
    let outcomes = pool(cfg.workers)?.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| train_agent(cfg, &env, trial_seed(cfg.seed, t)))
            .collect::<Result<Vec<_>>>()
    })?;
    ensure_dir(&cfg.out)?;
    for (t, o) in outcomes.iter().enumerate() {
        write_csv(&cfg.out.join(format!("rewards_trial_{t}.csv")), &REWARDS_HEADER, &curve_rows(&o.curve))?;
    }
    let curves: Vec<Vec<EpisodeRecord>> = outcomes.into_iter().map(|o| o.curve).collect();
    let points = bin_curves(&curves, cfg.curve_bin, algo.budget());
    let records: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![p.timestep.to_string(), p.mean_return.to_string(), p.std_return.to_string()])
        .collect();
    write_csv(&cfg.out.join("curves.csv"), &CURVES_HEADER, &records)?;
    if let Some(last) = points.last() {
        println!(
            "{} trials of {}: final bin (t = {}) mean return {:.2} +/- {:.2}",
            cfg.trials,
            algo.name(),
            last.timestep,
            last.mean_return,
            last.std_return
        );
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: u64, r: f64) -> EpisodeRecord {
        EpisodeRecord { timestep: t, episode_return: r, episode_length: 1, reached_goal: false }
    }

    #[test]
    fn binning() {
        let a = vec![rec(5, 1.0), rec(8, 3.0), rec(25, 5.0)];
        let b = vec![rec(12, 4.0)];
        let pts = bin_curves(&[a.clone(), b], 10, 30);
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0], CurvePoint { timestep: 10, mean_return: 2.0, std_return: 0.0 });
        assert_eq!(pts[1].mean_return, 3.0);
        assert_eq!(pts[1].std_return, 1.0);
        assert_eq!(pts[2].mean_return, 4.5);
        let single = bin_curves(&[a], 10, 30);
        assert!(single.iter().all(|p| p.std_return == 0.0));
    }

    #[test]
    fn trial_seeds_differ() {
        assert_ne!(trial_seed(5, 0), trial_seed(5, 1));
        assert_eq!(trial_seed(u64::MAX, 1), 0);
    }
}

use std::process::Command;

use snakelab_cli::commands::{cmd_compare, cmd_curves, cmd_rollout, cmd_sweep, cmd_train, ControllerSpec};
use snakelab_cli::{AlgoKind, JointRange, RunConfig};

const TINY: &str = "ppo.budget = 600\nppo.horizon = 300\nppo.minibatch = 100\nppo.epochs = 2\n\
trpo.budget = 600\ntrpo.batch = 300\ntrpo.critic_epochs = 1\nepisode.max_steps = 150\nrun.curve_bin = 100\n";

fn tiny(out: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::from_text(TINY).unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

fn csv_rows(path: &std::path::Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn zero_budget_train_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.set("ppo.budget", "0").unwrap();
    let s = cmd_train(&cfg).unwrap();
    assert!(s.outcome.curve.is_empty());
    let text = std::fs::read_to_string(dir.path().join("rewards.csv")).unwrap();
    assert_eq!(text.trim(), "timestep,episode_return,episode_length");
    assert!(dir.path().join("final.ckpt").exists());
}

#[test]
fn train_then_rollout_from_final_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let s = cmd_train(&cfg).unwrap();
    assert_eq!(s.outcome.timesteps, 600);
    assert!(dir.path().join("ckpt_0001.ckpt").exists());
    let rows = csv_rows(&dir.path().join("rewards.csv"));
    let last: u64 = rows.last().unwrap()[0].parse().unwrap();
    assert!(last <= 600);
    let r = cmd_rollout(&cfg, None).unwrap();
    assert!(r.report.n_steps > 0);
    let traj = csv_rows(&dir.path().join("trajectory.csv"));
    assert_eq!(traj.len(), r.report.n_steps + 1);
}

#[test]
fn rollout_with_zero_amplitude_costs_one_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.algo = AlgoKind::Serpenoid;
    cfg.set("gait.amplitude", "0").unwrap();
    let r = cmd_rollout(&cfg, None).unwrap();
    assert!(!r.reached_goal);
    assert_eq!(r.episode_return, -150.0);
    assert!(r.report.total_power < 1e-20);
    let energy = csv_rows(&dir.path().join("energy.csv"));
    assert_eq!(energy[0][3], "");
}

#[test]
fn rollout_without_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_rollout(&tiny(dir.path()), None).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn compare_duplicates_agree_and_mismatches_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let specs = vec![ControllerSpec::parse("serpenoid", &cfg).unwrap(), ControllerSpec::parse("serpenoid", &cfg).unwrap()];
    let rows = cmd_compare(&cfg, &specs).unwrap();
    assert_eq!(rows[0], rows[1]);
    let table = csv_rows(&dir.path().join("comparison.csv"));
    assert_eq!(table[1][5].parse::<f64>().unwrap(), 0.0);

    let other = dir.path().join("other.txt");
    std::fs::write(&other, format!("{TINY}friction.c_n = 5\n")).unwrap();
    let mixed = vec![
        ControllerSpec::parse("serpenoid", &cfg).unwrap(),
        ControllerSpec::parse(&format!("serpenoid@{}", other.display()), &cfg).unwrap(),
    ];
    assert_eq!(cmd_compare(&cfg, &mixed).unwrap_err().exit_code(), 1);
}

#[test]
fn sweep_emits_two_rows_per_joint_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.joints = JointRange { start: 5, end: 7 };
    cfg.trials = 1;
    let s = cmd_sweep(&cfg).unwrap();
    assert_eq!(s.rows.len(), 6);
    assert_eq!(csv_rows(&dir.path().join("sweep.csv")).len(), 6);
    assert!((5..=7).contains(&s.learned_min_joints));
    assert!(dir.path().join("sweep_summary.txt").exists());
}

#[test]
fn single_trial_curves_have_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.trials = 1;
    cfg.algo = AlgoKind::Trpo;
    let pts = cmd_curves(&cfg).unwrap();
    assert!(!pts.is_empty());
    assert!(pts.iter().all(|p| p.std_return == 0.0));
    assert!(dir.path().join("rewards_trial_0.csv").exists());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_snakelab");
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(run(&["--help"]), Some(0));
    assert_eq!(run(&["train", "--algo", "sac"]), Some(1));
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "robot.wheels = 4\n").unwrap();
    assert_eq!(run(&["train", "--config", bad.to_str().unwrap()]), Some(1));
    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("o");
    assert_eq!(
        run(&["rollout", "--algo", "serpenoid", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        Some(0)
    );
    let garbage = dir.path().join("g.ckpt");
    std::fs::write(&garbage, "nope").unwrap();
    assert_eq!(run(&["rollout", "--checkpoint", garbage.to_str().unwrap(), "--out", out.to_str().unwrap()]), Some(1));
}

#[test]
fn env_overrides_reach_the_binary() {
    let bin = env!("CARGO_BIN_EXE_snakelab");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("o");
    let status = Command::new(bin)
        .args(["rollout", "--algo", "serpenoid", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("SNAKELAB_EPISODE__MAX_STEPS", "20")
        .output()
        .unwrap();
    assert!(status.status.success());
    assert_eq!(csv_rows(&out.join("trajectory.csv")).len(), 21);
}

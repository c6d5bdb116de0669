//! Mechanical power and locomotion summaries of recorded rollouts.

use std::io::{Read, Write};

use crate::dynamics::RobotState;
use crate::env::{observe, EnvConfig, StepOutcome};
use crate::error::{Error, Result};
use crate::math::Vec2;

/// How negative mechanical power `tau * rate` is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerConvention {
    /// `|tau * rate|`: actuators never harvest energy.
    #[default]
    Absolute,
    /// Raw `tau * rate`.
    Signed,
}

/// Time-averaged power of one joint over a rectangle-rule series.
pub fn joint_energy_rate(torques: &[f64], rates: &[f64], dt: f64) -> Result<f64> {
    joint_energy_rate_with(torques, rates, dt, PowerConvention::Absolute)
}

pub fn joint_energy_rate_with(torques: &[f64], rates: &[f64], dt: f64, convention: PowerConvention) -> Result<f64> {
    if torques.is_empty() {
        return Err(Error::Empty("torque series"));
    }
    if torques.len() != rates.len() {
        return Err(Error::DimensionMismatch { expected: torques.len(), got: rates.len() });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let energy: f64 = torques
        .iter()
        .zip(rates)
        .map(|(t, w)| match convention {
            PowerConvention::Absolute => (t * w).abs() * dt,
            PowerConvention::Signed => t * w * dt,
        })
        .sum();
    Ok(energy / (torques.len() as f64 * dt))
}

pub fn total_power(per_joint: &[f64]) -> Result<f64> {
    if per_joint.is_empty() {
        return Err(Error::Empty("per-joint power"));
    }
    Ok(per_joint.iter().sum())
}

pub fn average_power(per_joint: &[f64]) -> Result<f64> {
    Ok(total_power(per_joint)? / per_joint.len() as f64)
}

/// Episode constants needed to summarize a trace offline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceMeta {
    pub dt: f64,
    pub target: Vec2,
    pub goal_radius: f64,
}

impl TraceMeta {
    pub fn from_config(cfg: &EnvConfig) -> Self {
        Self { dt: cfg.dynamics.dt_control, target: cfg.episode.target, goal_radius: cfg.episode.goal_radius }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub head: Vec2,
    pub centroid: Vec2,
    pub reward: f64,
    pub done: bool,
    pub angles: Vec<f64>,
    pub rates: Vec<f64>,
    pub torques: Vec<f64>,
}

/// Per-step record of one episode. Row 0 is the reset state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub n_joints: usize,
    pub rows: Vec<TraceRow>,
}

const FIXED_COLUMNS: [&str; 8] = ["step", "time_s", "head_x", "head_y", "centroid_x", "centroid_y", "reward", "done"];

impl Trace {
    pub fn start(meta: TraceMeta, cfg: &EnvConfig, state: &RobotState) -> Self {
        let obs = observe(state, &cfg.episode);
        let k = state.n_joints();
        let row = TraceRow {
            step: 0,
            time: state.time,
            head: obs.head(),
            centroid: obs.centroid(),
            reward: 0.0,
            done: false,
            angles: state.joint_angles(),
            rates: state.joint_rates(),
            torques: vec![0.0; k],
        };
        Self { meta, n_joints: k, rows: vec![row] }
    }

    pub fn push(&mut self, out: &StepOutcome) {
        let step = self.rows.len();
        self.rows.push(TraceRow {
            step,
            time: out.info.time,
            head: out.observation.head(),
            centroid: out.observation.centroid(),
            reward: out.reward,
            done: out.done,
            angles: out.info.joint_angles.clone(),
            rates: out.info.joint_rates.clone(),
            torques: out.info.torques.clone(),
        });
    }

    pub fn n_steps(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn episode_return(&self) -> f64 {
        self.rows.iter().skip(1).map(|r| r.reward).sum()
    }

    pub fn header(n_joints: usize) -> Vec<String> {
        let mut h: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        for prefix in ["angle", "rate", "torque"] {
            h.extend((1..=n_joints).map(|j| format!("{prefix}_{j}")));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::header(self.n_joints))?;
        for r in &self.rows {
            let mut rec = vec![
                r.step.to_string(),
                r.time.to_string(),
                r.head.x.to_string(),
                r.head.y.to_string(),
                r.centroid.x.to_string(),
                r.centroid.y.to_string(),
                r.reward.to_string(),
                (r.done as u8).to_string(),
            ];
            for series in [&r.angles, &r.rates, &r.torques] {
                rec.extend(series.iter().map(|v| v.to_string()));
            }
            wr.write_record(rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, meta: TraceMeta) -> Result<Self> {
        let bad = |m: String| Error::MalformedTrace(m);
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let extra = header.len().checked_sub(FIXED_COLUMNS.len()).ok_or_else(|| bad("too few columns".into()))?;
        if extra % 3 != 0 || extra == 0 {
            return Err(bad(format!("{} columns do not form angle/rate/torque triples", header.len())));
        }
        let k = extra / 3;
        let want = Self::header(k);
        if header.iter().ne(want.iter().map(|s| s.as_str())) {
            return Err(bad("unexpected header".into()));
        }
        let mut rows = Vec::new();
        for (n, rec) in rd.records().enumerate() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| bad(format!("row {}, column {}: {e}", n + 1, want[i])))
            };
            let step: usize = rec[0].parse().map_err(|_| bad(format!("row {}: bad step", n + 1)))?;
            let series = |s: usize| -> Result<Vec<f64>> { (s..s + k).map(f).collect() };
            let base = FIXED_COLUMNS.len();
            rows.push(TraceRow {
                step,
                time: f(1)?,
                head: Vec2::new(f(2)?, f(3)?),
                centroid: Vec2::new(f(4)?, f(5)?),
                reward: f(6)?,
                done: match &rec[7] {
                    "0" => false,
                    "1" => true,
                    other => return Err(bad(format!("row {}: bad done flag {other:?}", n + 1))),
                },
                angles: series(base)?,
                rates: series(base + k)?,
                torques: series(base + 2 * k)?,
            });
        }
        let trace = Self { meta, n_joints: k, rows };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::MalformedTrace(m);
        if self.rows.len() < 2 {
            return Err(bad("trace needs the reset row and at least one step".into()));
        }
        if !(self.meta.dt > 0.0 && self.meta.goal_radius > 0.0) {
            return Err(bad("dt and goal_radius must be positive".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.step != i {
                return Err(bad(format!("row {i} has step {}", r.step)));
            }
            let k = self.n_joints;
            if r.angles.len() != k || r.rates.len() != k || r.torques.len() != k {
                return Err(bad(format!("row {i} does not have {k} joints")));
            }
            if i > 0 && !(r.time > self.rows[i - 1].time) {
                return Err(bad(format!("time does not increase at row {i}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub per_joint_power: Vec<f64>,
    pub total_power: f64,
    pub average_power: f64,
    pub time_to_goal: Option<f64>,
    pub mean_forward_velocity: f64,
    pub n_joints: usize,
    pub n_steps: usize,
}

pub fn run_summary(trace: &Trace) -> Result<EnergyReport> {
    run_summary_with(trace, PowerConvention::Absolute)
}

pub fn run_summary_with(trace: &Trace, convention: PowerConvention) -> Result<EnergyReport> {
    trace.validate()?;
    let steps = &trace.rows[1..];
    let per_joint_power = (0..trace.n_joints)
        .map(|j| {
            let tau: Vec<f64> = steps.iter().map(|r| r.torques[j]).collect();
            let rate: Vec<f64> = steps.iter().map(|r| r.rates[j]).collect();
            joint_energy_rate_with(&tau, &rate, trace.meta.dt, convention)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = total_power(&per_joint_power)?;
    let average = average_power(&per_joint_power)?;

    let meta = &trace.meta;
    let time_to_goal =
        trace.rows.iter().find(|r| (meta.target - r.centroid).norm() <= meta.goal_radius).map(|r| r.time);

    let first = &trace.rows[0];
    let last = trace.rows.last().unwrap();
    let to_target = meta.target - first.centroid;
    let dist = to_target.norm();
    let forward = if dist > 0.0 { (last.centroid - first.centroid).dot(to_target * (1.0 / dist)) } else { 0.0 };
    let mean_forward_velocity = forward / (last.time - first.time);

    Ok(EnergyReport {
        per_joint_power,
        total_power: total,
        average_power: average,
        time_to_goal,
        mean_forward_velocity,
        n_joints: trace.n_joints,
        n_steps: trace.n_steps(),
    })
}

impl EnergyReport {
    pub const CSV_HEADER: [&'static str; 7] = [
        "controller",
        "n_joints",
        "n_steps",
        "time_to_goal_s",
        "total_power_W",
        "average_power_W",
        "mean_velocity_mps",
    ];

    /// One CSV record; an absent time-to-goal is written as an empty field.
    pub fn csv_record(&self, controller: &str) -> Vec<String> {
        vec![
            controller.to_string(),
            self.n_joints.to_string(),
            self.n_steps.to_string(),
            self.time_to_goal.map(|t| t.to_string()).unwrap_or_default(),
            self.total_power.to_string(),
            self.average_power.to_string(),
            self.mean_forward_velocity.to_string(),
        ]
    }

    pub fn summary(&self, controller: &str) -> String {
        let mut s = format!("controller            {controller}\n");
        s += &format!("joints                {}\n", self.n_joints);
        s += &format!("steps                 {}\n", self.n_steps);
        match self.time_to_goal {
            Some(t) => s += &format!("time to goal          {t:.3} s\n"),
            None => s += "time to goal          not reached\n",
        }
        s += &format!("mean forward velocity {:.4} m/s\n", self.mean_forward_velocity);
        s += &format!("total power           {:.4} W\n", self.total_power);
        s += &format!("average power         {:.4} W\n", self.average_power);
        let joints: Vec<String> = self.per_joint_power.iter().map(|p| format!("{p:.4}")).collect();
        s += &format!("per-joint power (W)   {}\n", joints.join(" "));
        s
    }
}

/// Coefficient of determination of `predicted` against `observed`.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::DimensionMismatch { expected: observed.len(), got: predicted.len() });
    }
    if observed.is_empty() {
        return Err(Error::Empty("series"));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = observed.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY })
}

/// Least-squares sinusoid `amplitude * sin(omega t + phase + lag) + offset`
/// at a fixed frequency and reference phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub amplitude: f64,
    /// Phase of the fit relative to the reference, rad.
    pub lag: f64,
    pub offset: f64,
    pub r_squared: f64,
}

pub fn fit_sinusoid(times: &[f64], values: &[f64], omega: f64, phase: f64) -> Result<SinusoidFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
    }
    if times.len() < 3 {
        return Err(Error::Empty("sinusoid fit needs three samples"));
    }
    let basis = |t: f64| {
        let a = omega * t + phase;
        [a.sin(), a.cos(), 1.0]
    };
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for (&t, &y) in times.iter().zip(values) {
        let b = basis(t);
        for r in 0..3 {
            rhs[r] += b[r] * y;
            for c in 0..3 {
                m[r][c] += b[r] * b[c];
            }
        }
    }
    let coef = solve3(m, rhs).ok_or_else(|| crate::error::invalid("sinusoid fit is degenerate"))?;
    let predicted: Vec<f64> = times.iter().map(|&t| basis(t).iter().zip(&coef).map(|(b, c)| b * c).sum()).collect();
    Ok(SinusoidFit {
        amplitude: coef[0].hypot(coef[1]),
        lag: coef[1].atan2(coef[0]),
        offset: coef[2],
        r_squared: r_squared(values, &predicted)?,
    })
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for c in col..3 {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sinusoid_fit_recovers_parameters() {
        let times: Vec<f64> = (0..500).map(|i| i as f64 * 0.01).collect();
        let ys: Vec<f64> = times.iter().map(|t| 0.5 * (3.0 * t - 0.4 + 0.1).sin() + 0.02).collect();
        let fit = fit_sinusoid(&times, &ys, 3.0, -0.4).unwrap();
        assert_abs_diff_eq!(fit.amplitude, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.lag, 0.1, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.offset, 0.02, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert!(fit_sinusoid(&[0.0, 1.0], &[0.0, 1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn r_squared_cases() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0, epsilon = 1e-15);
        assert!(r_squared(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn synthetic(k: usize, n: usize, dt: f64, tau: f64, rate: f64, end: Vec2) -> Trace {
        let meta = TraceMeta { dt, target: Vec2::new(0.0, -10.0), goal_radius: 0.5 };
        let rows = (0..=n)
            .map(|i| {
                let f = i as f64 / n as f64;
                TraceRow {
                    step: i,
                    time: i as f64 * dt,
                    head: Vec2::ZERO,
                    centroid: end * f,
                    reward: -1.0,
                    done: i == n,
                    angles: vec![0.0; k],
                    rates: vec![if i == 0 { 0.0 } else { rate }; k],
                    torques: vec![if i == 0 { 0.0 } else { tau }; k],
                }
            })
            .collect();
        Trace { meta, n_joints: k, rows }
    }

    #[test]
    fn energy_rate_examples() {
        assert_abs_diff_eq!(joint_energy_rate(&[2.0; 7], &[0.25; 7], 0.1).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(joint_energy_rate(&[3.0; 4], &[0.0; 4], 0.1).unwrap(), 0.0);
        assert_eq!(joint_energy_rate(&[1.0, -1.0], &[1.0, 1.0], 1.0).unwrap(), 1.0);
        assert_eq!(
            joint_energy_rate_with(&[1.0, -1.0], &[1.0, 1.0], 1.0, PowerConvention::Signed).unwrap(),
            0.0
        );
        assert!(matches!(joint_energy_rate(&[], &[], 0.1), Err(Error::Empty(_))));
    }

    #[test]
    fn aggregate_examples() {
        assert_abs_diff_eq!(total_power(&[0.1, 0.2, 0.3]).unwrap(), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(average_power(&[0.1, 0.2, 0.3]).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(total_power(&[0.4]).unwrap(), 0.4);
        assert_eq!(average_power(&[0.25; 6]).unwrap(), 0.25);
        assert_eq!(total_power(&[0.0; 3]).unwrap(), 0.0);
        assert!(average_power(&[]).is_err());
    }

    #[test]
    fn ten_metres_in_28_2_seconds() {
        let n = 846;
        let trace = synthetic(3, n, 28.2 / n as f64, 0.0, 0.0, Vec2::new(0.0, -10.0));
        let r = run_summary(&trace).unwrap();
        assert_abs_diff_eq!(r.mean_forward_velocity, 10.0 / 28.2, epsilon = 1e-9);
        assert!((r.mean_forward_velocity - 0.3546).abs() < 1e-4);
        assert!(r.time_to_goal.is_some());
    }

    #[test]
    fn motionless_robot() {
        let trace = synthetic(4, 30, 1.0 / 30.0, 1.5, 0.0, Vec2::ZERO);
        let r = run_summary(&trace).unwrap();
        assert_eq!(r.total_power, 0.0);
        assert_eq!(r.time_to_goal, None);
        assert_eq!(r.mean_forward_velocity, 0.0);
    }

    #[test]
    fn single_joint_constant_power() {
        let trace = synthetic(1, 60, 1.0 / 30.0, 2.0, -0.3, Vec2::new(0.0, -1.0));
        let r = run_summary(&trace).unwrap();
        assert_abs_diff_eq!(r.average_power, 0.6, epsilon = 1e-12);
        assert_eq!(r.average_power, r.total_power);
    }

    #[test]
    fn csv_round_trip() {
        let trace = synthetic(2, 5, 1.0 / 30.0, 0.123456789, 1.0 / 3.0, Vec2::new(0.1, -2.0));
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,time_s,head_x,head_y,centroid_x,centroid_y,reward,done,angle_1,angle_2,rate_1"));
        let back = Trace::read_csv(text.as_bytes(), trace.meta).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn malformed_traces() {
        let meta = TraceMeta { dt: 0.1, target: Vec2::ZERO, goal_radius: 0.5 };
        assert!(Trace::read_csv("step,time_s\n0,0\n".as_bytes(), meta).is_err());
        let mut t = synthetic(1, 3, 0.1, 1.0, 1.0, Vec2::ZERO);
        t.rows[2].step = 7;
        assert!(matches!(run_summary(&t), Err(Error::MalformedTrace(_))));
        let mut t = synthetic(1, 3, 0.1, 1.0, 1.0, Vec2::ZERO);
        t.rows.truncate(1);
        assert!(run_summary(&t).is_err());
    }

    proptest! {
        #[test]
        fn power_invariants(
            tau in proptest::collection::vec(-10.0f64..10.0, 1..50),
            seed_rates in proptest::collection::vec(-5.0f64..5.0, 50),
        ) {
            let n = tau.len();
            let rates = &seed_rates[..n];
            let dt = 1.0 / 30.0;
            let q = joint_energy_rate(&tau, rates, dt).unwrap();
            prop_assert!(q >= 0.0);
            let doubled: Vec<f64> = tau.iter().map(|t| 2.0 * t).collect();
            prop_assert_eq!(joint_energy_rate(&doubled, rates, dt).unwrap(), 2.0 * q);
            let tau2: Vec<f64> = tau.iter().chain(&tau).copied().collect();
            let rates2: Vec<f64> = rates.iter().chain(rates).copied().collect();
            let q2 = joint_energy_rate(&tau2, &rates2, dt).unwrap();
            prop_assert!((q2 - q).abs() <= 1e-12 * (1.0 + q));
        }
    }
}

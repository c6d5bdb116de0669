//! Planar multibody simulator for the snake chain.
//!
//! Each module is a rigid link in maximal coordinates. Adjacent links share a
//! revolute pin; pins and joint servos are resolved together by a
//! sequential-impulse solver with Baumgarte drift correction. The ground acts
//! through an anisotropic viscous law in each link's body frame.
//!
//! Conventions: a link's heading is the angle of its forward axis (pointing
//! towards the head). Link `j` and link `j + 1` share joint `j`, whose angle is
//! `wrap(heading[j] - heading[j + 1])`. The front pin of a link sits at
//! `position + half_len * axis`, the rear pin at `position - half_len * axis`.

use crate::error::{invalid, Error, Result};
use crate::math::{wrap_angle, Vec2};
use std::f64::consts::FRAC_PI_2;

/// Rigid-body state of one module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub position: Vec2,
    /// Unwrapped body-axis angle in the world frame.
    pub heading: f64,
    pub lin_vel: Vec2,
    pub ang_vel: f64,
    pub mass: f64,
    pub inertia: f64,
    pub half_len: f64,
}

impl LinkState {
    #[inline]
    pub fn axis(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }

    #[inline]
    pub fn front_pin(&self) -> Vec2 {
        self.position + self.axis() * self.half_len
    }

    #[inline]
    pub fn rear_pin(&self) -> Vec2 {
        self.position - self.axis() * self.half_len
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.lin_vel.norm_sq() + 0.5 * self.inertia * self.ang_vel * self.ang_vel
    }

    fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.heading.is_finite()
            && self.lin_vel.is_finite()
            && self.ang_vel.is_finite()
    }
}

/// Full state of the chain, head first, plus the simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub links: Vec<LinkState>,
    pub time: f64,
}

impl RobotState {
    /// Wraps a link sequence, checking masses and lengths.
    ///
    /// A single link is accepted (a free body with no joints).
    pub fn new(links: Vec<LinkState>, time: f64) -> Result<Self> {
        if links.is_empty() {
            return Err(invalid("robot needs at least one link"));
        }
        for (i, l) in links.iter().enumerate() {
            if !(l.mass > 0.0 && l.inertia > 0.0 && l.half_len > 0.0) {
                return Err(invalid(format!("link {i} has non-positive mass, inertia or length")));
            }
            if !l.is_finite() {
                return Err(invalid(format!("link {i} has non-finite state")));
            }
        }
        Ok(Self { links, time })
    }

    pub fn n_joints(&self) -> usize {
        self.links.len() - 1
    }

    pub fn head(&self) -> &LinkState {
        &self.links[0]
    }

    /// Joint angles in (-pi, pi], joint 0 nearest the head.
    pub fn joint_angles(&self) -> Vec<f64> {
        self.links
            .windows(2)
            .map(|w| wrap_angle(w[0].heading - w[1].heading))
            .collect()
    }

    pub fn joint_rates(&self) -> Vec<f64> {
        self.links.windows(2).map(|w| w[0].ang_vel - w[1].ang_vel).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Mass-weighted mean of link centers.
    pub fn centroid(&self) -> Vec2 {
        let m = self.total_mass();
        self.links
            .iter()
            .fold(Vec2::ZERO, |acc, l| acc + l.position * l.mass)
            * (1.0 / m)
    }

    pub fn centroid_velocity(&self) -> Vec2 {
        self.linear_momentum() * (1.0 / self.total_mass())
    }

    /// Circular mean of link headings.
    pub fn centroid_heading(&self) -> f64 {
        let (s, c) = self
            .links
            .iter()
            .fold((0.0, 0.0), |(s, c), l| (s + l.heading.sin(), c + l.heading.cos()));
        s.atan2(c)
    }

    pub fn linear_momentum(&self) -> Vec2 {
        self.links.iter().fold(Vec2::ZERO, |acc, l| acc + l.lin_vel * l.mass)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.links.iter().map(LinkState::kinetic_energy).sum()
    }

    /// Largest separation between the two halves of any pin.
    pub fn max_pin_gap(&self) -> f64 {
        self.links
            .windows(2)
            .map(|w| (w[0].rear_pin() - w[1].front_pin()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.time.is_finite() && self.links.iter().all(LinkState::is_finite)
    }
}

/// Link geometry shared by every module of a chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    /// Module pitch (pin to pin), m.
    pub link_length: f64,
    /// kg
    pub link_mass: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { link_length: 0.25, link_mass: 0.1 }
    }
}

/// PD position servo with a torque limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoGains {
    pub kp: f64,
    pub kd: f64,
    pub tau_max: f64,
}

impl Default for ServoGains {
    fn default() -> Self {
        Self { kp: 20.0, kd: 0.5, tau_max: 10.0 }
    }
}

impl ServoGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp > 0.0 && self.kd >= 0.0 && self.tau_max > 0.0) {
            return Err(invalid("servo gains need kp > 0, kd >= 0, tau_max > 0"));
        }
        Ok(())
    }
}

/// Anisotropic viscous ground resistance, per link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionModel {
    /// Resistance to velocity normal to the body axis, N s/m.
    pub c_n: f64,
    /// Resistance along the body axis, N s/m.
    pub c_t: f64,
    /// Rotational damping, N m s/rad.
    pub c_rot: f64,
}

impl Default for FrictionModel {
    fn default() -> Self {
        Self { c_n: 3.0, c_t: 0.03, c_rot: 0.01 }
    }
}

impl FrictionModel {
    pub const FRICTIONLESS: FrictionModel = FrictionModel { c_n: 0.0, c_t: 0.0, c_rot: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.c_n >= self.c_t && self.c_t >= 0.0 && self.c_rot >= 0.0) {
            return Err(invalid("friction needs c_n >= c_t >= 0 and c_rot >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    pub dt_control: f64,
    pub substeps: usize,
    pub solver_iters: usize,
    pub baumgarte_beta: f64,
    /// Nonlinear Gauss-Seidel pin projections after each substep's position update.
    pub position_iters: usize,
    /// Informational only: the chain never leaves the plane.
    pub gravity: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            dt_control: 1.0 / 30.0,
            substeps: 8,
            solver_iters: 16,
            baumgarte_beta: 0.2,
            position_iters: 1,
            gravity: 9.8,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_control > 0.0 && self.dt_control.is_finite()) {
            return Err(invalid("dt_control must be positive"));
        }
        if self.substeps == 0 || self.solver_iters == 0 {
            return Err(invalid("substeps and solver_iters must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.baumgarte_beta) {
            return Err(invalid("baumgarte_beta must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Builds a straight chain of `n_joints + 1` links at rest.
///
/// The head is centered at the origin facing -y; the body trails along +y.
pub fn build_robot(n_joints: usize, geometry: &Geometry) -> Result<RobotState> {
    if n_joints == 0 {
        return Err(invalid("n_joints must be at least 1"));
    }
    let Geometry { link_length, link_mass } = *geometry;
    if !(link_length > 0.0 && link_mass > 0.0 && link_length.is_finite() && link_mass.is_finite()) {
        return Err(invalid("link length and mass must be positive"));
    }
    let heading = -FRAC_PI_2;
    let link = LinkState {
        position: Vec2::ZERO,
        heading,
        lin_vel: Vec2::ZERO,
        ang_vel: 0.0,
        mass: link_mass,
        inertia: link_mass * link_length * link_length / 12.0,
        half_len: 0.5 * link_length,
    };
    let links = (0..=n_joints)
        .map(|i| LinkState { position: Vec2::new(0.0, i as f64 * link_length), ..link })
        .collect();
    RobotState::new(links, 0.0)
}

/// Clamped PD law: `clamp(kp * (target - angle) - kd * rate, -tau_max, tau_max)`.
pub fn servo_torque(joint_angle: f64, joint_rate: f64, target: f64, gains: &ServoGains) -> f64 {
    let raw = gains.kp * (target - joint_angle) - gains.kd * joint_rate;
    raw.clamp(-gains.tau_max, gains.tau_max)
}

/// Viscous ground force and torque on one link.
pub fn friction_force(link: &LinkState, model: &FrictionModel) -> (Vec2, f64) {
    let t = link.axis();
    let n = t.perp();
    let v_t = link.lin_vel.dot(t);
    let v_n = link.lin_vel.dot(n);
    let force = t * (-model.c_t * v_t) + n * (-model.c_n * v_n);
    (force, -model.c_rot * link.ang_vel)
}

/// How the joints are driven during a step.
#[derive(Debug, Clone, Copy)]
pub enum Actuation<'a> {
    /// Position servos tracking one target angle per joint.
    Servo { targets: &'a [f64], gains: ServoGains },
    /// No joint torque at all.
    Limp,
}

/// Per-joint quantities observed over one control step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// Mean applied servo torque over the step, N m.
    pub torques: Vec<f64>,
    /// Largest |torque| applied in any substep.
    pub peak_torques: Vec<f64>,
}

/// Advances one control step with position servos; see [`advance`].
pub fn step(
    state: &RobotState,
    joint_targets: &[f64],
    gains: &ServoGains,
    friction: &FrictionModel,
    config: &DynamicsConfig,
) -> Result<RobotState> {
    advance(state, Actuation::Servo { targets: joint_targets, gains: *gains }, friction, config)
        .map(|(s, _)| s)
}

struct PinRow {
    r_a: Vec2,
    r_b: Vec2,
    // inverse of the 2x2 effective-mass matrix, row major
    k_inv: [f64; 4],
    bias: Vec2,
    impulse: Vec2,
}

struct MotorRow {
    target: f64,
    error: f64,
    inv_mass: f64,
    impulse: f64,
}

/// Advances `state` by exactly `config.dt_control`.
///
/// Each substep applies the exact viscous decay of every link in its body
/// frame, then resolves servos and pins by sequential impulses, then
/// integrates positions and projects each pin closed `position_iters` times. Servos are implicit: the applied torque equals the
/// clamped PD law evaluated at the end-of-substep joint state, which keeps the
/// stiff damping term stable at the default substep.
pub fn advance(
    state: &RobotState,
    actuation: Actuation<'_>,
    friction: &FrictionModel,
    config: &DynamicsConfig,
) -> Result<(RobotState, StepReport)> {
    let n_joints = state.n_joints();
    if let Actuation::Servo { targets, gains } = actuation {
        if targets.len() != n_joints {
            return Err(Error::DimensionMismatch { expected: n_joints, got: targets.len() });
        }
        gains.validate()?;
    }

    let h = config.dt_control / config.substeps as f64;
    let inv_h = 1.0 / h;
    let mut links = state.links.clone();
    let mut torque_sum = vec![0.0; n_joints];
    let mut peak = vec![0.0f64; n_joints];
    let mut pins: Vec<PinRow> = Vec::with_capacity(n_joints);
    let mut motors: Vec<MotorRow> = Vec::with_capacity(n_joints);
    let mut warm_pins = vec![Vec2::ZERO; n_joints];
    let mut warm_motors = vec![0.0; n_joints];

    let decay_t: Vec<f64> = links.iter().map(|l| (-friction.c_t * h / l.mass).exp()).collect();
    let decay_n: Vec<f64> = links.iter().map(|l| (-friction.c_n * h / l.mass).exp()).collect();
    let decay_r: Vec<f64> = links.iter().map(|l| (-friction.c_rot * h / l.inertia).exp()).collect();

    for _ in 0..config.substeps {
        let axes: Vec<Vec2> = links.iter().map(LinkState::axis).collect();

        for (i, l) in links.iter_mut().enumerate() {
            let t = axes[i];
            let n = t.perp();
            let v_t = l.lin_vel.dot(t) * decay_t[i];
            let v_n = l.lin_vel.dot(n) * decay_n[i];
            l.lin_vel = t * v_t + n * v_n;
            l.ang_vel *= decay_r[i];
        }

        pins.clear();
        motors.clear();
        for j in 0..n_joints {
            let (a, b) = (&links[j], &links[j + 1]);
            let r_a = axes[j] * -a.half_len;
            let r_b = axes[j + 1] * b.half_len;
            let (ia, ib) = (1.0 / a.inertia, 1.0 / b.inertia);
            let m = 1.0 / a.mass + 1.0 / b.mass;
            let k11 = m + ia * r_a.y * r_a.y + ib * r_b.y * r_b.y;
            let k12 = -ia * r_a.x * r_a.y - ib * r_b.x * r_b.y;
            let k22 = m + ia * r_a.x * r_a.x + ib * r_b.x * r_b.x;
            let det = k11 * k22 - k12 * k12;
            let k_inv = [k22 / det, -k12 / det, -k12 / det, k11 / det];
            let gap = (a.position + r_a) - (b.position + r_b);
            pins.push(PinRow { r_a, r_b, k_inv, bias: gap * (config.baumgarte_beta * inv_h), impulse: warm_pins[j] });

            if let Actuation::Servo { targets, .. } = actuation {
                let angle = wrap_angle(a.heading - b.heading);
                motors.push(MotorRow {
                    target: targets[j],
                    error: wrap_angle(targets[j] - angle),
                    inv_mass: ia + ib,
                    impulse: warm_motors[j],
                });
            }
        }

        // warm start from the previous substep
        for (j, p) in pins.iter().enumerate() {
            apply_pin_impulse(&mut links, j, p, p.impulse);
        }
        for (j, m) in motors.iter().enumerate() {
            apply_motor_impulse(&mut links, j, m.impulse);
        }

        for _ in 0..config.solver_iters {
            if let Actuation::Servo { gains, .. } = actuation {
                let c = gains.kp * h + gains.kd;
                let limit = gains.tau_max * h;
                for (j, m) in motors.iter_mut().enumerate() {
                    let rate = links[j].ang_vel - links[j + 1].ang_vel;
                    let wanted = h * (gains.kp * m.error - c * rate) - m.impulse;
                    let delta = wanted / (1.0 + h * c * m.inv_mass);
                    let total = (m.impulse + delta).clamp(-limit, limit);
                    let applied = total - m.impulse;
                    m.impulse = total;
                    apply_motor_impulse(&mut links, j, applied);
                }
            }
            for (j, p) in pins.iter_mut().enumerate() {
                let (a, b) = (&links[j], &links[j + 1]);
                let v_a = a.lin_vel + p.r_a.perp() * a.ang_vel;
                let v_b = b.lin_vel + p.r_b.perp() * b.ang_vel;
                let rhs = (v_a - v_b) + p.bias;
                let k = &p.k_inv;
                let lambda = Vec2::new(-(k[0] * rhs.x + k[1] * rhs.y), -(k[2] * rhs.x + k[3] * rhs.y));
                p.impulse += lambda;
                apply_pin_impulse(&mut links, j, p, lambda);
            }
        }

        for (j, m) in motors.iter().enumerate() {
            let tau = m.impulse * inv_h;
            torque_sum[j] += tau;
            peak[j] = peak[j].max(tau.abs());
            warm_motors[j] = m.impulse;
            debug_assert!(m.target.is_finite());
        }
        for (j, p) in pins.iter().enumerate() {
            warm_pins[j] = p.impulse;
        }

        for l in links.iter_mut() {
            l.position += l.lin_vel * h;
            l.heading += l.ang_vel * h;
        }
        for _ in 0..config.position_iters {
            project_pins(&mut links);
        }
    }

    let next = RobotState { links, time: state.time + config.dt_control };
    if !next.is_finite() {
        return Err(Error::StateDiverged { time: next.time });
    }
    let inv_sub = 1.0 / config.substeps as f64;
    let report = StepReport { torques: torque_sum.into_iter().map(|t| t * inv_sub).collect(), peak_torques: peak };
    Ok((next, report))
}

/// Moves each adjacent pair apart along the pin's effective mass so the
/// linearized gap closes; positions only, velocities are untouched.
fn project_pins(links: &mut [LinkState]) {
    for j in 0..links.len() - 1 {
        let (a, b) = (&links[j], &links[j + 1]);
        let r_a = a.axis() * -a.half_len;
        let r_b = b.axis() * b.half_len;
        let gap = (a.position + r_a) - (b.position + r_b);
        let (ia, ib) = (1.0 / a.inertia, 1.0 / b.inertia);
        let m = 1.0 / a.mass + 1.0 / b.mass;
        let k11 = m + ia * r_a.y * r_a.y + ib * r_b.y * r_b.y;
        let k12 = -ia * r_a.x * r_a.y - ib * r_b.x * r_b.y;
        let k22 = m + ia * r_a.x * r_a.x + ib * r_b.x * r_b.x;
        let det = k11 * k22 - k12 * k12;
        let p = Vec2::new(-(k22 * gap.x - k12 * gap.y) / det, -(-k12 * gap.x + k11 * gap.y) / det);
        let a = &mut links[j];
        a.position += p * (1.0 / a.mass);
        a.heading += r_a.cross(p) / a.inertia;
        let b = &mut links[j + 1];
        b.position -= p * (1.0 / b.mass);
        b.heading -= r_b.cross(p) / b.inertia;
    }
}

#[inline]
fn apply_pin_impulse(links: &mut [LinkState], j: usize, pin: &PinRow, p: Vec2) {
    let a = &mut links[j];
    a.lin_vel += p * (1.0 / a.mass);
    a.ang_vel += pin.r_a.cross(p) / a.inertia;
    let b = &mut links[j + 1];
    b.lin_vel -= p * (1.0 / b.mass);
    b.ang_vel -= pin.r_b.cross(p) / b.inertia;
}

#[inline]
fn apply_motor_impulse(links: &mut [LinkState], j: usize, impulse: f64) {
    links[j].ang_vel += impulse / links[j].inertia;
    links[j + 1].ang_vel -= impulse / links[j + 1].inertia;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn build_robot_places_straight_chain() {
        let s = build_robot(17, &Geometry { link_length: 0.25, link_mass: 0.1 }).unwrap();
        assert_eq!(s.links.len(), 18);
        assert_eq!(s.head().position, Vec2::ZERO);
        let tail = s.links.last().unwrap();
        let length = (tail.rear_pin() - s.head().front_pin()).norm();
        assert_abs_diff_eq!(length, 4.5, epsilon = 1e-12);
        assert!(s.max_pin_gap() < 1e-15);
        assert_eq!(s.time, 0.0);
        assert!(s.joint_angles().iter().all(|&q| q == 0.0));
    }

    #[test]
    fn build_robot_single_joint_pin() {
        let s = build_robot(1, &Geometry { link_length: 1.0, link_mass: 1.0 }).unwrap();
        let pin = s.links[0].rear_pin();
        assert_abs_diff_eq!(pin.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pin.y, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!((s.links[1].front_pin() - pin).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn build_robot_rejects_bad_input() {
        assert!(build_robot(0, &Geometry::default()).is_err());
        assert!(build_robot(3, &Geometry { link_length: 0.0, link_mass: 0.1 }).is_err());
        assert!(build_robot(3, &Geometry { link_length: 0.25, link_mass: -1.0 }).is_err());
    }

    #[test]
    fn servo_law() {
        let g = ServoGains { kp: 20.0, kd: 0.5, tau_max: 10.0 };
        assert_eq!(servo_torque(0.3, 0.0, 0.3, &g), 0.0);
        assert_abs_diff_eq!(servo_torque(0.0, 0.0, 0.1, &g), 2.0, epsilon = 1e-12);
        assert_eq!(servo_torque(0.0, 0.0, 10.0, &g), 10.0);
        assert_eq!(servo_torque(0.0, 0.0, -10.0, &g), -10.0);
    }

    #[test]
    fn friction_cases() {
        let model = FrictionModel { c_n: 3.0, c_t: 0.03, c_rot: 0.01 };
        let mut link = build_robot(1, &Geometry::default()).unwrap().links[0];
        assert_eq!(friction_force(&link, &model), (Vec2::ZERO, 0.0));

        link.lin_vel = link.axis();
        let (ft, _) = friction_force(&link, &model);
        assert_abs_diff_eq!(ft.norm(), 0.03, epsilon = 1e-12);
        assert!(ft.dot(link.lin_vel) < 0.0);

        link.lin_vel = link.axis().perp();
        let (fn_, _) = friction_force(&link, &model);
        assert_abs_diff_eq!(fn_.norm(), 3.0, epsilon = 1e-12);
        assert!(fn_.dot(link.lin_vel) < 0.0);
        assert_abs_diff_eq!(fn_.norm() / ft.norm(), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn target_length_mismatch_is_an_error() {
        let s = build_robot(3, &Geometry::default()).unwrap();
        let r = step(&s, &[0.0; 2], &ServoGains::default(), &FrictionModel::default(), &DynamicsConfig::default());
        assert!(matches!(r, Err(Error::DimensionMismatch { expected: 3, got: 2 })));
    }

    #[test]
    fn divergence_is_reported() {
        let mut s = build_robot(2, &Geometry::default()).unwrap();
        s.links[1].lin_vel = Vec2::new(f64::MAX, f64::MAX);
        let r = advance(&s, Actuation::Limp, &FrictionModel::FRICTIONLESS, &DynamicsConfig::default());
        assert!(matches!(r, Err(Error::StateDiverged { .. })));
    }

    #[test]
    fn equilibrium_is_preserved() {
        let s = build_robot(5, &Geometry::default()).unwrap();
        let targets = s.joint_angles();
        let next = step(&s, &targets, &ServoGains::default(), &FrictionModel::default(), &DynamicsConfig::default())
            .unwrap();
        assert_abs_diff_eq!(next.time, 1.0 / 30.0, epsilon = 1e-15);
        for (a, b) in s.links.iter().zip(&next.links) {
            assert!((a.position - b.position).norm() < 1e-12);
            assert!((a.heading - b.heading).abs() < 1e-12);
            assert!(b.lin_vel.norm() < 1e-10 && b.ang_vel.abs() < 1e-10);
        }
    }

    #[test]
    fn projection_closes_pin_gaps_without_touching_velocities() {
        let mut s = build_robot(4, &Geometry::default()).unwrap();
        for (i, l) in s.links.iter_mut().enumerate() {
            l.position.x += 0.01 * i as f64;
            l.lin_vel = Vec2::new(0.1, 0.0);
        }
        let before = s.max_pin_gap();
        let (com, p) = (s.centroid(), s.linear_momentum());
        project_pins(&mut s.links);
        assert!(s.max_pin_gap() < before);
        for _ in 0..20 {
            project_pins(&mut s.links);
        }
        assert!(s.max_pin_gap() < 1e-3 * before);
        assert!((s.centroid() - com).norm() < 1e-15);
        assert_eq!(s.linear_momentum(), p);
    }
}

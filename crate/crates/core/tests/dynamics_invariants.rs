use proptest::prelude::*;
use snakelab_core::dynamics::{advance, build_robot, step, Actuation, DynamicsConfig, FrictionModel, Geometry, ServoGains};
use snakelab_core::gait::serpenoid_targets;
use snakelab_core::Vec2;

fn kicked(n: usize, kicks: &[(f64, f64, f64)]) -> snakelab_core::dynamics::RobotState {
    let mut s = build_robot(n, &Geometry::default()).unwrap();
    for (l, &(vx, vy, w)) in s.links.iter_mut().zip(kicks.iter().cycle()) {
        l.lin_vel = Vec2::new(vx, vy);
        l.ang_vel = w;
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frictionless_momentum_is_conserved(
        n in 2usize..10,
        kicks in prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5, -2.0f64..2.0), 1..6),
        targets in prop::collection::vec(-0.8f64..0.8, 10),
    ) {
        let mut s = kicked(n, &kicks);
        let p0 = s.linear_momentum();
        prop_assume!(p0.norm() > 1e-3);
        let cfg = DynamicsConfig::default();
        for _ in 0..30 {
            s = advance(&s, Actuation::Servo { targets: &targets[..n], gains: ServoGains::default() },
                &FrictionModel::FRICTIONLESS, &cfg).unwrap().0;
        }
        prop_assert!((s.linear_momentum() - p0).norm() <= 1e-9 * p0.norm().max(1.0));
    }

    #[test]
    fn passive_chain_loses_energy(
        n in 1usize..10,
        kicks in prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5, -2.0f64..2.0), 1..6),
    ) {
        let mut s = kicked(n, &kicks);
        let cfg = DynamicsConfig::default();
        s = advance(&s, Actuation::Limp, &FrictionModel::default(), &cfg).unwrap().0;
        let mut ke = s.kinetic_energy();
        for _ in 0..60 {
            s = advance(&s, Actuation::Limp, &FrictionModel::default(), &cfg).unwrap().0;
            prop_assert!(s.kinetic_energy() <= ke * (1.0 + 1e-12) + 1e-15);
            ke = s.kinetic_energy();
        }
    }
}

#[test]
fn serpenoid_driving_keeps_pins_closed_and_torques_bounded() {
    let geometry = Geometry::default();
    let gait = snakelab_core::gait::GaitParams::baseline(17);
    let gains = ServoGains::default();
    let cfg = DynamicsConfig::default();
    let mut s = build_robot(17, &geometry).unwrap();
    for _ in 0..300 {
        let q = serpenoid_targets(s.time, &gait, 17);
        let (next, rep) = advance(&s, Actuation::Servo { targets: &q, gains }, &FrictionModel::default(), &cfg).unwrap();
        assert!(rep.peak_torques.iter().all(|t| *t <= gains.tau_max + 1e-12));
        assert!(next.max_pin_gap() < 1e-3);
        s = next;
    }
    assert!(s.centroid().y < 2.25, "the chain should crawl toward -y, centroid at {:?}", s.centroid());
}

#[test]
fn tangential_decay_is_exponential() {
    let mut s = build_robot(1, &Geometry::default()).unwrap();
    for l in &mut s.links {
        l.lin_vel = Vec2::new(0.0, -1.0);
    }
    let f = FrictionModel::default();
    let cfg = DynamicsConfig::default();
    let m = s.links[0].mass;
    for _ in 0..90 {
        s = step(&s, &[0.0], &ServoGains::default(), &f, &cfg).unwrap();
    }
    let expect = (-f.c_t * s.time / m).exp();
    assert!((s.links[0].lin_vel.norm() / expect - 1.0).abs() < 1e-3);
}

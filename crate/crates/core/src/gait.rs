//! Serpenoid-curve joint targets: the scripted baseline controller.

use std::f64::consts::TAU;

/// Amplitude, temporal frequency and per-joint phase lag of the body wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitParams {
    /// rad
    pub amplitude: f64,
    /// rad/s
    pub speed: f64,
    /// rad
    pub phase_offset: f64,
}

impl GaitParams {
    /// Baseline for a `n_joints` chain: one full wave along the body.
    pub fn baseline(n_joints: usize) -> Self {
        Self { amplitude: 0.6, speed: 3.0, phase_offset: TAU / n_joints as f64 }
    }

    pub fn is_valid(&self) -> bool {
        self.amplitude >= 0.0 && self.speed >= 0.0 && self.phase_offset.is_finite() && self.amplitude.is_finite()
    }
}

/// Target angle of joint `i` (1-indexed) at wave phase `phase`.
#[inline]
pub fn joint_target(phase: f64, amplitude: f64, phase_offset: f64, i: usize) -> f64 {
    amplitude * (phase - (i as f64 - 1.0) * phase_offset).sin()
}

/// `A sin(w t - (i - 1) phi)` for `i = 1..=n_joints`.
pub fn serpenoid_targets(t: f64, params: &GaitParams, n_joints: usize) -> Vec<f64> {
    let phase = params.speed * t;
    (1..=n_joints)
        .map(|i| joint_target(phase, params.amplitude, params.phase_offset, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn closed_form_values() {
        let p = GaitParams { amplitude: 0.8, speed: 2.0, phase_offset: 0.5 };
        assert_eq!(serpenoid_targets(0.0, &p, 1)[0], 0.0);

        let p = GaitParams { amplitude: 1.0, speed: 1.0, phase_offset: FRAC_PI_2 };
        assert_abs_diff_eq!(serpenoid_targets(0.0, &p, 2)[1], -1.0, epsilon = 1e-15);

        let p = GaitParams { amplitude: 0.5, speed: PI, phase_offset: FRAC_PI_4 };
        assert_abs_diff_eq!(serpenoid_targets(1.0, &p, 3)[2], 0.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn bounded_by_amplitude(t in 0.0..100.0f64, a in 0.0..2.0f64, w in 0.0..10.0f64, phi in -3.0..3.0f64) {
            let p = GaitParams { amplitude: a, speed: w, phase_offset: phi };
            for th in serpenoid_targets(t, &p, 17) {
                prop_assert!(th.abs() <= a);
            }
        }

        #[test]
        fn wave_travels_down_the_body(t in 1.0..50.0f64, w in 0.5..8.0f64, phi in 0.05..1.0f64) {
            let p = GaitParams { amplitude: 0.6, speed: w, phase_offset: phi };
            let now = serpenoid_targets(t, &p, 10);
            let earlier = serpenoid_targets(t - phi / w, &p, 10);
            for i in 0..9 {
                prop_assert!((now[i + 1] - earlier[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn periodic_in_time(t in 0.0..20.0f64, w in 0.5..8.0f64) {
            let p = GaitParams { amplitude: 0.6, speed: w, phase_offset: 0.37 };
            let a = serpenoid_targets(t, &p, 17);
            let b = serpenoid_targets(t + TAU / w, &p, 17);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

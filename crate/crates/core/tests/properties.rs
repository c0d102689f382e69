//! Property-based invariants across the synthesis and simulation stack.

use dsj_core::model::{
    Frame, PulleyGeometry, ScheduleSample, ScheduleTarget, SpringConstants, StiffnessMatrix,
    StiffnessSchedule,
};
use dsj_core::sim::{stiffness_ellipse, LinearTorqueModel, TorqueModel};
use dsj_core::stiffness;
use dsj_core::synthesis;
use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;

fn reference_pulleys() -> PulleyGeometry {
    PulleyGeometry::coupled_2dof(0.012, 0.012, 0.012, 1.0).unwrap()
}

fn reference_springs() -> SpringConstants {
    SpringConstants::new(875.63, 875.63, 875.63).unwrap()
}

proptest! {
    /// Solving any feasible alpha schedule and recomposing the passive
    /// stiffness from the solved radii reproduces the target everywhere.
    #[test]
    fn solve_then_recompose_is_identity(
        a_lo in 0.05f64..0.9,
        da in 0.01f64..0.05,
        span in 1.0f64..15.0,
        samples in 5usize..40,
    ) {
        let a_hi = (a_lo + da).min(0.95);
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let schedule = StiffnessSchedule::linear_alpha(a_lo, a_hi, 0.0, span, samples).unwrap();
        let profile = synthesis::solve_spiral_radii(&schedule, &pulleys, &springs).unwrap();
        let km = stiffness::k_max(&pulleys, &springs).unwrap();
        for (i, s) in schedule.samples().iter().enumerate() {
            let alpha = match s.target {
                ScheduleTarget::Alpha(a) => a,
                _ => unreachable!(),
            };
            let target = km.matrix() * alpha;
            let got = synthesis::recompose_at(&profile, i, &pulleys, &springs).unwrap();
            let err = (got.matrix() - &target).norm() / target.norm();
            prop_assert!(err < 1e-9, "sample {}: relative error {}", i, err);
        }
    }

    /// Every accepted design stays below the rigid-spiral bound:
    /// K_max - K_passive is positive semidefinite.
    #[test]
    fn accepted_designs_stay_below_k_max(alpha in 0.01f64..0.99) {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let km = stiffness::k_max(&pulleys, &springs).unwrap();
        let r = synthesis::symmetric_alpha_radius(alpha, 0.012);
        let k = synthesis::passive_stiffness_from_radii(r, r, &pulleys, &springs).unwrap();
        let gap = km.matrix() - k.matrix();
        let min_eig = gap.symmetric_eigenvalues().min();
        prop_assert!(min_eig >= -1e-9 * km.trace());
    }

    /// Targets at or above the bound are rejected with the infeasible
    /// error, never silently clamped.
    #[test]
    fn targets_at_or_above_bound_rejected(scale in 1.0f64..3.0) {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let km = stiffness::k_max(&pulleys, &springs).unwrap();
        let target = StiffnessMatrix::new(km.matrix() * scale, Frame::JointLevel).unwrap();
        let res = stiffness::required_spiral_stiffness(&target, &pulleys, &springs);
        let rejected = matches!(res, Err(dsj_core::Error::InfeasibleTarget { .. }));
        prop_assert!(rejected);
    }

    /// Interpolated radii never leave the solved sample envelope for a
    /// monotone schedule, and queries are clamped at the grid ends.
    #[test]
    fn radius_interpolation_stays_in_envelope(q in -1.0f64..14.0) {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let schedule =
            StiffnessSchedule::linear_alpha(0.2, 0.8, 0.0, 4.0 * std::f64::consts::PI, 61)
                .unwrap();
        let profile = synthesis::solve_spiral_radii(&schedule, &pulleys, &springs).unwrap();
        for joint in 0..2 {
            let r = profile.radius_at(joint, q.clamp(0.0, 4.0 * std::f64::consts::PI));
            let lo = profile.radii[joint][0];
            let hi = *profile.radii[joint].last().unwrap();
            prop_assert!(r >= lo - 1e-15 && r <= hi + 1e-15);
        }
    }

    /// Ellipse regression is exact on any linear symmetric positive
    /// definite torque model, for any radius and sample count.
    #[test]
    fn linear_regression_exact_for_any_spd_model(
        k11 in 0.01f64..1.0,
        k22 in 0.01f64..1.0,
        c in -0.9f64..0.9,
        radius in 1e-3f64..1.0,
        samples in 3usize..100,
    ) {
        let k12 = c * (k11 * k22).sqrt();
        let k = Matrix2::new(k11, k12, k12, k22);
        let model = LinearTorqueModel { k };
        let res = stiffness_ellipse(&model, radius, samples).unwrap();
        let got = Matrix2::from_iterator(res.k_regressed.matrix().iter().copied());
        prop_assert!((got - k).norm() / k.norm() < 1e-9);
        prop_assert!(res.semi_axes.0 >= res.semi_axes.1);
        prop_assert!(res.semi_axes.1 > 0.0);
        prop_assert!(
            res.orientation > -std::f64::consts::FRAC_PI_2
                && res.orientation <= std::f64::consts::FRAC_PI_2
        );
    }

    /// The torque of the nonlinear spiral model is odd only up to the
    /// radius variation, but it always opposes the deviation energetically
    /// near the working point.
    #[test]
    fn dsj_torque_opposes_deviation(angle in 0.0f64..(2.0 * std::f64::consts::PI)) {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let schedule =
            StiffnessSchedule::linear_alpha(0.2, 0.8, 0.0, 4.0 * std::f64::consts::PI, 361)
                .unwrap();
        let profile = synthesis::solve_spiral_radii(&schedule, &pulleys, &springs).unwrap();
        let model = dsj_core::sim::DsjTorqueModel {
            profile: &profile,
            pulleys: &pulleys,
            springs: &springs,
            q_s0: 2.0 * std::f64::consts::PI,
        };
        let dq = Vector2::new(angle.cos(), angle.sin()) * 0.3;
        let tau = model.torque(&dq);
        prop_assert!(tau.dot(&dq) < 0.0);
    }

    /// Schedule samples must be strictly increasing in the spiral angle.
    #[test]
    fn non_monotone_schedule_rejected(q1 in 0.0f64..5.0) {
        let mk = |q: f64| ScheduleSample {
            q_s: q,
            target: ScheduleTarget::Alpha(0.5),
        };
        let res = StiffnessSchedule::new(vec![mk(q1), mk(q1)]);
        prop_assert!(res.is_err());
    }
}

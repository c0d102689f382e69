//! Shared fixtures for the pipeline benchmarks.

use dsj_core::model::{PulleyGeometry, SpringConstants, StiffnessSchedule};
use dsj_core::synthesis::{self, SpiralProfile};

pub fn reference_pulleys() -> PulleyGeometry {
    PulleyGeometry::coupled_2dof(0.012, 0.012, 0.012, 1.0).unwrap()
}

pub fn reference_springs() -> SpringConstants {
    SpringConstants::new(875.63, 875.63, 875.63).unwrap()
}

pub fn reference_schedule(samples: usize) -> StiffnessSchedule {
    StiffnessSchedule::linear_alpha(0.2, 0.8, 0.0, 4.0 * std::f64::consts::PI, samples).unwrap()
}

pub fn reference_profile(samples: usize) -> SpiralProfile {
    synthesis::solve_spiral_radii(
        &reference_schedule(samples),
        &reference_pulleys(),
        &reference_springs(),
    )
    .unwrap()
}

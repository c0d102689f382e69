//! Design and simulation toolkit for differential spiral joint (DSJ)
//! variable-stiffness tendon mechanisms.
//!
//! The pipeline goes: describe the mechanism and a passive-stiffness
//! schedule ([`model`]), compose and bound the reachable stiffness
//! ([`stiffness`]), solve the spiral cam radii realizing the schedule and
//! generate manufacturable grooves ([`synthesis`]), map joint stiffness
//! into the task space of a planar finger ([`kinematics`]), verify the
//! design by simulated experiments ([`sim`]), and persist reproducible
//! results ([`io`]).

pub mod error;
pub mod io;
pub mod kinematics;
pub mod model;
pub mod sim;
pub mod stiffness;
pub mod synthesis;

pub use error::{Error, ErrorCategory, Result, SpringPath};
pub use kinematics::JacobianBundle;
pub use model::{
    DynamicsParams, FingerGeometry, Frame, GraspMode, JointState, ModelBundle, PlanarPose,
    PulleyGeometry, RawConfig, ScheduleSample, ScheduleTarget, SpringConstants, StiffnessMatrix,
    StiffnessSchedule, TaskState, TendonState,
};
pub use sim::{EllipseResult, ResponseMetrics, TimeSeries};
pub use synthesis::{AssumptionReport, GroovePair, GroovePoint, SpiralProfile};

//! Domain types, unit conventions, and configuration validation.
//!
//! Configuration files use millimetres and degrees; everything past
//! [`validate_config`] is SI (metres, radians, newtons).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MM_TO_M: f64 = 1e-3;

/// Effective linear stiffness (N/m) of each antagonistic tendon pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpringConstants {
    /// Position-tendon pair.
    pub k_p: f64,
    /// Stiffness-tendon pair (spiral path).
    pub k_s: f64,
    /// Joint-tendon pair.
    pub k_j: f64,
}

impl SpringConstants {
    pub fn new(k_p: f64, k_s: f64, k_j: f64) -> Result<Self> {
        for (name, v) in [("k_p", k_p), ("k_s", k_s), ("k_j", k_j)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation {
                    field: format!("springs.{name}"),
                    message: format!("must be strictly positive and finite, got {v}"),
                });
            }
        }
        Ok(Self { k_p, k_s, k_j })
    }
}

/// Pulley radius matrices (m) and the amplification ratio `n`.
///
/// `r_j` couples joint rotations to tendon travel (lower-triangular for the
/// coupled finger), `r_d` and `r_p` are diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PulleyGeometry {
    pub r_j: DMatrix<f64>,
    pub r_d: DMatrix<f64>,
    pub r_p: DMatrix<f64>,
    pub n: f64,
}

fn check_diagonal_positive(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if i == j {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Validation {
                        field: name.to_string(),
                        message: format!("diagonal entry {i} must be positive, got {v}"),
                    });
                }
            } else if v != 0.0 {
                return Err(Error::Validation {
                    field: name.to_string(),
                    message: format!("must be diagonal, entry ({i},{j}) = {v}"),
                });
            }
        }
    }
    Ok(())
}

impl PulleyGeometry {
    pub fn new(r_j: DMatrix<f64>, r_d: DMatrix<f64>, r_p: DMatrix<f64>, n: f64) -> Result<Self> {
        if !r_j.is_square() || r_j.shape() != r_d.shape() || r_j.shape() != r_p.shape() {
            return Err(Error::Shape(format!(
                "pulley matrices must be square with matching shapes: R_J {:?}, R_D {:?}, R_P {:?}",
                r_j.shape(),
                r_d.shape(),
                r_p.shape()
            )));
        }
        for i in 0..r_j.nrows() {
            let v = r_j[(i, i)];
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation {
                    field: "pulleys.r_j".into(),
                    message: format!("diagonal entry {i} must be positive, got {v}"),
                });
            }
        }
        check_diagonal_positive("pulleys.r_d", &r_d)?;
        check_diagonal_positive("pulleys.r_p", &r_p)?;
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Validation {
                field: "pulleys.n".into(),
                message: format!("amplification ratio must be positive, got {n}"),
            });
        }
        Ok(Self { r_j, r_d, r_p, n })
    }

    /// Coupled 2-DoF finger geometry: lower-triangular `R_J`, diagonal `R_D`
    /// and `R_P`, all built from scalar radii.
    pub fn coupled_2dof(r_j: f64, r_d: f64, r_p: f64, n: f64) -> Result<Self> {
        let rj = DMatrix::from_row_slice(2, 2, &[r_j, 0.0, r_j, r_j]);
        let rd = DMatrix::from_diagonal(&DVector::from_element(2, r_d));
        let rp = DMatrix::from_diagonal(&DVector::from_element(2, r_p));
        Self::new(rj, rd, rp, n)
    }

    pub fn dof(&self) -> usize {
        self.r_j.nrows()
    }
}

/// Frame a stiffness matrix is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    JointLevel,
    DifferentialLevel,
    TaskLevel,
}

/// Symmetric positive-semidefinite stiffness matrix with a frame tag.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMatrix {
    entries: DMatrix<f64>,
    frame: Frame,
}

pub const SYMMETRY_REL_TOL: f64 = 1e-9;
pub const PSD_EIG_TOL: f64 = 1e-12;

impl StiffnessMatrix {
    /// Validates symmetry (1e-9 relative) and positive semidefiniteness
    /// (eigenvalues >= -1e-12 * trace).
    pub fn new(entries: DMatrix<f64>, frame: Frame) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Shape(format!(
                "stiffness matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries.norm().max(f64::MIN_POSITIVE);
        let asym = (&entries - entries.transpose()).norm();
        if asym > SYMMETRY_REL_TOL * scale {
            return Err(Error::Numerical(format!(
                "stiffness matrix not symmetric (relative asymmetry {:.3e})",
                asym / scale
            )));
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        let min_eig = sym.clone().symmetric_eigenvalues().min();
        let trace = sym.trace();
        if min_eig < -PSD_EIG_TOL * trace.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "stiffness matrix not positive semidefinite (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(Self { entries: sym, frame })
    }

    /// Symmetrizes first, then validates. Convenience for finite-difference
    /// and composed results that carry roundoff asymmetry.
    pub fn from_symmetrized(entries: DMatrix<f64>, frame: Frame) -> Result<Self> {
        let sym = (&entries + entries.transpose()) * 0.5;
        Self::new(sym, frame)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        self.entries.clone().symmetric_eigenvalues()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

/// Tendon length changes (m) from joint rotation and motor rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct TendonState {
    pub l_j: DVector<f64>,
    pub l_m: DVector<f64>,
}

impl TendonState {
    pub fn new(l_j: DVector<f64>, l_m: DVector<f64>) -> Result<Self> {
        if l_j.len() != l_m.len() {
            return Err(Error::Shape(format!(
                "tendon length vectors disagree: {} vs {}",
                l_j.len(),
                l_m.len()
            )));
        }
        if l_j.iter().chain(l_m.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite tendon length change".into()));
        }
        Ok(Self { l_j, l_m })
    }
}

/// Joint angles (rad) and velocities (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Result<Self> {
        if q.len() != qdot.len() {
            return Err(Error::Shape(format!(
                "joint state vectors disagree: {} vs {}",
                q.len(),
                qdot.len()
            )));
        }
        Ok(Self { q, qdot })
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let qdot = DVector::zeros(q.len());
        Self { q, qdot }
    }
}

/// Desired stiffness at one spiral-joint angle: either a fraction of the
/// achievable maximum or an explicit joint-level target matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleTarget {
    Alpha(f64),
    Matrix(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSample {
    pub q_s: f64,
    pub target: ScheduleTarget,
}

/// Desired passive-stiffness schedule over the spiral-joint angle `q_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessSchedule {
    samples: Vec<ScheduleSample>,
}

impl StiffnessSchedule {
    pub fn new(samples: Vec<ScheduleSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Grid("schedule has no samples".into()));
        }
        for pair in samples.windows(2) {
            if pair[1].q_s <= pair[0].q_s {
                return Err(Error::Grid(format!(
                    "schedule q_s not strictly increasing at {} -> {}",
                    pair[0].q_s, pair[1].q_s
                )));
            }
        }
        for s in &samples {
            if let ScheduleTarget::Alpha(a) = s.target {
                if !(a > 0.0 && a < 1.0) {
                    // alpha outside the open interval has no feasible spiral
                    return Err(Error::InfeasibleTarget {
                        eigenvalue: a,
                        bound: 1.0,
                        q_s: Some(s.q_s),
                    });
                }
            }
        }
        Ok(Self { samples })
    }

    /// Linear ramp of `alpha` over `n` samples spanning `[q_lo, q_hi]`.
    pub fn linear_alpha(alpha_lo: f64, alpha_hi: f64, q_lo: f64, q_hi: f64, n: usize) -> Result<Self> {
        if n < 2 || q_hi <= q_lo {
            return Err(Error::Grid(format!(
                "need at least 2 samples and q_hi > q_lo, got n={n}, range [{q_lo}, {q_hi}]"
            )));
        }
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                ScheduleSample {
                    q_s: q_lo + t * (q_hi - q_lo),
                    target: ScheduleTarget::Alpha(alpha_lo + t * (alpha_hi - alpha_lo)),
                }
            })
            .collect();
        Self::new(samples)
    }

    pub fn samples(&self) -> &[ScheduleSample] {
        &self.samples
    }

    pub fn q_range(&self) -> (f64, f64) {
        (
            self.samples.first().unwrap().q_s,
            self.samples.last().unwrap().q_s,
        )
    }

    /// Interpolated alpha at `q_s`, linearly extrapolated beyond the grid and
    /// clamped to stay strictly inside (0, 1). Only defined for all-alpha
    /// schedules.
    pub fn alpha_at(&self, q_s: f64) -> Result<f64> {
        let alphas: Vec<(f64, f64)> = self
            .samples
            .iter()
            .map(|s| match s.target {
                ScheduleTarget::Alpha(a) => Ok((s.q_s, a)),
                ScheduleTarget::Matrix(_) => Err(Error::State(
                    "alpha interpolation is only defined for scalar schedules".into(),
                )),
            })
            .collect::<Result<_>>()?;
        let a = if alphas.len() == 1 {
            alphas[0].1
        } else {
            let seg = alphas
                .windows(2)
                .find(|w| q_s <= w[1].0)
                .unwrap_or(&alphas[alphas.len() - 2..]);
            let (q0, a0) = seg[0];
            let (q1, a1) = seg[1];
            a0 + (a1 - a0) * (q_s - q0) / (q1 - q0)
        };
        Ok(a.clamp(1e-3, 1.0 - 1e-3))
    }
}

/// Planar base frame of a finger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Planar 2-link finger geometry (m).
#[derive(Debug, Clone, PartialEq)]
pub struct FingerGeometry {
    pub link_lengths: [f64; 2],
    pub base_pose: PlanarPose,
}

impl FingerGeometry {
    pub fn new(link_lengths: [f64; 2], base_pose: PlanarPose) -> Result<Self> {
        for (i, l) in link_lengths.iter().enumerate() {
            if !(l.is_finite() && *l > 0.0) {
                return Err(Error::Validation {
                    field: format!("finger.link_lengths[{i}]"),
                    message: format!("must be strictly positive, got {l}"),
                });
            }
        }
        Ok(Self {
            link_lengths,
            base_pose,
        })
    }
}

/// Joint-space inertia (kg m^2) and damping (N m s/rad) matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsParams {
    pub inertia: DMatrix<f64>,
    pub damping: DMatrix<f64>,
}

impl DynamicsParams {
    pub fn new(inertia: DMatrix<f64>, damping: DMatrix<f64>) -> Result<Self> {
        if !inertia.is_square() || inertia.shape() != damping.shape() {
            return Err(Error::Shape(format!(
                "inertia {:?} and damping {:?} must be square with equal shapes",
                inertia.shape(),
                damping.shape()
            )));
        }
        let sym_ok = |m: &DMatrix<f64>| {
            (m - m.transpose()).norm() <= 1e-9 * m.norm().max(f64::MIN_POSITIVE)
        };
        if !sym_ok(&inertia) {
            return Err(Error::Validation {
                field: "dynamics.inertia".into(),
                message: "must be symmetric".into(),
            });
        }
        if !sym_ok(&damping) {
            return Err(Error::Validation {
                field: "dynamics.damping".into(),
                message: "must be symmetric".into(),
            });
        }
        if inertia.clone().symmetric_eigenvalues().min() <= 0.0 {
            return Err(Error::Validation {
                field: "dynamics.inertia".into(),
                message: "must be positive definite".into(),
            });
        }
        let b_min = damping.clone().symmetric_eigenvalues().min();
        if b_min < -1e-12 * damping.trace().abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Validation {
                field: "dynamics.damping".into(),
                message: "must be positive semidefinite".into(),
            });
        }
        Ok(Self { inertia, damping })
    }
}

/// Fingertip state in the grasp task frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskState {
    /// Cartesian fingertip position (m).
    pub x: [f64; 2],
    /// Deviation in the grasping direction (m).
    pub delta_p: f64,
    /// Task-space force (N).
    pub f_p: f64,
}

impl TaskState {
    pub fn new(x: [f64; 2], delta_p: f64, f_p: f64) -> Result<Self> {
        if !delta_p.is_finite() || !f_p.is_finite() {
            return Err(Error::Domain("non-finite task state".into()));
        }
        Ok(Self { x, delta_p, f_p })
    }
}

/// How the grasp direction is chosen for the task projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GraspMode {
    /// Fixed Cartesian direction; its derivative w.r.t. position is zero.
    #[default]
    Fixed,
    /// Direction normal to the distal link; configuration-dependent.
    SurfaceNormal,
}

// ---------------------------------------------------------------------------
// Raw configuration (file units: mm, deg) and validation into SI.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawSprings {
    pub k_p: f64,
    pub k_s: f64,
    pub k_j: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawPulleys {
    pub r_j_mm: f64,
    pub r_d_mm: f64,
    /// Defaults to `r_d_mm` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_p_mm: Option<f64>,
    /// Defaults to `r_d_mm / r_j_mm` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawFinger {
    pub link_lengths_mm: [f64; 2],
    pub grasp_direction: [f64; 2],
    #[serde(default)]
    pub grasp_mode: GraspMode,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawDynamics {
    /// Diagonal joint-space inertia (kg m^2).
    pub inertia: [f64; 2],
    /// Diagonal joint-space damping (N m s/rad).
    pub damping: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawSchedule {
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub q_s_start_deg: f64,
    pub q_s_end_deg: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub z_start_mm: f64,
    pub z_end_mm: f64,
}

fn default_samples() -> usize {
    361
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub springs: RawSprings,
    pub pulleys: RawPulleys,
    pub finger: RawFinger,
    pub dynamics: RawDynamics,
    pub schedule: RawSchedule,
}

/// Everything downstream modules need, in SI units, invariants checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub springs: SpringConstants,
    pub pulleys: PulleyGeometry,
    pub finger: FingerGeometry,
    pub grasp_direction: [f64; 2],
    pub grasp_mode: GraspMode,
    pub dynamics: DynamicsParams,
    pub schedule: StiffnessSchedule,
    /// Groove elevation range (m).
    pub z_range: (f64, f64),
    /// Schedule sample count, also the synthesis grid resolution.
    pub grid_samples: usize,
}

/// Validates a raw configuration and converts mm/deg to SI.
pub fn validate_config(raw: &RawConfig) -> Result<ModelBundle> {
    let springs = SpringConstants::new(raw.springs.k_p, raw.springs.k_s, raw.springs.k_j)?;

    let r_j = raw.pulleys.r_j_mm * MM_TO_M;
    let r_d = raw.pulleys.r_d_mm * MM_TO_M;
    let r_p = raw.pulleys.r_p_mm.unwrap_or(raw.pulleys.r_d_mm) * MM_TO_M;
    for (name, v) in [("r_j_mm", r_j), ("r_d_mm", r_d), ("r_p_mm", r_p)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Validation {
                field: format!("pulleys.{name}"),
                message: format!("must be strictly positive, got {} m", v),
            });
        }
    }
    let n = match raw.pulleys.n {
        Some(n) => n,
        None => r_d / r_j,
    };
    let pulleys = PulleyGeometry::coupled_2dof(r_j, r_d, r_p, n)?;

    let finger = FingerGeometry::new(
        [
            raw.finger.link_lengths_mm[0] * MM_TO_M,
            raw.finger.link_lengths_mm[1] * MM_TO_M,
        ],
        PlanarPose::default(),
    )?;
    let dir = raw.finger.grasp_direction;
    let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::Validation {
            field: "finger.grasp_direction".into(),
            message: format!("must be a unit vector, norm is {norm}"),
        });
    }
    let grasp_direction = [dir[0] / norm, dir[1] / norm];

    let dynamics = DynamicsParams::new(
        DMatrix::from_diagonal(&DVector::from_row_slice(&raw.dynamics.inertia)),
        DMatrix::from_diagonal(&DVector::from_row_slice(&raw.dynamics.damping)),
    )?;

    let s = &raw.schedule;
    let schedule = StiffnessSchedule::linear_alpha(
        s.alpha_start,
        s.alpha_end,
        s.q_s_start_deg.to_radians(),
        s.q_s_end_deg.to_radians(),
        s.samples,
    )?;
    let z_range = (s.z_start_mm * MM_TO_M, s.z_end_mm * MM_TO_M);

    Ok(ModelBundle {
        springs,
        pulleys,
        finger,
        grasp_direction,
        grasp_mode: raw.finger.grasp_mode,
        dynamics,
        schedule,
        z_range,
        grid_samples: s.samples,
    })
}

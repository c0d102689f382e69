//! Inverse problem: from a passive-stiffness schedule to spiral radii, plus
//! groove generation, assumption validation, and profile export.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Frame, PulleyGeometry, ScheduleTarget, SpringConstants, StiffnessMatrix, StiffnessSchedule,
};
use crate::stiffness;

/// Tolerance for matching a matrix target against the coupled 2-DoF
/// structure (K12 = K21 = K22, K11 >= K22).
pub const STRUCTURE_REL_TOL: f64 = 1e-6;

/// One point of a 3D groove centerline, cylindrical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroovePoint {
    /// Spiral parameter (rad).
    pub q_s: f64,
    /// Angular coordinate (rad); negated on the mirrored groove.
    pub theta: f64,
    /// Radius (m).
    pub r: f64,
    /// Elevation (m).
    pub z: f64,
}

/// The two mirrored grooves of one spiral joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroovePair {
    pub side_a: Vec<GroovePoint>,
    pub side_b: Vec<GroovePoint>,
}

/// Sampled spiral-joint radii and groove geometry for both joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralProfile {
    /// Sample grid (rad), strictly increasing.
    pub q_s: Vec<f64>,
    /// Per-joint radius samples (m).
    pub radii: [Vec<f64>; 2],
    /// Groove elevation samples (m), set by `generate_groove`.
    pub z_s: Option<Vec<f64>>,
    /// Mirrored groove polylines per joint, set by `generate_groove`.
    pub grooves: Option<[GroovePair; 2]>,
    pub warnings: Vec<String>,
}

impl SpiralProfile {
    /// Linearly interpolated radius of one joint, extrapolated from the end
    /// slopes outside the grid and clamped to stay non-negative.
    pub fn radius_at(&self, joint: usize, q: f64) -> f64 {
        let qs = &self.q_s;
        let rs = &self.radii[joint];
        let n = qs.len();
        if n == 1 {
            return rs[0];
        }
        let seg = if q <= qs[0] {
            0
        } else if q >= qs[n - 1] {
            n - 2
        } else {
            qs.partition_point(|&x| x < q).saturating_sub(1).min(n - 2)
        };
        let t = (q - qs[seg]) / (qs[seg + 1] - qs[seg]);
        (rs[seg] + t * (rs[seg + 1] - rs[seg])).max(0.0)
    }
}

/// Solves the spiral radii realizing a stiffness schedule.
///
/// Per sample the required spiral-path stiffness is computed from the series
/// composition and inverted through the coupled 2-DoF closed form:
/// `r_s2 = sqrt(K22 / (n^2 k_s))`, `r_s1 = sqrt((K11 - K22) / (n^2 k_s))`.
pub fn solve_spiral_radii(
    schedule: &StiffnessSchedule,
    pulleys: &PulleyGeometry,
    springs: &SpringConstants,
) -> Result<SpiralProfile> {
    if pulleys.dof() != 2 {
        return Err(Error::Shape(
            "spiral synthesis is defined for the coupled 2-DoF geometry".into(),
        ));
    }
    let k_max = stiffness::k_max(pulleys, springs)?;
    let n2ks = pulleys.n * pulleys.n * springs.k_s;

    let mut q_grid = Vec::with_capacity(schedule.samples().len());
    let mut r1 = Vec::with_capacity(schedule.samples().len());
    let mut r2 = Vec::with_capacity(schedule.samples().len());
    let mut warnings = Vec::new();

    for sample in schedule.samples() {
        let target = match &sample.target {
            ScheduleTarget::Alpha(a) => {
                StiffnessMatrix::new(k_max.matrix() * *a, Frame::JointLevel)?
            }
            ScheduleTarget::Matrix(m) => StiffnessMatrix::new(m.clone(), Frame::JointLevel)?,
        };
        let k_s_j = stiffness::required_spiral_stiffness(&target, pulleys, springs).map_err(
            |e| match e {
                Error::InfeasibleTarget {
                    eigenvalue, bound, ..
                } => Error::InfeasibleTarget {
                    eigenvalue,
                    bound,
                    q_s: Some(sample.q_s),
                },
                other => other,
            },
        )?;

        let m = k_s_j.matrix();
        let (k11, k12, k21, k22) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let scale = m.norm();
        let residual = (k12 - k22).abs().max((k21 - k22).abs()) / scale;
        if residual > STRUCTURE_REL_TOL {
            return Err(Error::Structure { residual });
        }
        let k22 = (k12 + k21 + k22) / 3.0;
        if k22 <= 0.0 {
            return Err(Error::Structure {
                residual: -k22 / scale,
            });
        }
        if k11 < k22 * (1.0 - STRUCTURE_REL_TOL) {
            return Err(Error::Structure {
                residual: (k22 - k11) / scale,
            });
        }
        let rs2 = (k22 / n2ks).sqrt();
        let rs1 = ((k11 - k22).max(0.0) / n2ks).sqrt();
        if rs1 == 0.0 {
            warnings.push(format!(
                "q_s = {:.6}: r_s1 = 0 (K11 = K22); geometrically degenerate spiral",
                sample.q_s
            ));
        }
        q_grid.push(sample.q_s);
        r1.push(rs1);
        r2.push(rs2);
    }

    Ok(SpiralProfile {
        q_s: q_grid,
        radii: [r1, r2],
        z_s: None,
        grooves: None,
        warnings,
    })
}

/// Maximum angular spacing of groove polyline points: 1 degree.
pub const GROOVE_MAX_SPACING: f64 = std::f64::consts::PI / 180.0;

/// Populates the groove elevation (linear in `q_s`) and the mirrored
/// polyline pair for each joint. The antagonist groove is the exact mirror
/// `theta -> -theta` so the moment arm is identical for both tendons.
pub fn generate_groove(profile: &SpiralProfile, z_range: (f64, f64)) -> Result<SpiralProfile> {
    let (z_lo, z_hi) = z_range;
    if profile.q_s.is_empty() || profile.radii[0].is_empty() {
        return Err(Error::State("spiral radii have not been solved".into()));
    }
    if !(z_hi > z_lo) {
        return Err(Error::Grid(format!(
            "groove elevation range must be non-degenerate, got [{z_lo}, {z_hi}]"
        )));
    }
    let q_lo = profile.q_s[0];
    let q_hi = *profile.q_s.last().unwrap();
    let z_at = |q: f64| z_lo + (z_hi - z_lo) * (q - q_lo) / (q_hi - q_lo);

    let z_s: Vec<f64> = profile.q_s.iter().map(|&q| z_at(q)).collect();

    let segments = ((q_hi - q_lo) / GROOVE_MAX_SPACING).ceil() as usize;
    let n_pts = segments.max(1) + 1;
    let grooves = [0, 1].map(|joint| {
        let side_a: Vec<GroovePoint> = (0..n_pts)
            .map(|i| {
                let t = i as f64 / (n_pts - 1) as f64;
                let q = q_lo + t * (q_hi - q_lo);
                GroovePoint {
                    q_s: q,
                    theta: q,
                    r: profile.radius_at(joint, q),
                    z: z_at(q),
                }
            })
            .collect();
        let side_b = side_a
            .iter()
            .map(|p| GroovePoint {
                theta: -p.theta,
                ..*p
            })
            .collect();
        GroovePair { side_a, side_b }
    });

    Ok(SpiralProfile {
        q_s: profile.q_s.clone(),
        radii: profile.radii.clone(),
        z_s: Some(z_s),
        grooves: Some(grooves),
        warnings: profile.warnings.clone(),
    })
}

/// Validation report for the small-slope assumptions behind the arc-length
/// simplification `dL_S/dq_S ~ R_S`.
///
/// The slope metrics are the worst-case fractional arc-length excess each
/// slope induces over the pure-radius approximation:
/// `sqrt(1 + (dR/dq / R)^2) - 1` and `sqrt(1 + (dZ/dq / R)^2) - 1`. A flat
/// constant-radius spiral scores exactly zero on all three metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub max_slope_ratio_r: f64,
    pub max_slope_ratio_z: f64,
    pub arc_length_rel_error: f64,
    pub threshold: f64,
    pub slope_r_ok: bool,
    pub slope_z_ok: bool,
    pub arc_length_ok: bool,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.slope_r_ok && self.slope_z_ok && self.arc_length_ok
    }
}

pub const DEFAULT_ASSUMPTION_THRESHOLD: f64 = 0.05;

fn gradient(q: &[f64], f: &[f64]) -> Vec<f64> {
    let n = q.len();
    let mut g = vec![0.0; n];
    g[0] = (f[1] - f[0]) / (q[1] - q[0]);
    g[n - 1] = (f[n - 1] - f[n - 2]) / (q[n - 1] - q[n - 2]);
    for i in 1..n - 1 {
        g[i] = (f[i + 1] - f[i - 1]) / (q[i + 1] - q[i - 1]);
    }
    g
}

/// Checks the synthesis assumptions on a generated profile against
/// `threshold` (default [`DEFAULT_ASSUMPTION_THRESHOLD`]).
pub fn validate_assumptions(profile: &SpiralProfile, threshold: f64) -> Result<AssumptionReport> {
    let z = profile
        .z_s
        .as_ref()
        .ok_or_else(|| Error::State("grooves have not been generated".into()))?;
    if profile.q_s.len() < 3 {
        return Err(Error::Grid(format!(
            "need at least 3 samples to estimate slopes, got {}",
            profile.q_s.len()
        )));
    }
    let dz = gradient(&profile.q_s, z);
    let mut max_r = 0.0f64;
    let mut max_z = 0.0f64;
    let mut max_arc = 0.0f64;
    for joint in 0..2 {
        let r = &profile.radii[joint];
        let dr = gradient(&profile.q_s, r);
        for i in 0..r.len() {
            let sr = dr[i].abs() / r[i];
            let sz = dz[i].abs() / r[i];
            max_r = max_r.max((1.0 + sr * sr).sqrt() - 1.0);
            max_z = max_z.max((1.0 + sz * sz).sqrt() - 1.0);
        }
        let arc = groove_arc_length_for_joint(profile, joint, z)?;
        let exact = *arc.exact.last().unwrap();
        let approx = *arc.approx.last().unwrap();
        max_arc = max_arc.max((exact - approx).abs() / exact);
    }
    Ok(AssumptionReport {
        max_slope_ratio_r: max_r,
        max_slope_ratio_z: max_z,
        arc_length_rel_error: max_arc,
        threshold,
        slope_r_ok: max_r <= threshold,
        slope_z_ok: max_z <= threshold,
        arc_length_ok: max_arc <= threshold,
    })
}

/// Cumulative tendon length along a groove: exact arc length and the
/// `dL/dq ~ R` approximation used by the stiffness math.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcLength {
    pub q_s: Vec<f64>,
    /// Trapezoidal quadrature of `sqrt((dR/dq)^2 + R^2 + (dZ/dq)^2)`.
    pub exact: Vec<f64>,
    /// Trapezoidal quadrature of `R`.
    pub approx: Vec<f64>,
}

fn groove_arc_length_for_joint(
    profile: &SpiralProfile,
    joint: usize,
    z: &[f64],
) -> Result<ArcLength> {
    let q = &profile.q_s;
    if q.len() < 3 {
        return Err(Error::Grid(format!(
            "need at least 3 samples for arc length, got {}",
            q.len()
        )));
    }
    let r = &profile.radii[joint];
    let dr = gradient(q, r);
    let dz = gradient(q, z);
    let integrand: Vec<f64> = (0..q.len())
        .map(|i| (dr[i] * dr[i] + r[i] * r[i] + dz[i] * dz[i]).sqrt())
        .collect();
    let mut exact = vec![0.0; q.len()];
    let mut approx = vec![0.0; q.len()];
    for i in 1..q.len() {
        let dq = q[i] - q[i - 1];
        exact[i] = exact[i - 1] + 0.5 * (integrand[i] + integrand[i - 1]) * dq;
        approx[i] = approx[i - 1] + 0.5 * (r[i] + r[i - 1]) * dq;
    }
    Ok(ArcLength {
        q_s: q.clone(),
        exact,
        approx,
    })
}

/// Cumulative tendon lengths for both joints. Requires generated grooves.
pub fn groove_arc_length(profile: &SpiralProfile) -> Result<[ArcLength; 2]> {
    let z = profile
        .z_s
        .as_ref()
        .ok_or_else(|| Error::State("grooves have not been generated".into()))?;
    Ok([
        groove_arc_length_for_joint(profile, 0, z)?,
        groove_arc_length_for_joint(profile, 1, z)?,
    ])
}

/// Export format for groove polylines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Renders the groove polylines as CSV. Columns are degrees and
/// millimetres; ordering is deterministic (joint 0 side a, joint 0 side b,
/// joint 1 side a, joint 1 side b).
pub fn profile_csv(profile: &SpiralProfile) -> Result<String> {
    let grooves = profile
        .grooves
        .as_ref()
        .ok_or_else(|| Error::State("grooves have not been generated".into()))?;
    if profile.q_s.is_empty() {
        return Err(Error::Grid("profile grid is empty".into()));
    }
    let mut out = String::from("q_s_rad,theta_deg,r_mm,z_mm,joint_index,groove_side\n");
    for (joint, pair) in grooves.iter().enumerate() {
        for (side, pts) in [("a", &pair.side_a), ("b", &pair.side_b)] {
            for p in pts {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    p.q_s,
                    p.theta.to_degrees(),
                    p.r * 1e3,
                    p.z * 1e3,
                    joint,
                    side
                ));
            }
        }
    }
    Ok(out)
}

/// Renders the full profile (grid, radii, grooves) as a JSON document that
/// re-imports bit-identically.
pub fn profile_json(profile: &SpiralProfile) -> Result<String> {
    if profile.q_s.is_empty() {
        return Err(Error::Grid("profile grid is empty".into()));
    }
    serde_json::to_string_pretty(profile).map_err(|e| Error::Numerical(e.to_string()))
}

pub fn profile_from_json(text: &str) -> Result<SpiralProfile> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Writes the profile to `path` in the requested format.
pub fn export_profile(
    profile: &SpiralProfile,
    format: ExportFormat,
    path: &std::path::Path,
) -> Result<()> {
    let text = match format {
        ExportFormat::Csv => profile_csv(profile)?,
        ExportFormat::Json => profile_json(profile)?,
    };
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Closed-form spiral radius for the symmetric schedule: both radii equal
/// `r_j sqrt(alpha / (2 (1 - alpha)))`. Used as an oracle and for quick
/// checks; the solver itself goes through the series composition.
pub fn symmetric_alpha_radius(alpha: f64, r_j: f64) -> f64 {
    r_j * (alpha / (2.0 * (1.0 - alpha))).sqrt()
}

/// Recomposes the passive stiffness produced by solved radii at one grid
/// sample; used for inverse-consistency checks.
pub fn recompose_at(
    profile: &SpiralProfile,
    idx: usize,
    pulleys: &PulleyGeometry,
    springs: &SpringConstants,
) -> Result<StiffnessMatrix> {
    let k_s_j = stiffness::coupled_stiffness_2dof(
        profile.radii[0][idx],
        profile.radii[1][idx],
        pulleys.n,
        springs.k_s,
    )?;
    let k_p_j = stiffness::position_path_stiffness(pulleys, springs)?;
    let k_j_j = stiffness::joint_path_stiffness(pulleys, springs)?;
    let out = stiffness::compose_passive(&k_p_j, &k_s_j, &k_j_j, 1.0)?;
    Ok(out.k_passive)
}

/// Passive stiffness matrix evaluated at an arbitrary spiral angle via the
/// interpolated radii; this is what the simulated mechanism realizes.
pub fn passive_stiffness_at(
    profile: &SpiralProfile,
    q_s: f64,
    pulleys: &PulleyGeometry,
    springs: &SpringConstants,
) -> Result<StiffnessMatrix> {
    passive_stiffness_from_radii(
        profile.radius_at(0, q_s),
        profile.radius_at(1, q_s),
        pulleys,
        springs,
    )
}

pub fn passive_stiffness_from_radii(
    r_s1: f64,
    r_s2: f64,
    pulleys: &PulleyGeometry,
    springs: &SpringConstants,
) -> Result<StiffnessMatrix> {
    let k_s_j = stiffness::coupled_stiffness_2dof(r_s1, r_s2, pulleys.n, springs.k_s)?;
    let k_p_j = stiffness::position_path_stiffness(pulleys, springs)?;
    let k_j_j = stiffness::joint_path_stiffness(pulleys, springs)?;
    let out = stiffness::compose_passive(&k_p_j, &k_s_j, &k_j_j, 1.0)?;
    Ok(out.k_passive)
}

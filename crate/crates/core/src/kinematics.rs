//! Planar 2-link finger kinematics, task projection onto a grasp
//! direction, and the force-dependent task-space stiffness map.

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};
use crate::model::{FingerGeometry, GraspMode, StiffnessMatrix};

/// Relative singular-value cutoff below which a fingertip Jacobian is
/// treated as rank deficient.
pub const SINGULARITY_REL_TOL: f64 = 1e-10;

/// Jacobian of the fingertip map together with the derivative tensors
/// needed by the task-space stiffness formula.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBundle {
    /// Fingertip Jacobian dx/dq (m/rad).
    pub j: Matrix2<f64>,
    /// Slices of the derivative tensor of J^T: `djt_dq[k] = d(J^T)/dq_k`.
    pub djt_dq: [Matrix2<f64>; 2],
    /// Task projection row; maps Cartesian displacement to the scalar
    /// grasp coordinate.
    pub j_p: RowVector2<f64>,
    /// Columns are `d(J_p^T)/dx_k`; zero for a fixed grasp direction.
    pub djpt_dx: Matrix2<f64>,
}

/// Fingertip position of the planar 2-link chain (m), in the base frame
/// of `geometry`.
pub fn forward_kinematics(geometry: &FingerGeometry, q: &Vector2<f64>) -> Vector2<f64> {
    let [l1, l2] = geometry.link_lengths;
    let b = &geometry.base_pose;
    let a1 = b.theta + q[0];
    let a12 = a1 + q[1];
    Vector2::new(
        b.x + l1 * a1.cos() + l2 * a12.cos(),
        b.y + l1 * a1.sin() + l2 * a12.sin(),
    )
}

fn fingertip_jacobian(geometry: &FingerGeometry, q: &Vector2<f64>) -> Matrix2<f64> {
    let [l1, l2] = geometry.link_lengths;
    let a1 = geometry.base_pose.theta + q[0];
    let a12 = a1 + q[1];
    let (s1, c1) = a1.sin_cos();
    let (s12, c12) = a12.sin_cos();
    Matrix2::new(
        -l1 * s1 - l2 * s12,
        -l2 * s12,
        l1 * c1 + l2 * c12,
        l2 * c12,
    )
}

/// Unit normal of the distal link surface, used by the surface-normal
/// grasp mode: perpendicular to the distal link axis.
fn surface_normal(geometry: &FingerGeometry, q: &Vector2<f64>) -> Vector2<f64> {
    let a12 = geometry.base_pose.theta + q[0] + q[1];
    Vector2::new(-a12.sin(), a12.cos())
}

/// Moore-Penrose pseudoinverse of a 2x2 matrix via SVD with the
/// [`SINGULARITY_REL_TOL`] cutoff; errors when the matrix is rank
/// deficient beyond the cutoff.
fn pinv2(m: &Matrix2<f64>, what: &str) -> Result<Matrix2<f64>> {
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= SINGULARITY_REL_TOL * smax {
        return Err(Error::Numerical(format!(
            "singular configuration: {what} is rank deficient (singular values {:?})",
            svd.singular_values.as_slice()
        )));
    }
    svd.pseudo_inverse(SINGULARITY_REL_TOL * smax)
        .map_err(|e| Error::Numerical(e.to_string()))
}

/// Builds the Jacobian bundle at `q` for the given grasp direction.
///
/// With [`GraspMode::Fixed`] the task projection is constant and its
/// Cartesian derivative vanishes. With [`GraspMode::SurfaceNormal`] the
/// projection follows the distal-link normal, so the derivative term of
/// the stiffness formula becomes active; `grasp_direction` is ignored in
/// that mode.
pub fn jacobians(
    geometry: &FingerGeometry,
    q: &Vector2<f64>,
    grasp_direction: &Vector2<f64>,
    mode: GraspMode,
) -> Result<JacobianBundle> {
    let j = fingertip_jacobian(geometry, q);
    let [l1, l2] = geometry.link_lengths;
    let a1 = geometry.base_pose.theta + q[0];
    let a12 = a1 + q[1];
    let (s1, c1) = a1.sin_cos();
    let (s12, c12) = a12.sin_cos();

    // d(J^T)/dq_1: every angle term depends on q_1
    let dj_dq1 = Matrix2::new(-l1 * c1 - l2 * c12, -l2 * c12, -l1 * s1 - l2 * s12, -l2 * s12);
    // d(J^T)/dq_2: only the distal terms depend on q_2
    let dj_dq2 = Matrix2::new(-l2 * c12, -l2 * c12, -l2 * s12, -l2 * s12);
    let djt_dq = [dj_dq1.transpose(), dj_dq2.transpose()];

    let (j_p, djpt_dx) = match mode {
        GraspMode::Fixed => {
            let norm = grasp_direction.norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "grasp direction must be a unit vector, got norm {norm}"
                )));
            }
            (grasp_direction.transpose(), Matrix2::zeros())
        }
        GraspMode::SurfaceNormal => {
            let n = surface_normal(geometry, q);
            // dn/dq_1 = dn/dq_2: derivative of (-sin, cos) is (-cos, -sin)
            let dn = Vector2::new(-n[1], n[0]);
            let dn_dq = Matrix2::from_columns(&[dn, dn]);
            let j_inv = pinv2(&j, "fingertip Jacobian")?;
            (n.transpose(), dn_dq * j_inv)
        }
    };

    Ok(JacobianBundle {
        j,
        djt_dq,
        j_p,
        djpt_dx,
    })
}

/// Task-space stiffness seen along the grasp coordinate (N/m).
///
/// Evaluates `J_p+^T J+^T (K - (dJ^T/dq J_p^T + J^T dJ_p^T/dx J) F_p) J+ J_p+`.
/// The bracketed matrix is the Jacobian of the joint torque `J^T J_p^T F_p`
/// with respect to `q`, i.e. the geometric stiffening induced by a held
/// task force. At `F_p = 0` this reduces to the congruence projection of
/// the joint stiffness.
pub fn task_space_stiffness(
    k: &StiffnessMatrix,
    bundle: &JacobianBundle,
    f_p: f64,
) -> Result<f64> {
    if k.dim() != 2 {
        return Err(Error::Shape(format!(
            "task-space stiffness needs a 2x2 joint stiffness, got {0}x{0}",
            k.dim()
        )));
    }
    let km = Matrix2::from_iterator(k.matrix().iter().copied());
    let j_pinv = pinv2(&bundle.j, "fingertip Jacobian")?;
    // pseudoinverse of the 1x2 projection row
    let jp_norm2 = bundle.j_p.norm_squared();
    if jp_norm2 <= SINGULARITY_REL_TOL {
        return Err(Error::Numerical(
            "singular configuration: task projection is zero".into(),
        ));
    }
    let jp_pinv = bundle.j_p.transpose() / jp_norm2;

    let jpt = bundle.j_p.transpose();
    let mut geometric = Matrix2::zeros();
    for kk in 0..2 {
        let col = bundle.djt_dq[kk] * jpt;
        geometric.set_column(kk, &col);
    }
    geometric += bundle.j.transpose() * bundle.djpt_dx * bundle.j;

    let effective = km - geometric * f_p;
    let projected = jp_pinv.transpose() * j_pinv.transpose() * effective * j_pinv * jp_pinv;
    Ok(projected[(0, 0)])
}

/// Maximum damped-iteration count for the grasp force fixed point.
pub const GRASP_MAX_ITER: usize = 200;
/// Relative convergence tolerance of the fixed point.
pub const GRASP_REL_TOL: f64 = 1e-8;

/// Compensatory grasp force over a grid of grasp-direction deviations.
///
/// Solves `F_p = K_p(F_p) * delta_p` per grid point with damped fixed-point
/// iteration (damping 0.5); the force-dependent stiffness makes the curve
/// stiffen as the held force grows.
pub fn grasp_force_curve(
    k_passive: &StiffnessMatrix,
    geometry: &FingerGeometry,
    grasp_direction: &Vector2<f64>,
    mode: GraspMode,
    q0: &Vector2<f64>,
    deviations: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let bundle = jacobians(geometry, q0, grasp_direction, mode)?;
    let mut curve = Vec::with_capacity(deviations.len());
    for &dp in deviations {
        if dp == 0.0 {
            curve.push((0.0, 0.0));
            continue;
        }
        let mut f = task_space_stiffness(k_passive, &bundle, 0.0)? * dp;
        let mut converged = false;
        let mut residual = f64::INFINITY;
        for _ in 0..GRASP_MAX_ITER {
            let next = task_space_stiffness(k_passive, &bundle, f)? * dp;
            residual = (next - f).abs() / next.abs().max(1e-12);
            f += 0.5 * (next - f);
            if residual < GRASP_REL_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence {
                iterations: GRASP_MAX_ITER,
                residual,
            });
        }
        curve.push((dp, f));
    }
    Ok(curve)
}

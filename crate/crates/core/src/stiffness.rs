//! Joint-level stiffness algebra: tendon torque, series composition of the
//! three elastic paths, the feasibility bound, and the coupled 2-DoF closed
//! forms.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result, SpringPath};
use crate::model::{Frame, PulleyGeometry, SpringConstants, StiffnessMatrix, TendonState};

/// Relative margin on the strict feasibility inequalities of the series
/// composition. Targets closer than this to the bound make the required
/// spiral stiffness blow up.
pub const FEASIBILITY_MARGIN: f64 = 1e-9;

/// Inverse of a symmetric positive-definite matrix via Cholesky.
fn spd_inverse(m: &DMatrix<f64>, path: SpringPath) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    Cholesky::new(sym)
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular {
            path,
            message: "matrix is not positive definite".into(),
        })
}

/// Net joint torque from the tendons: `R_J^T K_t,J (L_J - L_m)`.
pub fn tendon_torque(
    pulleys: &PulleyGeometry,
    springs: &SpringConstants,
    tendons: &TendonState,
) -> Result<DVector<f64>> {
    let dof = pulleys.dof();
    if tendons.l_j.len() != dof {
        return Err(Error::Shape(format!(
            "tendon vectors of length {} do not match {}-DoF pulley geometry",
            tendons.l_j.len(),
            dof
        )));
    }
    let stretch = &tendons.l_j - &tendons.l_m;
    Ok(pulleys.r_j.transpose() * (springs.k_j * stretch))
}

/// Rotational joint stiffness by central finite differences of a torque
/// model: `K_ij = -d tau_i / d q_j`, symmetrized.
///
/// The torque model may vary its radii with `q`, so both terms of the
/// stiffness derivative are captured implicitly.
pub fn joint_stiffness_general<F>(torque: F, q0: &DVector<f64>, h: f64) -> Result<StiffnessMatrix>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("step size must be positive, got {h}")));
    }
    let dof = q0.len();
    let mut k = DMatrix::zeros(dof, dof);
    for j in 0..dof {
        let mut qp = q0.clone();
        let mut qm = q0.clone();
        qp[j] += h;
        qm[j] -= h;
        let tp = torque(&qp);
        let tm = torque(&qm);
        if tp.iter().chain(tm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "torque model returned non-finite values".into(),
            ));
        }
        for i in 0..dof {
            k[(i, j)] = -(tp[i] - tm[i]) / (2.0 * h);
        }
    }
    StiffnessMatrix::from_symmetrized(k, Frame::JointLevel)
}

/// Breakdown of the series stiffness composition.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStiffnessBreakdown {
    pub k_p_j: StiffnessMatrix,
    pub k_s_j: StiffnessMatrix,
    pub k_j_j: StiffnessMatrix,
    pub k_passive: StiffnessMatrix,
    pub k_max: StiffnessMatrix,
}

/// Joint-level stiffness of the joint tendon path: `K_J,j = k_j R_J^T R_J`.
pub fn joint_path_stiffness(
    pulleys: &PulleyGeometry,
    springs: &SpringConstants,
) -> Result<StiffnessMatrix> {
    let m = pulleys.r_j.transpose() * &pulleys.r_j * springs.k_j;
    StiffnessMatrix::from_symmetrized(m, Frame::JointLevel)
}

/// Joint-level stiffness of the position tendon path, modeled symmetrically
/// to the spiral path: `K_P,j = (R_P R_D^-1 R_J)^T k_p (R_P R_D^-1 R_J)`.
pub fn position_path_stiffness(
    pulleys: &PulleyGeometry,
    springs: &SpringConstants,
) -> Result<StiffnessMatrix> {
    let rd_inv = diagonal_inverse(&pulleys.r_d, SpringPath::Position)?;
    let map = &pulleys.r_p * rd_inv * &pulleys.r_j;
    let m = map.transpose() * &map * springs.k_p;
    StiffnessMatrix::from_symmetrized(m, Frame::JointLevel)
}

fn diagonal_inverse(m: &DMatrix<f64>, path: SpringPath) -> Result<DMatrix<f64>> {
    let mut inv = DMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let v = m[(i, i)];
        if v == 0.0 {
            return Err(Error::Singular {
                path,
                message: format!("zero diagonal radius at index {i}"),
            });
        }
        inv[(i, i)] = 1.0 / v;
    }
    Ok(inv)
}

/// Series composition of the three elastic paths:
/// `K_passive^-1 = n^-2 K_P,d^-1 + n^-2 K_S,d^-1 + K_J,j^-1`.
pub fn compose_passive(
    k_p_d: &StiffnessMatrix,
    k_s_d: &StiffnessMatrix,
    k_j_j: &StiffnessMatrix,
    n: f64,
) -> Result<SeriesStiffnessBreakdown> {
    let dim = k_p_d.dim();
    if k_s_d.dim() != dim || k_j_j.dim() != dim {
        return Err(Error::Shape(format!(
            "stiffness dimensions disagree: P {}, S {}, J {}",
            dim,
            k_s_d.dim(),
            k_j_j.dim()
        )));
    }
    let n2_inv = 1.0 / (n * n);
    let p_inv = spd_inverse(k_p_d.matrix(), SpringPath::Position)? * n2_inv;
    let s_inv = spd_inverse(k_s_d.matrix(), SpringPath::Spiral)? * n2_inv;
    let j_inv = spd_inverse(k_j_j.matrix(), SpringPath::Joint)?;

    let passive_compliance = &p_inv + &s_inv + &j_inv;
    let k_passive = spd_inverse(&passive_compliance, SpringPath::Joint)?;
    let max_compliance = &p_inv + &j_inv;
    let k_max = spd_inverse(&max_compliance, SpringPath::Joint)?;

    Ok(SeriesStiffnessBreakdown {
        k_p_j: StiffnessMatrix::from_symmetrized(k_p_d.matrix() * (n * n), Frame::JointLevel)?,
        k_s_j: StiffnessMatrix::from_symmetrized(k_s_d.matrix() * (n * n), Frame::JointLevel)?,
        k_j_j: k_j_j.clone(),
        k_passive: StiffnessMatrix::from_symmetrized(k_passive, Frame::JointLevel)?,
        k_max: StiffnessMatrix::from_symmetrized(k_max, Frame::JointLevel)?,
    })
}

/// Upper limit of the achievable passive stiffness, reached as the spiral
/// path becomes rigid: `K_max = (K_P,j^-1 + K_J,j^-1)^-1`.
pub fn k_max(pulleys: &PulleyGeometry, springs: &SpringConstants) -> Result<StiffnessMatrix> {
    let k_p_j = position_path_stiffness(pulleys, springs)?;
    let k_j_j = joint_path_stiffness(pulleys, springs)?;
    let p_inv = spd_inverse(k_p_j.matrix(), SpringPath::Position)?;
    let j_inv = spd_inverse(k_j_j.matrix(), SpringPath::Joint)?;
    let m = spd_inverse(&(p_inv + j_inv), SpringPath::Joint)?;
    StiffnessMatrix::from_symmetrized(m, Frame::JointLevel)
}

/// Checks `0 < K_desired < K_max` strictly, with a relative eigenvalue
/// margin of `FEASIBILITY_MARGIN * trace(K_max)`.
pub fn check_feasible(k_desired: &StiffnessMatrix, k_max: &StiffnessMatrix) -> Result<()> {
    let margin = FEASIBILITY_MARGIN * k_max.trace();
    let min_eig = k_desired.min_eigenvalue();
    if min_eig <= margin {
        return Err(Error::InfeasibleTarget {
            eigenvalue: min_eig,
            bound: margin,
            q_s: None,
        });
    }
    let gap = k_max.matrix() - k_desired.matrix();
    let gap_min = gap.symmetric_eigenvalues().min();
    if gap_min < margin {
        return Err(Error::InfeasibleTarget {
            eigenvalue: gap_min,
            bound: margin,
            q_s: None,
        });
    }
    Ok(())
}

/// Joint-level spiral-path stiffness required to realize a desired passive
/// stiffness: `K_S,j = (K_desired^-1 - K_P,j^-1 - K_J,j^-1)^-1`.
pub fn required_spiral_stiffness(
    k_desired: &StiffnessMatrix,
    pulleys: &PulleyGeometry,
    springs: &SpringConstants,
) -> Result<StiffnessMatrix> {
    let bound = k_max(pulleys, springs)?;
    check_feasible(k_desired, &bound)?;
    let k_p_j = position_path_stiffness(pulleys, springs)?;
    let k_j_j = joint_path_stiffness(pulleys, springs)?;
    let compliance = spd_inverse(k_desired.matrix(), SpringPath::Spiral)?
        - spd_inverse(k_p_j.matrix(), SpringPath::Position)?
        - spd_inverse(k_j_j.matrix(), SpringPath::Joint)?;
    let m = spd_inverse(&compliance, SpringPath::Spiral)?;
    StiffnessMatrix::from_symmetrized(m, Frame::JointLevel)
}

/// Instantaneous joint-level spiral-path stiffness from spiral radii:
/// `K_S,j = (R_S R_D^-1 R_J)^T k_s (R_S R_D^-1 R_J)`.
pub fn spiral_stiffness_from_radii(
    r_s: &DMatrix<f64>,
    pulleys: &PulleyGeometry,
    springs: &SpringConstants,
) -> Result<StiffnessMatrix> {
    if r_s.shape() != pulleys.r_d.shape() {
        return Err(Error::Shape(format!(
            "R_S shape {:?} does not match pulley geometry {:?}",
            r_s.shape(),
            pulleys.r_d.shape()
        )));
    }
    for i in 0..r_s.nrows() {
        for j in 0..r_s.ncols() {
            let v = r_s[(i, j)];
            if i == j {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Domain(format!(
                        "spiral radius {i} must be non-negative, got {v}"
                    )));
                }
            } else if v != 0.0 {
                return Err(Error::Shape(format!(
                    "R_S must be diagonal, entry ({i},{j}) = {v}"
                )));
            }
        }
    }
    let rd_inv = diagonal_inverse(&pulleys.r_d, SpringPath::Spiral)?;
    let map = r_s * rd_inv * &pulleys.r_j;
    let m = map.transpose() * &map * springs.k_s;
    StiffnessMatrix::from_symmetrized(m, Frame::JointLevel)
}

/// Closed-form coupled 2-DoF spiral-path stiffness:
/// `[[n^2 k_s (r_s1^2 + r_s2^2), n^2 k_s r_s2^2], [n^2 k_s r_s2^2, n^2 k_s r_s2^2]]`.
pub fn coupled_stiffness_2dof(r_s1: f64, r_s2: f64, n: f64, k_s: f64) -> Result<StiffnessMatrix> {
    if r_s1 < 0.0 || r_s2 < 0.0 {
        return Err(Error::Domain(format!(
            "spiral radii must be non-negative, got ({r_s1}, {r_s2})"
        )));
    }
    let c = n * n * k_s;
    let a = c * (r_s1 * r_s1 + r_s2 * r_s2);
    let b = c * r_s2 * r_s2;
    let m = DMatrix::from_row_slice(2, 2, &[a, b, b, b]);
    StiffnessMatrix::new(m, Frame::JointLevel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JointState;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_pulleys() -> PulleyGeometry {
        PulleyGeometry::coupled_2dof(0.012, 0.012, 0.012, 1.0).unwrap()
    }

    fn reference_springs() -> SpringConstants {
        SpringConstants::new(875.63, 875.63, 875.63).unwrap()
    }

    fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn equilibrium_gives_zero_torque() {
        let l = DVector::from_row_slice(&[0.003, -0.001]);
        let tendons = TendonState::new(l.clone(), l).unwrap();
        let tau = tendon_torque(&reference_pulleys(), &reference_springs(), &tendons).unwrap();
        assert_eq!(tau, DVector::zeros(2));
    }

    #[test]
    fn scalar_tendon_torque_hand_product() {
        let pulleys =
            PulleyGeometry::new(
                DMatrix::from_element(1, 1, 0.012),
                DMatrix::from_element(1, 1, 0.012),
                DMatrix::from_element(1, 1, 0.012),
                1.0,
            )
            .unwrap();
        let tendons = TendonState::new(
            DVector::from_element(1, 0.001),
            DVector::from_element(1, 0.0),
        )
        .unwrap();
        let tau = tendon_torque(&pulleys, &reference_springs(), &tendons).unwrap();
        assert_relative_eq!(tau[0], 0.012 * 875.63 * 0.001, max_relative = 1e-12);
    }

    #[test]
    fn coupled_torque_unit_stretch_tendon_two() {
        // oracle: explicit 2x2 matrix-vector product
        let stretch = 1e-3;
        let tendons = TendonState::new(
            DVector::from_row_slice(&[0.0, stretch]),
            DVector::zeros(2),
        )
        .unwrap();
        let tau = tendon_torque(&reference_pulleys(), &reference_springs(), &tendons).unwrap();
        let expected = 0.012 * 875.63 * stretch;
        assert_relative_eq!(tau[0], expected, max_relative = 1e-12);
        assert_relative_eq!(tau[1], expected, max_relative = 1e-12);
    }

    #[test]
    fn torque_dimension_mismatch_is_shape_error() {
        let tendons = TendonState::new(DVector::zeros(3), DVector::zeros(3)).unwrap();
        assert!(matches!(
            tendon_torque(&reference_pulleys(), &reference_springs(), &tendons),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn fd_stiffness_matches_constant_radius_analytic() {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let analytic = joint_path_stiffness(&pulleys, &springs).unwrap();
        let q_eq = DVector::from_row_slice(&[0.1, -0.2]);
        let torque = |q: &DVector<f64>| {
            let l_j = &pulleys.r_j * q;
            let l_m = &pulleys.r_j * &q_eq;
            -(pulleys.r_j.transpose() * (springs.k_j * (l_j - l_m)))
        };
        for h in [1e-6, 1e-5, 1e-4] {
            let k = joint_stiffness_general(&torque, &q_eq, h).unwrap();
            assert!(rel_frob(k.matrix(), analytic.matrix()) < 1e-6, "h={h}");
        }
    }

    #[test]
    fn fd_stiffness_sees_first_term_away_from_equilibrium() {
        // 1-DoF spiral-like model with radius varying linearly in q. The
        // oracle evaluates both stiffness terms by separate finite
        // differences of the radius map and the tendon length.
        let k_t = 875.63;
        let r0 = 0.012;
        let c = 0.004;
        let radius = |q: f64| r0 + c * q;
        let length = |q: f64| r0 * q + 0.5 * c * q * q; // primitive of radius
        let q_eq = 0.0;
        let torque = |q: &DVector<f64>| {
            DVector::from_element(1, -radius(q[0]) * k_t * (length(q[0]) - length(q_eq)))
        };

        let q0 = DVector::from_element(1, 0.3);
        let k = joint_stiffness_general(&torque, &q0, 1e-6).unwrap();

        let second_term_only = radius(q0[0]) * k_t * radius(q0[0]);
        let h = 1e-6;
        let dr = (radius(q0[0] + h) - radius(q0[0] - h)) / (2.0 * h);
        let first_term = dr * k_t * (length(q0[0]) - length(q_eq));
        let both = first_term + second_term_only;
        assert_relative_eq!(k.matrix()[(0, 0)], both, max_relative = 1e-5);
        assert!((k.matrix()[(0, 0)] - second_term_only).abs() > 1e-4 * second_term_only);
    }

    #[test]
    fn zero_springs_give_zero_stiffness() {
        let torque = |_: &DVector<f64>| DVector::zeros(2);
        let k = joint_stiffness_general(torque, &DVector::zeros(2), 1e-5).unwrap();
        assert_eq!(k.matrix(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn three_equal_scalar_springs_compose_to_a_third() {
        let kappa = 0.5;
        let m = StiffnessMatrix::new(DMatrix::from_element(1, 1, kappa), Frame::DifferentialLevel)
            .unwrap();
        let j =
            StiffnessMatrix::new(DMatrix::from_element(1, 1, kappa), Frame::JointLevel).unwrap();
        let out = compose_passive(&m, &m, &j, 1.0).unwrap();
        assert_relative_eq!(out.k_passive.matrix()[(0, 0)], kappa / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn near_rigid_spiral_path_approaches_k_max() {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let k_p_j = position_path_stiffness(&pulleys, &springs).unwrap();
        let k_j_j = joint_path_stiffness(&pulleys, &springs).unwrap();
        let rigid = StiffnessMatrix::new(
            DMatrix::from_diagonal(&DVector::from_element(2, 1e12)),
            Frame::DifferentialLevel,
        )
        .unwrap();
        let out = compose_passive(&k_p_j, &rigid, &k_j_j, 1.0).unwrap();
        // closed-form oracle: (K_P,j^-1 + K_J,j^-1)^-1
        let expected = k_max(&pulleys, &springs).unwrap();
        assert!(rel_frob(out.k_passive.matrix(), expected.matrix()) < 1e-4);
    }

    #[test]
    fn reference_k_max_composition() {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        // oracle: independent composition from k r_j^2 with the Eq. 6 coupling
        let kr2 = 875.63 * 0.012 * 0.012;
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]) * (kr2 / 2.0);
        let k = k_max(&pulleys, &springs).unwrap();
        assert!(rel_frob(k.matrix(), &expected) < 1e-12);
        assert_relative_eq!(k.matrix()[(1, 1)], 0.063045, max_relative = 1e-4);
    }

    #[test]
    fn scalar_k_max_two_equal_series_springs() {
        let pulleys = PulleyGeometry::new(
            DMatrix::from_element(1, 1, 0.01),
            DMatrix::from_element(1, 1, 0.01),
            DMatrix::from_element(1, 1, 0.01),
            1.0,
        )
        .unwrap();
        let springs = SpringConstants::new(100.0, 100.0, 100.0).unwrap();
        let k = k_max(&pulleys, &springs).unwrap();
        assert_relative_eq!(k.matrix()[(0, 0)], 100.0 * 1e-4 / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn k_max_linear_in_spring_constants() {
        let pulleys = reference_pulleys();
        let k1 = k_max(&pulleys, &reference_springs()).unwrap();
        let doubled = SpringConstants::new(2.0 * 875.63, 2.0 * 875.63, 2.0 * 875.63).unwrap();
        let k2 = k_max(&pulleys, &doubled).unwrap();
        assert!(rel_frob(&(k1.matrix() * 2.0), k2.matrix()) < 1e-12);
    }

    #[test]
    fn required_spiral_stiffness_alpha_closed_form() {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let km = k_max(&pulleys, &springs).unwrap();
        for alpha in [0.2, 0.5, 0.8] {
            let target =
                StiffnessMatrix::new(km.matrix() * alpha, Frame::JointLevel).unwrap();
            let k_s = required_spiral_stiffness(&target, &pulleys, &springs).unwrap();
            let expected = km.matrix() * (alpha / (1.0 - alpha));
            assert!(rel_frob(k_s.matrix(), &expected) < 1e-9, "alpha={alpha}");
        }
    }

    #[test]
    fn required_spiral_stiffness_rejects_bound_and_zero() {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let km = k_max(&pulleys, &springs).unwrap();
        assert!(matches!(
            required_spiral_stiffness(&km, &pulleys, &springs),
            Err(Error::InfeasibleTarget { .. })
        ));
        let zero = StiffnessMatrix::new(DMatrix::zeros(2, 2), Frame::JointLevel).unwrap();
        assert!(matches!(
            required_spiral_stiffness(&zero, &pulleys, &springs),
            Err(Error::InfeasibleTarget { .. })
        ));
    }

    #[test]
    fn zero_radii_give_zero_spiral_stiffness() {
        let k = spiral_stiffness_from_radii(&DMatrix::zeros(2, 2), &reference_pulleys(), &reference_springs())
            .unwrap();
        assert_eq!(k.matrix(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn equal_radii_match_coupled_closed_form() {
        let r = 0.0084853;
        let r_s = DMatrix::from_diagonal(&DVector::from_element(2, r));
        let via_map =
            spiral_stiffness_from_radii(&r_s, &reference_pulleys(), &reference_springs()).unwrap();
        let expected =
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]) * (875.63 * r * r);
        assert!(rel_frob(via_map.matrix(), &expected) < 1e-12);
    }

    #[test]
    fn eq7_matrix_for_general_radii() {
        let (r1, r2) = (0.004, 0.011);
        let k = coupled_stiffness_2dof(r1, r2, 1.0, 875.63).unwrap();
        assert_relative_eq!(
            k.matrix()[(0, 0)],
            875.63 * (r1 * r1 + r2 * r2),
            max_relative = 1e-14
        );
        assert_relative_eq!(k.matrix()[(0, 1)], 875.63 * r2 * r2, max_relative = 1e-14);
        assert_relative_eq!(k.matrix()[(1, 1)], 875.63 * r2 * r2, max_relative = 1e-14);
    }

    #[test]
    fn coupled_reference_value_at_half_alpha() {
        let k = coupled_stiffness_2dof(0.0084853, 0.0084853, 1.0, 875.63).unwrap();
        assert_relative_eq!(k.matrix()[(1, 1)], 0.063045, max_relative = 1e-4);
    }

    #[test]
    fn coupled_degenerate_and_scaling() {
        let k = coupled_stiffness_2dof(0.01, 0.0, 1.0, 875.63).unwrap();
        assert_eq!(k.matrix()[(0, 1)], 0.0);
        assert_eq!(k.matrix()[(1, 1)], 0.0);
        assert_relative_eq!(k.matrix()[(0, 0)], 875.63 * 1e-4, max_relative = 1e-14);

        let base = coupled_stiffness_2dof(0.004, 0.011, 1.0, 875.63).unwrap();
        let scaled = coupled_stiffness_2dof(0.008, 0.022, 1.0, 875.63).unwrap();
        assert!(rel_frob(&(base.matrix() * 4.0), scaled.matrix()) < 1e-12);

        assert!(coupled_stiffness_2dof(-0.001, 0.01, 1.0, 875.63).is_err());
    }

    #[test]
    fn eq5_equals_eq7_on_eq6_geometry_random_radii() {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let r1: f64 = rng.random_range(1e-4..0.03);
            let r2: f64 = rng.random_range(1e-4..0.03);
            let r_s = DMatrix::from_diagonal(&DVector::from_row_slice(&[r1, r2]));
            let a = spiral_stiffness_from_radii(&r_s, &pulleys, &springs).unwrap();
            let b = coupled_stiffness_2dof(r1, r2, pulleys.n, springs.k_s).unwrap();
            assert!(rel_frob(a.matrix(), b.matrix()) < 1e-12);
        }
    }

    #[test]
    fn series_round_trip_random_feasible_targets() {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let km = k_max(&pulleys, &springs).unwrap();
        let sqrt_km = matrix_sqrt(km.matrix());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k_p_j = position_path_stiffness(&pulleys, &springs).unwrap();
        let k_j_j = joint_path_stiffness(&pulleys, &springs).unwrap();
        for _ in 0..100 {
            let target = random_feasible_target(&mut rng, &sqrt_km);
            let k_s = required_spiral_stiffness(&target, &pulleys, &springs).unwrap();
            let out = compose_passive(&k_p_j, &k_s, &k_j_j, 1.0).unwrap();
            assert!(rel_frob(out.k_passive.matrix(), target.matrix()) < 1e-9);
        }
    }

    #[test]
    fn series_monotonicity_k_passive_below_k_max() {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let k_p_j = position_path_stiffness(&pulleys, &springs).unwrap();
        let k_j_j = joint_path_stiffness(&pulleys, &springs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = random_spd(&mut rng, 2, 1e-3, 10.0);
            let k_s = StiffnessMatrix::new(s, Frame::DifferentialLevel).unwrap();
            let out = compose_passive(&k_p_j, &k_s, &k_j_j, 1.0).unwrap();
            let gap = out.k_max.matrix() - out.k_passive.matrix();
            let min = gap.symmetric_eigenvalues().min();
            assert!(min >= -1e-9 * out.k_max.trace());
        }
    }

    #[test]
    fn rigid_limit_is_monotone() {
        let pulleys = reference_pulleys();
        let springs = reference_springs();
        let k_p_j = position_path_stiffness(&pulleys, &springs).unwrap();
        let k_j_j = joint_path_stiffness(&pulleys, &springs).unwrap();
        let base = spiral_stiffness_from_radii(
            &DMatrix::from_diagonal(&DVector::from_element(2, 0.008)),
            &pulleys,
            &springs,
        )
        .unwrap();
        let km = k_max(&pulleys, &springs).unwrap();
        let mut last = f64::INFINITY;
        for scale in [1.0, 10.0, 100.0, 1e3, 1e4, 1e5] {
            let k_s =
                StiffnessMatrix::new(base.matrix() * scale, Frame::JointLevel).unwrap();
            let out = compose_passive(&k_p_j, &k_s, &k_j_j, 1.0).unwrap();
            let err = rel_frob(out.k_passive.matrix(), km.matrix());
            assert!(err < last, "scale={scale}: {err} !< {last}");
            last = err;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn joint_state_helper() {
        let s = JointState::at_rest(DVector::from_row_slice(&[0.1, 0.2]));
        assert_eq!(s.qdot, DVector::zeros(2));
    }

    // test helpers -----------------------------------------------------------

    pub(crate) fn matrix_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
        let eig = nalgebra::SymmetricEigen::new(m.clone());
        let sqrt_vals = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        &eig.eigenvectors * sqrt_vals * eig.eigenvectors.transpose()
    }

    pub(crate) fn random_spd(
        rng: &mut ChaCha8Rng,
        dim: usize,
        lo: f64,
        hi: f64,
    ) -> DMatrix<f64> {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let q = a.qr().q();
        let vals = DVector::from_fn(dim, |_, _| rng.random_range(lo..hi));
        let m = &q * DMatrix::from_diagonal(&vals) * q.transpose();
        (&m + m.transpose()) * 0.5
    }

    pub(crate) fn random_feasible_target(
        rng: &mut ChaCha8Rng,
        sqrt_km: &DMatrix<f64>,
    ) -> StiffnessMatrix {
        // K_desired = K_max^{1/2} U diag(mu) U^T K_max^{1/2}, mu in (0.05, 0.95)
        let dim = sqrt_km.nrows();
        let mid = random_spd(rng, dim, 0.05, 0.95);
        let m = sqrt_km * mid * sqrt_km;
        StiffnessMatrix::from_symmetrized(m, Frame::JointLevel).unwrap()
    }
}

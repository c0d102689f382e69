//! Numerical experiments: stiffness-ellipse regression on a deviation
//! circle and step-response dynamics under constant passive stiffness.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::model::{DynamicsParams, Frame, PulleyGeometry, SpringConstants, StiffnessMatrix};
use crate::synthesis::{self, SpiralProfile};

/// Default deviation-circle radius for ellipse regression: 20 degrees.
pub const ELLIPSE_DEFAULT_RADIUS: f64 = 20.0 * std::f64::consts::PI / 180.0;
/// Default number of samples on the deviation circle.
pub const ELLIPSE_DEFAULT_SAMPLES: usize = 72;

/// Restoring joint torque as a function of a joint deviation from the
/// working point.
pub trait TorqueModel {
    fn torque(&self, dq: &Vector2<f64>) -> Vector2<f64>;
}

/// Exactly linear spring: `tau = -K dq`.
#[derive(Debug, Clone)]
pub struct LinearTorqueModel {
    pub k: Matrix2<f64>,
}

impl TorqueModel for LinearTorqueModel {
    fn torque(&self, dq: &Vector2<f64>) -> Vector2<f64> {
        -self.k * dq
    }
}

/// Full nonlinear torque of the spiral mechanism about a working point.
///
/// A joint deviation rotates each spiral joint, moving its tendon contact
/// along the groove, so the instantaneous radii (and hence the stiffness)
/// change over the deviation. The restoring torque is the path integral of
/// the instantaneous stiffness along the ray from the working point:
/// `tau(dq) = -(integral_0^1 K(t dq) dt) dq`, evaluated with Simpson
/// quadrature on 5 nodes. Joint `i` sees the spiral angle shifted by
/// `(R_D^-1 R_J dq)_i`.
#[derive(Debug, Clone)]
pub struct DsjTorqueModel<'a> {
    pub profile: &'a SpiralProfile,
    pub pulleys: &'a PulleyGeometry,
    pub springs: &'a SpringConstants,
    /// Spiral angle of the working point.
    pub q_s0: f64,
}

impl DsjTorqueModel<'_> {
    fn stiffness_at_deviation(&self, dq: &Vector2<f64>) -> Matrix2<f64> {
        let dqv = DVector::from_row_slice(&[dq[0], dq[1]]);
        let rotation = &self.pulleys.r_j * dqv;
        let shift1 = rotation[0] / self.pulleys.r_d[(0, 0)];
        let shift2 = rotation[1] / self.pulleys.r_d[(1, 1)];
        let r1 = self.profile.radius_at(0, self.q_s0 + shift1);
        let r2 = self.profile.radius_at(1, self.q_s0 + shift2);
        let k = synthesis::passive_stiffness_from_radii(r1, r2, self.pulleys, self.springs)
            .expect("interpolated radii stay in the feasible range");
        Matrix2::from_iterator(k.matrix().iter().copied())
    }
}

impl TorqueModel for DsjTorqueModel<'_> {
    fn torque(&self, dq: &Vector2<f64>) -> Vector2<f64> {
        // Simpson weights on t = 0, 1/4, 1/2, 3/4, 1
        const NODES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
        const WEIGHTS: [f64; 5] = [
            1.0 / 12.0,
            4.0 / 12.0,
            2.0 / 12.0,
            4.0 / 12.0,
            1.0 / 12.0,
        ];
        let mut k_avg = Matrix2::zeros();
        for (t, w) in NODES.iter().zip(WEIGHTS) {
            k_avg += self.stiffness_at_deviation(&(dq * *t)) * w;
        }
        -k_avg * dq
    }
}

/// Regressed stiffness ellipse from compensatory torques on a deviation
/// circle.
#[derive(Debug, Clone)]
pub struct EllipseResult {
    pub k_regressed: StiffnessMatrix,
    /// Eigenvalues (N*m/rad), major then minor.
    pub semi_axes: (f64, f64),
    /// Principal direction of the major axis, in (-pi/2, pi/2].
    pub orientation: f64,
    pub deviation_radius: f64,
}

/// Samples joint deviations on a circle, collects model torques, and fits
/// `tau = -K dq` by least squares; `K` is symmetrized before
/// eigendecomposition.
pub fn stiffness_ellipse(
    model: &dyn TorqueModel,
    radius: f64,
    n_samples: usize,
) -> Result<EllipseResult> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Domain(format!(
            "deviation radius must be positive, got {radius}"
        )));
    }
    if n_samples < 3 {
        return Err(Error::Grid(format!(
            "need at least 3 circle samples, got {n_samples}"
        )));
    }
    let mut x = DMatrix::zeros(n_samples, 2);
    let mut y = DMatrix::zeros(n_samples, 2);
    for i in 0..n_samples {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / n_samples as f64;
        let dq = Vector2::new(radius * theta.cos(), radius * theta.sin());
        let tau = model.torque(&dq);
        x.set_row(i, &dq.transpose());
        y.set_row(i, &(-tau).transpose());
    }
    // least squares X K^T = Y
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax {
        return Err(Error::Numerical(
            "ellipse regression is rank deficient: deviation samples are degenerate".into(),
        ));
    }
    let kt = svd
        .solve(&y, 1e-12 * smax)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let k = kt.transpose();
    let k_sym = (&k + k.transpose()) * 0.5;
    let k_regressed = StiffnessMatrix::new(k_sym.clone(), Frame::JointLevel)?;

    let eig = nalgebra::SymmetricEigen::new(k_sym);
    let (i_max, i_min) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let v = eig.eigenvectors.column(i_max);
    let mut orientation = v[1].atan2(v[0]);
    // fold the sign ambiguity of the eigenvector into (-pi/2, pi/2]
    if orientation > std::f64::consts::FRAC_PI_2 {
        orientation -= std::f64::consts::PI;
    } else if orientation <= -std::f64::consts::FRAC_PI_2 {
        orientation += std::f64::consts::PI;
    }
    Ok(EllipseResult {
        k_regressed,
        semi_axes: (eig.eigenvalues[i_max], eig.eigenvalues[i_min]),
        orientation,
        deviation_radius: radius,
    })
}

/// Uniformly sampled joint trajectory with the spring torque alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub qdot: Vec<DVector<f64>>,
    /// Restoring spring torque `-K (q - q_cmd)` (N*m).
    pub tau: Vec<DVector<f64>>,
    pub dt: f64,
}

/// Energy tolerance of the integrator, as a fraction of the initial
/// energy, allowed as growth per step.
const ENERGY_GROWTH_TOL: f64 = 1e-9;

/// Integrates `M qddot + B qdot + K (q - q_cmd) = 0` from rest with
/// fixed-step classical Runge-Kutta. The damped system must not gain
/// energy; growth beyond tolerance aborts with a step-size error.
pub fn simulate_step_response(
    k_passive: &StiffnessMatrix,
    dynamics: &DynamicsParams,
    q_cmd: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<TimeSeries> {
    let n = q_cmd.len();
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Grid(format!("time step must be positive, got {dt}")));
    }
    if horizon < 100.0 * dt {
        return Err(Error::Grid(format!(
            "horizon {horizon} shorter than 100 time steps of {dt}"
        )));
    }
    if k_passive.dim() != n || dynamics.inertia.nrows() != n {
        return Err(Error::Shape(format!(
            "dimension mismatch: stiffness {}, inertia {}, command {}",
            k_passive.dim(),
            dynamics.inertia.nrows(),
            n
        )));
    }
    if k_passive.min_eigenvalue() <= 0.0 {
        return Err(Error::Domain(
            "step response needs a positive definite stiffness".into(),
        ));
    }
    let k = k_passive.matrix().clone();
    let m_inv = dynamics
        .inertia
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("inertia matrix is not positive definite".into()))?
        .inverse();
    let b = &dynamics.damping;

    let accel = |q: &DVector<f64>, qd: &DVector<f64>| -> DVector<f64> {
        &m_inv * (-(b * qd) - &k * (q - q_cmd))
    };
    let energy = |q: &DVector<f64>, qd: &DVector<f64>| -> f64 {
        let dq = q - q_cmd;
        0.5 * (qd.dot(&(&dynamics.inertia * qd)) + dq.dot(&(&k * &dq)))
    };

    let steps = (horizon / dt).round() as usize;
    let mut q = DVector::zeros(n);
    let mut qd = DVector::zeros(n);
    let e0 = energy(&q, &qd);
    let mut e_prev = e0;

    let mut out = TimeSeries {
        t: Vec::with_capacity(steps + 1),
        q: Vec::with_capacity(steps + 1),
        qdot: Vec::with_capacity(steps + 1),
        tau: Vec::with_capacity(steps + 1),
        dt,
    };
    let record = |out: &mut TimeSeries, i: usize, q: &DVector<f64>, qd: &DVector<f64>| {
        out.t.push(i as f64 * dt);
        out.q.push(q.clone());
        out.qdot.push(qd.clone());
        out.tau.push(-(&k * (q - q_cmd)));
    };
    record(&mut out, 0, &q, &qd);

    for i in 1..=steps {
        let k1q = qd.clone();
        let k1v = accel(&q, &qd);
        let k2q = &qd + &k1v * (dt / 2.0);
        let k2v = accel(&(&q + &k1q * (dt / 2.0)), &k2q);
        let k3q = &qd + &k2v * (dt / 2.0);
        let k3v = accel(&(&q + &k2q * (dt / 2.0)), &k3q);
        let k4q = &qd + &k3v * dt;
        let k4v = accel(&(&q + &k3q * dt), &k4q);
        q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
        qd += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);

        let e = energy(&q, &qd);
        if e > e_prev + ENERGY_GROWTH_TOL * e0 {
            return Err(Error::StepSize {
                growth: (e - e_prev) / e0.max(f64::MIN_POSITIVE),
            });
        }
        e_prev = e;
        record(&mut out, i, &q, &qd);
    }
    Ok(out)
}

/// Scalar response metrics of one joint trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMetrics {
    /// Peak excursion beyond the target as a fraction of the step size.
    pub overshoot: f64,
    /// Time to stay inside the 2% band (s); `None` when unsettled.
    pub settling_time: Option<f64>,
    /// Oscillation frequency from interpolated zero crossings (Hz);
    /// `None` when fewer than two crossings exist.
    pub dominant_frequency: Option<f64>,
}

/// Response metrics of a step trajectory; worst case across joints plus
/// the per-joint detail.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMetrics {
    pub overshoot: f64,
    pub settling_time: f64,
    pub dominant_frequency: f64,
    pub settled: bool,
    pub per_joint: Vec<JointMetrics>,
}

/// Settling band as a fraction of the step size.
pub const SETTLING_BAND: f64 = 0.02;

fn joint_metrics(t: &[f64], q: &[f64], q0: f64, target: f64) -> JointMetrics {
    let step = target - q0;
    let scale = step.abs().max(f64::MIN_POSITIVE);

    let mut overshoot = 0.0f64;
    for &qi in q {
        let beyond = (qi - target) * step.signum();
        overshoot = overshoot.max(beyond / scale);
    }

    let band = SETTLING_BAND * scale;
    let mut settling = None;
    for i in (0..q.len()).rev() {
        if (q[i] - target).abs() > band {
            if i + 1 < q.len() {
                settling = Some(t[i + 1]);
            }
            break;
        }
        if i == 0 {
            settling = Some(t[0]);
        }
    }

    // zero crossings of q - target with linear interpolation; a crossing
    // counts only if the excursion since the previous one rose above a
    // noise floor, so round-off ripple after settling is ignored
    let noise_floor = 1e-6 * scale;
    let mut crossings = Vec::new();
    let mut excursion = 0.0f64;
    for i in 1..q.len() {
        let a = q[i - 1] - target;
        let b = q[i] - target;
        excursion = excursion.max(a.abs());
        let crossing = if a == 0.0 {
            Some(t[i - 1])
        } else if a * b < 0.0 {
            let frac = a / (a - b);
            Some(t[i - 1] + frac * (t[i] - t[i - 1]))
        } else {
            None
        };
        if let Some(tc) = crossing {
            if excursion >= noise_floor {
                crossings.push(tc);
            }
            excursion = 0.0;
        }
    }
    let dominant_frequency = if crossings.len() >= 2 {
        let span = crossings.last().unwrap() - crossings.first().unwrap();
        Some((crossings.len() - 1) as f64 / (2.0 * span))
    } else {
        None
    };

    JointMetrics {
        overshoot,
        settling_time: settling,
        dominant_frequency,
    }
}

/// Overshoot, 2%-band settling time, and dominant oscillation frequency
/// of a simulated step response. The aggregate values take the worst
/// settling time and overshoot and the largest frequency across joints.
pub fn response_metrics(series: &TimeSeries, q_cmd: &DVector<f64>) -> Result<ResponseMetrics> {
    if series.t.is_empty() {
        return Err(Error::State("time series is empty".into()));
    }
    let n = q_cmd.len();
    let mut per_joint = Vec::with_capacity(n);
    for j in 0..n {
        let q: Vec<f64> = series.q.iter().map(|v| v[j]).collect();
        per_joint.push(joint_metrics(&series.t, &q, q[0], q_cmd[j]));
    }
    let settled = per_joint.iter().all(|m| m.settling_time.is_some());
    let settling_time = per_joint
        .iter()
        .filter_map(|m| m.settling_time)
        .fold(0.0f64, f64::max);
    let overshoot = per_joint.iter().map(|m| m.overshoot).fold(0.0f64, f64::max);
    let dominant_frequency = per_joint
        .iter()
        .filter_map(|m| m.dominant_frequency)
        .fold(0.0f64, f64::max);
    Ok(ResponseMetrics {
        overshoot,
        settling_time: if settled { settling_time } else { *series.t.last().unwrap() },
        dominant_frequency,
        settled,
        per_joint,
    })
}

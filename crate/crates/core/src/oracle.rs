//! Closed-form dynamics of a planar two-link arm.
//!
//! Joint angles are measured from the downward vertical, so `q = 0` is the
//! hanging rest configuration and the potential energy is zero there. Link
//! `i` has mass `m_i`, length `l_i`, its centre of mass at distance `lc_i`
//! from the proximal joint, and rotational inertia `I_i` about that centre.
//!
//! The inertia matrix is
//!
//! ```text
//! H11 = m1 lc1² + I1 + m2 (l1² + lc2² + 2 l1 lc2 cos q2) + I2
//! H12 = m2 (lc2² + l1 lc2 cos q2) + I2
//! H22 = m2 lc2² + I2
//! ```
//!
//! and with `h = m2 l1 lc2 sin q2` the velocity terms are
//! `c = [-h (2 q̇1 q̇2 + q̇2²), h q̇1²]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::JointState;
use crate::tensor::Matrix;

pub const DOF: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub i1: f64,
    pub i2: f64,
    pub gravity: f64,
}

impl Default for RobotParams {
    /// Two 1 kg, 0.5 m thin rods with centred masses.
    fn default() -> Self {
        Self::thin_rods(1.0, 1.0, 0.5, 0.5, 9.81)
    }
}

impl RobotParams {
    /// Uniform rods: `lc = l/2`, `I = m l²/12`.
    pub fn thin_rods(m1: f64, m2: f64, l1: f64, l2: f64, gravity: f64) -> Self {
        Self {
            m1,
            m2,
            l1,
            l2,
            lc1: l1 / 2.0,
            lc2: l2 / 2.0,
            i1: m1 * l1 * l1 / 12.0,
            i2: m2 * l2 * l2 / 12.0,
            gravity,
        }
    }

    /// Point masses at the link tips.
    pub fn point_masses(m1: f64, m2: f64, l1: f64, l2: f64, gravity: f64) -> Self {
        Self {
            m1,
            m2,
            l1,
            l2,
            lc1: l1,
            lc2: l2,
            i1: 0.0,
            i2: 0.0,
            gravity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.m1, self.m2, self.l1, self.l2];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("masses and lengths must be positive".into()));
        }
        if !(self.i1 >= 0.0 && self.i2 >= 0.0) {
            return Err(Error::InvalidArgument("inertias must be non-negative".into()));
        }
        let all = [
            self.m1, self.m2, self.l1, self.l2, self.lc1, self.lc2, self.i1, self.i2, self.gravity,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("robot parameters".into()));
        }
        Ok(())
    }

    pub fn reach(&self) -> f64 {
        self.l1 + self.l2
    }
}

fn check_dof(v: &[f64]) {
    assert_eq!(v.len(), DOF, "the analytic arm has exactly two joints");
}

pub fn mass_matrix(p: &RobotParams, q: &[f64]) -> Matrix {
    check_dof(q);
    let c2 = q[1].cos();
    let h22 = p.m2 * p.lc2 * p.lc2 + p.i2;
    let h12 = h22 + p.m2 * p.l1 * p.lc2 * c2;
    let h11 = p.m1 * p.lc1 * p.lc1 + p.i1 + p.m2 * (p.l1 * p.l1 + 2.0 * p.l1 * p.lc2 * c2) + h22;
    Matrix::from_rows(&[&[h11, h12], &[h12, h22]]).expect("finite inertia")
}

/// Centripetal and Coriolis forces `c(q, q̇)`.
pub fn coriolis_vector(p: &RobotParams, q: &[f64], qdot: &[f64]) -> Vec<f64> {
    check_dof(q);
    check_dof(qdot);
    let h = p.m2 * p.l1 * p.lc2 * q[1].sin();
    vec![
        -h * (2.0 * qdot[0] * qdot[1] + qdot[1] * qdot[1]),
        h * qdot[0] * qdot[0],
    ]
}

/// Gradient of the potential energy, `∂V/∂q`.
pub fn gravity_vector(p: &RobotParams, q: &[f64]) -> Vec<f64> {
    check_dof(q);
    let s1 = q[0].sin();
    let s12 = (q[0] + q[1]).sin();
    let g2 = p.m2 * p.lc2 * p.gravity * s12;
    vec![(p.m1 * p.lc1 + p.m2 * p.l1) * p.gravity * s1 + g2, g2]
}

pub fn potential_energy(p: &RobotParams, q: &[f64]) -> f64 {
    check_dof(q);
    let c1 = q[0].cos();
    let c12 = (q[0] + q[1]).cos();
    p.gravity * (p.m1 * p.lc1 * (1.0 - c1) + p.m2 * (p.l1 * (1.0 - c1) + p.lc2 * (1.0 - c12)))
}

/// Kinetic and potential energy `(T, V)`; `V` is zero in the hanging pose.
pub fn energy(p: &RobotParams, q: &[f64], qdot: &[f64]) -> (f64, f64) {
    let h = mass_matrix(p, q);
    let hq = h.mat_vec(qdot);
    let t = 0.5 * qdot.iter().zip(&hq).map(|(a, b)| a * b).sum::<f64>();
    (t, potential_energy(p, q))
}

/// The three summands `(H q̈, c, g)` of the inverse dynamics.
pub fn torque_components(p: &RobotParams, state: &JointState) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let inertial = mass_matrix(p, &state.q).mat_vec(&state.qddot);
    (
        inertial,
        coriolis_vector(p, &state.q, &state.qdot),
        gravity_vector(p, &state.q),
    )
}

/// `τ = H(q) q̈ + c(q, q̇) + g(q)`.
pub fn inverse_dynamics(p: &RobotParams, state: &JointState) -> Vec<f64> {
    let (a, b, c) = torque_components(p, state);
    (0..DOF).map(|i| a[i] + b[i] + c[i]).collect()
}

/// `q̈ = H(q)⁻¹ (τ − c(q, q̇) − g(q))`.
pub fn forward_dynamics(p: &RobotParams, q: &[f64], qdot: &[f64], tau: &[f64]) -> Vec<f64> {
    check_dof(tau);
    let h = mass_matrix(p, q);
    let c = coriolis_vector(p, q, qdot);
    let g = gravity_vector(p, q);
    let r0 = tau[0] - c[0] - g[0];
    let r1 = tau[1] - c[1] - g[1];
    let (a, b, d) = (h[(0, 0)], h[(0, 1)], h[(1, 1)]);
    let det = a * d - b * b;
    vec![(d * r0 - b * r1) / det, (a * r1 - b * r0) / det]
}

/// One classical Runge-Kutta step of the forward dynamics with `tau` held
/// constant over the step.
pub fn step(p: &RobotParams, q: &[f64], qdot: &[f64], tau: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("integration step {dt} must be positive")));
    }
    let f = |q: &[f64], v: &[f64]| forward_dynamics(p, q, v, tau);
    let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };

    let k1q = qdot.to_vec();
    let k1v = f(q, qdot);
    let q2 = axpy(q, &k1q, dt / 2.0);
    let v2 = axpy(qdot, &k1v, dt / 2.0);
    let k2q = v2.clone();
    let k2v = f(&q2, &v2);
    let q3 = axpy(q, &k2q, dt / 2.0);
    let v3 = axpy(qdot, &k2v, dt / 2.0);
    let k3q = v3.clone();
    let k3v = f(&q3, &v3);
    let q4 = axpy(q, &k3q, dt);
    let v4 = axpy(qdot, &k3v, dt);
    let k4q = v4.clone();
    let k4v = f(&q4, &v4);

    let combine = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..x.len())
            .map(|i| x[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
            .collect()
    };
    let q_next = combine(q, &k1q, &k2q, &k3q, &k4q);
    let v_next = combine(qdot, &k1v, &k2v, &k3v, &k4v);
    if !q_next.iter().chain(&v_next).all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("simulation state after step from q = {q:?}")));
    }
    Ok((q_next, v_next))
}

/// End-effector position `(x, y)`; `y` points up, the hanging arm ends at
/// `(0, -(l1 + l2))`.
pub fn forward_kinematics(p: &RobotParams, q: &[f64]) -> (f64, f64) {
    let x = p.l1 * q[0].sin() + p.l2 * (q[0] + q[1]).sin();
    let y = -p.l1 * q[0].cos() - p.l2 * (q[0] + q[1]).cos();
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_point_masses() -> RobotParams {
        RobotParams::point_masses(1.0, 1.0, 1.0, 1.0, 9.81)
    }

    #[test]
    fn point_mass_inertia_at_straight_arm() {
        let h = mass_matrix(&unit_point_masses(), &[0.3, 0.0]);
        assert!((h[(0, 0)] - 5.0).abs() < 1e-15);
        assert!((h[(0, 1)] - 2.0).abs() < 1e-15);
        assert!((h[(1, 0)] - 2.0).abs() < 1e-15);
        assert!((h[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inertia_is_even_in_elbow_angle() {
        let p = RobotParams::default();
        assert_eq!(mass_matrix(&p, &[0.2, 0.7]), mass_matrix(&p, &[0.2, -0.7]));
    }

    #[test]
    fn hanging_equilibrium_and_zero_gravity() {
        let p = RobotParams::default();
        assert_eq!(gravity_vector(&p, &[0.0, 0.0]), vec![0.0, 0.0]);
        let mut p0 = p.clone();
        p0.gravity = 0.0;
        assert_eq!(gravity_vector(&p0, &[1.0, -2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn static_hold_with_horizontal_forearm() {
        // forearm horizontal: q1 + q2 = π/2, tip mass 1 kg at 1 m → 9.81 N·m
        let p = unit_point_masses();
        let tau = inverse_dynamics(&p, &JointState::new(vec![0.4, std::f64::consts::FRAC_PI_2 - 0.4], vec![0.0; 2], vec![0.0; 2]).unwrap());
        assert!((tau[1] - 9.81).abs() < 1e-12);
    }

    #[test]
    fn coriolis_is_quadratic_in_velocity() {
        let p = RobotParams::default();
        let q = [0.3, 1.1];
        assert_eq!(coriolis_vector(&p, &q, &[0.0, 0.0]), vec![0.0, 0.0]);
        let c1 = coriolis_vector(&p, &q, &[0.7, -1.3]);
        let c2 = coriolis_vector(&p, &q, &[1.4, -2.6]);
        for i in 0..2 {
            assert!((c2[i] - 4.0 * c1[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_forward_roundtrip() {
        let p = RobotParams::default();
        let s = JointState::new(vec![0.4, -1.0], vec![1.2, 0.3], vec![-2.0, 5.0]).unwrap();
        let tau = inverse_dynamics(&p, &s);
        let qdd = forward_dynamics(&p, &s.q, &s.qdot, &tau);
        for i in 0..2 {
            assert!((qdd[i] - s.qddot[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn step_rejects_non_positive_dt() {
        let p = RobotParams::default();
        assert!(step(&p, &[0.0; 2], &[0.0; 2], &[0.0; 2], 0.0).is_err());
    }

    #[test]
    fn compensated_statics_do_not_move() {
        let p = RobotParams::default();
        let q = [0.5, 0.8];
        let tau = gravity_vector(&p, &q);
        let (q1, v1) = step(&p, &q, &[0.0; 2], &tau, 1e-3).unwrap();
        for i in 0..2 {
            assert!((q1[i] - q[i]).abs() < 1e-15 && v1[i].abs() < 1e-15);
        }
    }

    #[test]
    fn kinetic_energy_scaling() {
        let p = RobotParams::default();
        let q = [0.1, 0.9];
        assert_eq!(energy(&p, &q, &[0.0, 0.0]).0, 0.0);
        let t1 = energy(&p, &q, &[0.5, -0.4]).0;
        let t2 = energy(&p, &q, &[1.0, -0.8]).0;
        assert!((t2 - 4.0 * t1).abs() < 1e-14);
    }
}

//! Linear-in-parameters model of the planar two-link arm.
//!
//! With `β = [m1 lc1² + I1 + m2 l1², m2 lc2² + I2, m2 l1 lc2, m1 lc1 + m2 l1, m2 lc2]`
//! the closed-form dynamics are exactly `τ = Y(q, q̇, q̈) β` where
//!
//! ```text
//! Y₁ = [q̈₁, q̈₁+q̈₂, cos q₂ (2q̈₁+q̈₂) − sin q₂ (2q̇₁q̇₂+q̇₂²), g sin q₁, g sin(q₁+q₂)]
//! Y₂ = [0,   q̈₁+q̈₂, cos q₂ q̈₁ + sin q₂ q̇₁²,                0,          g sin(q₁+q₂)]
//! ```
//!
//! Only the gravity constant of the geometry enters `Y`; masses and lengths
//! are what the regression recovers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{RobotParams, DOF};
use crate::state::{DynSample, JointState};
use crate::tensor::linalg::symmetric_eigen;
use crate::tensor::{cholesky, cholesky_solve, Matrix};

pub const FEATURE_DIM: usize = 5;
/// Ridge added to the normal equations when their Cholesky factorization fails.
pub const RIDGE: f64 = 1e-8;
/// Eigenvalues of `YᵀY` below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-10;

pub fn si_features(geometry: &RobotParams, state: &JointState) -> Result<Matrix> {
    if state.dof() != DOF {
        return Err(Error::Unsupported(format!(
            "the regressor is derived for the two-link arm, got {} dof",
            state.dof()
        )));
    }
    let (q, qd, qdd) = (&state.q, &state.qdot, &state.qddot);
    let g = geometry.gravity;
    let (s2, c2) = q[1].sin_cos();
    let s12 = (q[0] + q[1]).sin();
    let sum_acc = qdd[0] + qdd[1];
    Matrix::from_rows(&[
        &[
            qdd[0],
            sum_acc,
            c2 * (2.0 * qdd[0] + qdd[1]) - s2 * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]),
            g * q[0].sin(),
            g * s12,
        ],
        &[0.0, sum_acc, c2 * qdd[0] + s2 * qd[0] * qd[0], 0.0, g * s12],
    ])
}

/// Base parameters of `p` in the column order of [`si_features`].
pub fn beta_true(p: &RobotParams) -> Vec<f64> {
    vec![
        p.m1 * p.lc1 * p.lc1 + p.i1 + p.m2 * p.l1 * p.l1,
        p.m2 * p.lc2 * p.lc2 + p.i2,
        p.m2 * p.l1 * p.lc2,
        p.m1 * p.lc1 + p.m2 * p.l1,
        p.m2 * p.lc2,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiModel {
    pub beta: Vec<f64>,
    pub feature_dim: usize,
    /// Gravity constant used by the regressor.
    pub gravity: f64,
}

impl SiModel {
    pub fn new(beta: Vec<f64>, gravity: f64) -> Result<Self> {
        let m = Self {
            feature_dim: beta.len(),
            beta,
            gravity,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim != self.beta.len() || self.feature_dim != FEATURE_DIM {
            return Err(Error::Shape(format!(
                "{} base parameters for feature width {}",
                self.beta.len(),
                self.feature_dim
            )));
        }
        if !self.beta.iter().all(|b| b.is_finite()) || !self.gravity.is_finite() {
            return Err(Error::NonFinite("base parameters".into()));
        }
        Ok(())
    }

    pub fn predict(&self, state: &JointState) -> Result<Vec<f64>> {
        let geometry = RobotParams {
            gravity: self.gravity,
            ..RobotParams::default()
        };
        Ok(si_features(&geometry, state)?.mat_vec(&self.beta))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Cholesky,
    Ridge,
    MinimumNorm,
}

#[derive(Clone, Debug)]
pub struct SiFit {
    pub model: SiModel,
    pub rank: usize,
    /// Orthonormal basis (as columns) of the parameter directions the data
    /// determine; the full identity when the stack has full rank.
    pub identifiable: Matrix,
    pub method: SolveMethod,
    /// `‖Y β − τ‖` over the stacked samples.
    pub residual_norm: f64,
}

/// Least squares on the stacked regressor through the normal equations.
pub fn si_fit(geometry: &RobotParams, samples: &[DynSample]) -> Result<SiFit> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut yty = Matrix::zeros(FEATURE_DIM, FEATURE_DIM);
    let mut ytt = vec![0.0; FEATURE_DIM];
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let y = si_features(geometry, &s.state)?;
        yty.add_assign(&y.tr_matmul(&y));
        for (acc, v) in ytt.iter_mut().zip(y.transpose().mat_vec(&s.tau)) {
            *acc += v;
        }
        rows.push(y);
    }
    let (values, vectors) = symmetric_eigen(&yty)?;
    let largest = values.last().copied().unwrap_or(0.0).max(0.0);
    let kept: Vec<usize> = (0..FEATURE_DIM)
        .filter(|&k| largest > 0.0 && values[k] > RANK_TOLERANCE * largest)
        .collect();
    let rank = kept.len();
    let (beta, method) = if rank == FEATURE_DIM {
        match cholesky(&yty) {
            Ok(l) => (cholesky_solve(&l, &Matrix::column(&ytt))?.into_vec(), SolveMethod::Cholesky),
            Err(_) => {
                let mut reg = yty.clone();
                for k in 0..FEATURE_DIM {
                    reg[(k, k)] += RIDGE;
                }
                let l = cholesky(&reg)?;
                (cholesky_solve(&l, &Matrix::column(&ytt))?.into_vec(), SolveMethod::Ridge)
            }
        }
    } else {
        // pseudo-inverse restricted to the identifiable eigen-directions
        let mut beta = vec![0.0; FEATURE_DIM];
        for &k in &kept {
            let v = vectors.col_vec(k);
            let coef = v.iter().zip(&ytt).map(|(a, b)| a * b).sum::<f64>() / values[k];
            for (b, vi) in beta.iter_mut().zip(&v) {
                *b += coef * vi;
            }
        }
        (beta, SolveMethod::MinimumNorm)
    };
    let mut identifiable = Matrix::zeros(FEATURE_DIM, rank);
    for (j, &k) in kept.iter().enumerate() {
        for i in 0..FEATURE_DIM {
            identifiable[(i, j)] = vectors[(i, k)];
        }
    }
    let residual_norm = rows
        .iter()
        .zip(samples)
        .map(|(y, s)| {
            y.mat_vec(&beta)
                .iter()
                .zip(&s.tau)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt();
    Ok(SiFit {
        model: SiModel::new(beta, geometry.gravity)?,
        rank,
        identifiable,
        method,
        residual_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn states() -> Vec<JointState> {
        (0..40)
            .map(|k| {
                let x = k as f64 * 0.61;
                JointState::new(
                    vec![x.sin() * 1.2, (0.7 * x).cos()],
                    vec![(1.3 * x).cos() * 2.0, x.sin()],
                    vec![(0.4 * x).sin() * 3.0, (2.1 * x).cos() * 2.0],
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn regressor_reproduces_the_oracle() {
        let p = RobotParams::default();
        let beta = beta_true(&p);
        for s in states() {
            let tau = si_features(&p, &s).unwrap().mat_vec(&beta);
            let truth = oracle::inverse_dynamics(&p, &s);
            for (a, b) in tau.iter().zip(&truth) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn statics_use_only_gravity_columns() {
        let s = JointState::new(vec![0.4, 0.9], vec![0.0; 2], vec![0.0; 2]).unwrap();
        let y = si_features(&RobotParams::default(), &s).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(y[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn three_dof_is_unsupported() {
        let s = JointState::zeros(3);
        assert!(matches!(si_features(&RobotParams::default(), &s), Err(Error::Unsupported(_))));
    }

    #[test]
    fn fits_noise_free_data_exactly() {
        let p = RobotParams::default();
        let samples: Vec<DynSample> = states()
            .into_iter()
            .map(|s| {
                let tau = oracle::inverse_dynamics(&p, &s);
                DynSample::new(0.0, s, tau).unwrap()
            })
            .collect();
        let fit = si_fit(&p, &samples).unwrap();
        assert_eq!(fit.rank, 5);
        assert_eq!(fit.method, SolveMethod::Cholesky);
        assert!(fit.residual_norm < 1e-8);
        for (a, b) in fit.model.beta.iter().zip(beta_true(&p)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn repeated_sample_takes_minimum_norm_path() {
        let p = RobotParams::default();
        let s = states().remove(3);
        let tau = oracle::inverse_dynamics(&p, &s);
        let sample = DynSample::new(0.0, s, tau).unwrap();
        let fit = si_fit(&p, &vec![sample.clone(); 10]).unwrap();
        assert_eq!(fit.method, SolveMethod::MinimumNorm);
        assert!(fit.rank <= 2);
        assert!(fit.residual_norm < 1e-8);
        // minimum norm: no component outside the identifiable subspace
        let proj = fit.identifiable.tr_matmul(&Matrix::column(&fit.model.beta));
        let back = fit.identifiable.matmul(&proj).unwrap();
        for (a, b) in back.as_slice().iter().zip(&fit.model.beta) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_beta_predicts_zero() {
        let m = SiModel::new(vec![0.0; 5], 9.81).unwrap();
        assert_eq!(m.predict(&states()[1]).unwrap(), vec![0.0, 0.0]);
    }
}

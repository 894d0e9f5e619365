use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generalized positions, velocities and accelerations of an n-dof system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub qddot: Vec<f64>,
}

impl JointState {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>, qddot: Vec<f64>) -> Result<Self> {
        let s = Self { q, qdot, qddot };
        s.validate()?;
        Ok(s)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            qdot: vec![0.0; n],
            qddot: vec![0.0; n],
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q.len();
        if self.qdot.len() != n || self.qddot.len() != n {
            return Err(Error::Shape(format!(
                "joint state lengths {}/{}/{}",
                n,
                self.qdot.len(),
                self.qddot.len()
            )));
        }
        if !self.q.iter().chain(&self.qdot).chain(&self.qddot).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("joint state".into()));
        }
        Ok(())
    }
}

/// One training tuple: a joint state together with the applied generalized
/// forces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynSample {
    pub t: f64,
    pub state: JointState,
    pub tau: Vec<f64>,
}

impl DynSample {
    pub fn new(t: f64, state: JointState, tau: Vec<f64>) -> Result<Self> {
        state.validate()?;
        if tau.len() != state.dof() {
            return Err(Error::Shape(format!("tau has {} entries for {} dof", tau.len(), state.dof())));
        }
        if !t.is_finite() || !tau.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("sample".into()));
        }
        Ok(Self { t, state, tau })
    }

    pub fn dof(&self) -> usize {
        self.state.dof()
    }
}

/// Mean over samples of the squared torque error norm, `mean ‖τ̂ − τ‖²`.
pub fn torque_mse(samples: &[DynSample], mut predict: impl FnMut(&JointState) -> Vec<f64>) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .map(|s| {
            predict(&s.state)
                .iter()
                .zip(&s.tau)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    total / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(JointState::new(vec![0.0; 2], vec![0.0; 2], vec![0.0; 1]).is_err());
        assert!(JointState::new(vec![f64::NAN, 0.0], vec![0.0; 2], vec![0.0; 2]).is_err());
        let s = JointState::zeros(2);
        assert!(DynSample::new(0.0, s.clone(), vec![1.0]).is_err());
        assert!(DynSample::new(0.0, s, vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn mse_of_exact_predictor_is_zero() {
        let s = DynSample::new(0.0, JointState::zeros(2), vec![1.0, -2.0]).unwrap();
        assert_eq!(torque_mse(&[s.clone()], |_| vec![1.0, -2.0]), 0.0);
        assert_eq!(torque_mse(&[s], |_| vec![0.0, 0.0]), 5.0);
    }
}

//! Common handles over every inverse-dynamics model and every trainable one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{FfnnParams, FfnnTrainer, SiModel};
use crate::network::{self, DelanParams, DelanTrainer};
use crate::error::{Error, Result};
use crate::optim::AdamConfig;
use crate::oracle::{self, RobotParams};
use crate::state::{DynSample, JointState};

/// Anything that maps `(q, q̇, q̈)` to a torque.
pub trait InverseModel: Send + Sync {
    fn dof(&self) -> usize;
    fn inverse_dynamics(&self, state: &JointState) -> Result<Vec<f64>>;
}

impl InverseModel for DelanParams {
    fn dof(&self) -> usize {
        self.n()
    }

    fn inverse_dynamics(&self, state: &JointState) -> Result<Vec<f64>> {
        network::inverse_dynamics(self, state)
    }
}

impl InverseModel for FfnnParams {
    fn dof(&self) -> usize {
        self.n()
    }

    fn inverse_dynamics(&self, state: &JointState) -> Result<Vec<f64>> {
        self.predict(state)
    }
}

impl InverseModel for SiModel {
    fn dof(&self) -> usize {
        2
    }

    fn inverse_dynamics(&self, state: &JointState) -> Result<Vec<f64>> {
        self.predict(state)
    }
}

/// The analytic model of the simulated arm.
#[derive(Clone, Debug)]
pub struct OracleModel(pub RobotParams);

impl InverseModel for OracleModel {
    fn dof(&self) -> usize {
        oracle::DOF
    }

    fn inverse_dynamics(&self, state: &JointState) -> Result<Vec<f64>> {
        state.validate()?;
        if state.dof() != oracle::DOF {
            return Err(Error::Shape(format!("oracle is {}-dof, state has {}", oracle::DOF, state.dof())));
        }
        Ok(oracle::inverse_dynamics(&self.0, state))
    }
}

/// No feed-forward at all: the controller degenerates to plain PD.
#[derive(Clone, Debug)]
pub struct ZeroModel(pub usize);

impl InverseModel for ZeroModel {
    fn dof(&self) -> usize {
        self.0
    }

    fn inverse_dynamics(&self, _state: &JointState) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.0])
    }
}

impl<M: InverseModel + ?Sized> InverseModel for std::sync::Arc<M> {
    fn dof(&self) -> usize {
        (**self).dof()
    }

    fn inverse_dynamics(&self, state: &JointState) -> Result<Vec<f64>> {
        (**self).inverse_dynamics(state)
    }
}

impl<M: InverseModel + ?Sized> InverseModel for Box<M> {
    fn dof(&self) -> usize {
        (**self).dof()
    }

    fn inverse_dynamics(&self, state: &JointState) -> Result<Vec<f64>> {
        (**self).inverse_dynamics(state)
    }
}

/// A model that improves from batches of samples.
pub trait Learner: Send {
    type Snapshot: InverseModel + Clone + 'static;

    /// Immutable copy of the current parameters.
    fn snapshot(&self) -> Self::Snapshot;

    /// One optimizer step; returns the loss before the update.
    fn train_step(&mut self, batch: &[DynSample], lr: f64) -> Result<f64>;

    /// Mean squared torque error of `batch` without any penalty.
    fn data_loss(&mut self, batch: &[DynSample]) -> Result<f64>;

    /// Torque predictions for a whole batch at once.
    fn predict_batch(&mut self, batch: &[DynSample]) -> Result<Vec<Vec<f64>>>;
}

pub struct DelanLearner {
    pub params: DelanParams,
    trainer: DelanTrainer,
}

impl DelanLearner {
    pub fn new(params: DelanParams, lambda: f64, adam: AdamConfig) -> Result<Self> {
        let trainer = DelanTrainer::new(&params, lambda, adam)?;
        Ok(Self { params, trainer })
    }
}

impl Learner for DelanLearner {
    type Snapshot = DelanParams;

    fn snapshot(&self) -> DelanParams {
        self.params.clone()
    }

    fn train_step(&mut self, batch: &[DynSample], lr: f64) -> Result<f64> {
        self.trainer.train_step(&mut self.params, batch, lr)
    }

    fn data_loss(&mut self, batch: &[DynSample]) -> Result<f64> {
        self.trainer.graph_mut().data_loss(&self.params, batch)
    }

    fn predict_batch(&mut self, batch: &[DynSample]) -> Result<Vec<Vec<f64>>> {
        self.trainer.graph_mut().predict(&self.params, batch)
    }
}

pub struct FfnnLearner {
    pub params: FfnnParams,
    trainer: FfnnTrainer,
}

impl FfnnLearner {
    pub fn new(params: FfnnParams, lambda: f64, adam: AdamConfig) -> Result<Self> {
        let trainer = FfnnTrainer::new(&params, lambda, adam)?;
        Ok(Self { params, trainer })
    }
}

impl Learner for FfnnLearner {
    type Snapshot = FfnnParams;

    fn snapshot(&self) -> FfnnParams {
        self.params.clone()
    }

    fn train_step(&mut self, batch: &[DynSample], lr: f64) -> Result<f64> {
        self.trainer.train_step(&mut self.params, batch, lr)
    }

    fn data_loss(&mut self, batch: &[DynSample]) -> Result<f64> {
        self.trainer.graph_mut().data_loss(&self.params, batch)
    }

    fn predict_batch(&mut self, batch: &[DynSample]) -> Result<Vec<Vec<f64>>> {
        self.trainer.graph_mut().predict(&self.params, batch)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Delan,
    Ffnn,
    Si,
    Oracle,
    Pd,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Delan, ModelKind::Ffnn, ModelKind::Si, ModelKind::Oracle, ModelKind::Pd];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Delan => "delan",
            ModelKind::Ffnn => "ffnn",
            ModelKind::Si => "si",
            ModelKind::Oracle => "oracle",
            ModelKind::Pd => "pd",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind '{s}'")))
    }
}

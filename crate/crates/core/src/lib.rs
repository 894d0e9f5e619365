//! Deep Lagrangian Networks: inverse-dynamics learning with the
//! Euler-Lagrange equation built into the network structure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod control;
pub mod error;
pub mod experiments;
pub mod model;
pub mod model_io;
pub mod network;
pub mod nn;
pub mod optim;
pub mod oracle;
pub mod state;
pub mod tensor;
pub mod trajectories;

pub use error::{Error, Result};
pub use model::{InverseModel, Learner, ModelKind};
pub use oracle::RobotParams;
pub use state::{DynSample, JointState};

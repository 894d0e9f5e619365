//! Deep Lagrangian Network: a network for `L(q)` and `g(q)` plugged into the
//! Euler-Lagrange equation.

mod dynamics;
mod graph;
mod params;
mod train;

pub use dynamics::{
    assemble_l, assemble_l_derivatives, decompose, evaluate, forward_dynamics, inverse_dynamics, lagrangian_layer,
    network_heads, off_diagonal_index, quadratic_dq, time_derivative_h, DelanEval, Heads, LagrangianLayerOutput,
    TorqueComponents,
};
pub use graph::LossGraph;
pub use params::{DelanConfig, DelanParams};
pub use train::{loss_and_gradient, DelanTrainer};

//! Dense matrices, small factorizations and a reverse-mode differentiation
//! tape.

mod activation;
pub mod gradcheck;
pub mod linalg;
mod matrix;
mod tape;

pub use activation::Activation;
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, Stencil};
pub use linalg::{cholesky, cholesky_solve};
pub use matrix::Matrix;
pub use tape::{Gradients, NodeId, Tape};

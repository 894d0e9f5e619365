//! Single-sample evaluation of the network and the Euler-Lagrange terms.
//!
//! Everything here is a plain feed-forward computation: the Jacobians of the
//! network outputs with respect to `q` are carried alongside the activations
//! layer by layer, so no numerical differentiation happens at inference.

use serde::Serialize;

use super::params::DelanParams;
use crate::error::{Error, Result};
use crate::state::JointState;
use crate::tensor::{cholesky_solve, Activation, Matrix};

/// Activation of one layer and its Jacobian with respect to the network input.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianLayerOutput {
    pub h: Vec<f64>,
    /// `∂h/∂q`, one row per entry of `h` and one column per joint.
    pub dh_dq: Matrix,
}

/// `h = g(W h_prev + b)` and `∂h/∂q = diag(g'(a)) W ∂h_prev/∂q`.
pub fn lagrangian_layer(
    h_prev: &[f64],
    dhprev_dq: &Matrix,
    w: &Matrix,
    b: &[f64],
    activation: Activation,
) -> Result<LagrangianLayerOutput> {
    if w.cols() != h_prev.len() || w.rows() != b.len() || dhprev_dq.rows() != h_prev.len() {
        return Err(Error::Shape(format!(
            "layer W {}x{}, bias {}, input {}, input Jacobian {}x{}",
            w.rows(),
            w.cols(),
            b.len(),
            h_prev.len(),
            dhprev_dq.rows(),
            dhprev_dq.cols()
        )));
    }
    let mut a = w.mat_vec(h_prev);
    for (a, b) in a.iter_mut().zip(b) {
        *a += b;
    }
    let mut dh_dq = w.matmul_unchecked(dhprev_dq);
    let cols = dh_dq.cols();
    for (r, a) in a.iter().enumerate() {
        let d = activation.derivative(*a);
        for v in &mut dh_dq.as_mut_slice()[r * cols..(r + 1) * cols] {
            *v *= d;
        }
    }
    let h = a.iter().map(|a| activation.apply(*a)).collect();
    Ok(LagrangianLayerOutput { h, dh_dq })
}

/// Outputs of the three heads and their Jacobians with respect to `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heads {
    /// Diagonal of `L` after the non-negative activation, before the offset.
    pub l_d: Vec<f64>,
    /// Strictly-lower entries of `L`, row-major.
    pub l_o: Vec<f64>,
    pub g: Vec<f64>,
    pub dl_d_dq: Matrix,
    pub dl_o_dq: Matrix,
}

pub fn network_heads(params: &DelanParams, q: &[f64]) -> Result<Heads> {
    let n = params.n();
    if q.len() != n {
        return Err(Error::Shape(format!("q has {} entries for a {n}-dof network", q.len())));
    }
    let cfg = &params.config;
    let mut h = cfg.normalize(q);
    let mut dh = Matrix::diag(&cfg.input_gain());
    for layer in &params.trunk {
        let out = lagrangian_layer(&h, &dh, &layer.w, layer.b.as_slice(), cfg.activation)?;
        h = out.h;
        dh = out.dh_dq;
    }
    let ld = lagrangian_layer(&h, &dh, &params.head_ld.w, params.head_ld.b.as_slice(), cfg.diag_activation)?;
    let lo = lagrangian_layer(&h, &dh, &params.head_lo.w, params.head_lo.b.as_slice(), Activation::Identity)?;
    let g = params.head_g.affine(&h);
    Ok(Heads {
        l_d: ld.h,
        l_o: lo.h,
        g,
        dl_d_dq: ld.dh_dq,
        dl_o_dq: lo.dh_dq,
    })
}

/// Position of entry `(r, c)`, `r > c`, in the row-major strictly-lower packing.
#[inline]
pub fn off_diagonal_index(r: usize, c: usize) -> usize {
    debug_assert!(r > c);
    r * (r - 1) / 2 + c
}

/// Lower-triangular `L` with diagonal `l_d + offset` and strictly-lower
/// entries taken from `l_o` in row-major order.
pub fn assemble_l(l_d: &[f64], l_o: &[f64], diag_offset: f64) -> Result<Matrix> {
    let n = l_d.len();
    if l_o.len() != n * n.saturating_sub(1) / 2 {
        return Err(Error::Shape(format!("{} off-diagonal entries for n = {n}", l_o.len())));
    }
    let mut l = Matrix::zeros(n, n);
    for r in 0..n {
        let d = l_d[r] + diag_offset;
        if !(d > 0.0) {
            return Err(Error::Invariant(format!("diagonal entry {r} of L is {d}, not positive")));
        }
        l[(r, r)] = d;
        for c in 0..r {
            l[(r, c)] = l_o[off_diagonal_index(r, c)];
        }
    }
    Ok(l)
}

/// `∂L/∂q_i` for every joint `i`, assembled from the columns of the head
/// Jacobians with the same packing as [`assemble_l`].
pub fn assemble_l_derivatives(dl_d_dq: &Matrix, dl_o_dq: &Matrix) -> Vec<Matrix> {
    let n = dl_d_dq.rows();
    (0..dl_d_dq.cols())
        .map(|i| {
            let mut d = Matrix::zeros(n, n);
            for r in 0..n {
                d[(r, r)] = dl_d_dq[(r, i)];
                for c in 0..r {
                    d[(r, c)] = dl_o_dq[(off_diagonal_index(r, c), i)];
                }
            }
            d
        })
        .collect()
}

/// `dH/dt = L (dL/dt)ᵀ + (dL/dt) Lᵀ` with `dL/dt = Σ_i ∂L/∂q_i q̇_i`.
pub fn time_derivative_h(l: &Matrix, dl_dq: &[Matrix], qdot: &[f64]) -> Matrix {
    let n = l.rows();
    let mut dl_dt = Matrix::zeros(n, n);
    for (d, v) in dl_dq.iter().zip(qdot) {
        dl_dt.add_scaled_assign(d, *v);
    }
    let a = l.matmul_tr(&dl_dt);
    let b = dl_dt.matmul_tr(l);
    a.add(&b).expect("square matrices of equal size")
}

/// Entry `i` is `q̇ᵀ (∂L/∂q_i Lᵀ + L ∂L/∂q_iᵀ) q̇ = 2 (∂L/∂q_iᵀ q̇)·(Lᵀ q̇)`.
pub fn quadratic_dq(l: &Matrix, dl_dq: &[Matrix], qdot: &[f64]) -> Vec<f64> {
    let lt_qdot = l.transpose().mat_vec(qdot);
    dl_dq
        .iter()
        .map(|d| {
            let dt_qdot = d.transpose().mat_vec(qdot);
            2.0 * dt_qdot.iter().zip(&lt_qdot).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

/// Quantities of the learned Euler-Lagrange equation at one `(q, q̇)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelanEval {
    pub l: Matrix,
    pub dl_dq: Vec<Matrix>,
    pub h: Matrix,
    pub dh_dt: Matrix,
    /// `q̇ᵀ (∂H/∂q_i) q̇` per joint.
    pub quad_dq: Vec<f64>,
    pub g: Vec<f64>,
}

impl DelanEval {
    /// `c(q, q̇) = Ḣ q̇ − ½ ∂(q̇ᵀ H q̇)/∂q`.
    pub fn coriolis(&self, qdot: &[f64]) -> Vec<f64> {
        self.dh_dt
            .mat_vec(qdot)
            .iter()
            .zip(&self.quad_dq)
            .map(|(a, b)| a - 0.5 * b)
            .collect()
    }
}

pub fn evaluate(params: &DelanParams, q: &[f64], qdot: &[f64]) -> Result<DelanEval> {
    if qdot.len() != params.n() {
        return Err(Error::Shape(format!("q̇ has {} entries for {} dof", qdot.len(), params.n())));
    }
    let heads = network_heads(params, q)?;
    let l = assemble_l(&heads.l_d, &heads.l_o, params.config.diag_offset)?;
    let dl_dq = assemble_l_derivatives(&heads.dl_d_dq, &heads.dl_o_dq);
    let h = l.matmul_tr(&l);
    let dh_dt = time_derivative_h(&l, &dl_dq, qdot);
    let quad_dq = quadratic_dq(&l, &dl_dq, qdot);
    Ok(DelanEval {
        l,
        dl_dq,
        h,
        dh_dt,
        quad_dq,
        g: heads.g,
    })
}

/// Inertial, centripetal/Coriolis and gravitational torques.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TorqueComponents {
    pub inertial: Vec<f64>,
    pub coriolis: Vec<f64>,
    pub gravity: Vec<f64>,
}

impl TorqueComponents {
    pub fn total(&self) -> Vec<f64> {
        self.inertial
            .iter()
            .zip(&self.coriolis)
            .zip(&self.gravity)
            .map(|((a, b), c)| a + b + c)
            .collect()
    }
}

pub fn decompose(params: &DelanParams, state: &JointState) -> Result<TorqueComponents> {
    if state.qddot.len() != params.n() {
        return Err(Error::Shape(format!("q̈ has {} entries for {} dof", state.qddot.len(), params.n())));
    }
    let ev = evaluate(params, &state.q, &state.qdot)?;
    Ok(TorqueComponents {
        inertial: ev.h.mat_vec(&state.qddot),
        coriolis: ev.coriolis(&state.qdot),
        gravity: ev.g,
    })
}

/// `τ = H q̈ + Ḣ q̇ − ½ (∂(q̇ᵀ H q̇)/∂q)ᵀ + g`.
pub fn inverse_dynamics(params: &DelanParams, state: &JointState) -> Result<Vec<f64>> {
    Ok(decompose(params, state)?.total())
}

/// `q̈ = (L Lᵀ)⁻¹ (τ − Ḣ q̇ + ½ ∂(q̇ᵀ H q̇)/∂q − g)`, solved with the learned
/// Cholesky factor.
pub fn forward_dynamics(params: &DelanParams, q: &[f64], qdot: &[f64], tau: &[f64]) -> Result<Vec<f64>> {
    if tau.len() != params.n() {
        return Err(Error::Shape(format!("τ has {} entries for {} dof", tau.len(), params.n())));
    }
    let ev = evaluate(params, q, qdot)?;
    let c = ev.coriolis(qdot);
    let rhs: Vec<f64> = (0..params.n()).map(|i| tau[i] - c[i] - ev.g[i]).collect();
    Ok(cholesky_solve(&ev.l, &Matrix::column(&rhs))?.into_vec())
}

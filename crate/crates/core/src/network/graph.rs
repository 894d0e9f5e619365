//! The training loss recorded once on a [`Tape`] for a whole batch.
//!
//! Samples are laid out as columns, so every per-joint quantity is a `1 x B`
//! row and the Euler-Lagrange terms are written out entry by entry of the
//! lower-triangular `L`. The analytic `∂/∂q` Jacobians are ordinary nodes of
//! the graph, which is what lets first-order reverse mode train through them.

use super::dynamics::off_diagonal_index;
use super::params::{DelanConfig, DelanParams};
use crate::error::{Error, Result};
use crate::state::DynSample;
use crate::tensor::{Activation, Matrix, NodeId, Tape};

/// Batched DeLaN loss `mean ‖τ̂ − τ‖² + λ Σ‖W‖²` with its parameter gradient.
#[derive(Clone, Debug)]
pub struct LossGraph {
    tape: Tape,
    config: DelanConfig,
    lambda: f64,
    param_count: usize,
    data_term: NodeId,
    tau_hat: Vec<NodeId>,
}

/// Node of `act'(pre)`, or `None` when the derivative is identically one.
fn tangent_gate(tape: &mut Tape, pre: NodeId, act: Activation) -> Result<Option<NodeId>> {
    match act {
        Activation::Identity => Ok(None),
        other => match other.derivative_activation() {
            Some(d) => Ok(Some(tape.activation(pre, d))),
            None => Err(Error::Unsupported(format!(
                "activation {} cannot be trained through its derivative",
                other.name()
            ))),
        },
    }
}

fn gated(tape: &mut Tape, gate: Option<NodeId>, x: NodeId) -> NodeId {
    match gate {
        Some(g) => tape.mul(g, x),
        None => x,
    }
}

impl LossGraph {
    pub fn build(config: &DelanConfig, lambda: f64) -> Result<Self> {
        config.validate()?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("regularization weight {lambda} must be non-negative")));
        }
        let n = config.n;
        let mut t = Tape::new();

        let mut layers = Vec::new();
        for i in 0..config.hidden.len() {
            let w = t.variable(&format!("trunk{i}.W"));
            let b = t.variable(&format!("trunk{i}.b"));
            layers.push((w, b));
        }
        let heads: Vec<(NodeId, NodeId)> = ["ld", "lo", "g"]
            .iter()
            .map(|h| (t.variable(&format!("{h}.W")), t.variable(&format!("{h}.b"))))
            .collect();
        let param_count = t.leaves().len();
        let q = t.constant("q");
        let qd = t.constant("qdot");
        let qdd = t.constant("qddot");
        let tau = t.constant("tau");
        let inv_b = t.constant("1/B");
        let offset = t.constant("diag_offset");

        // trunk with tangents dh/dq_j, one n_h x B node per joint
        let gain = config.input_gain();
        let mut h = q;
        let mut dh: Vec<NodeId> = Vec::new();
        for (i, &(w, b)) in layers.iter().enumerate() {
            let wh = t.matmul(w, h);
            let pre = t.add(wh, b);
            h = t.activation(pre, config.activation);
            let gate = tangent_gate(&mut t, pre, config.activation)?;
            dh = (0..n)
                .map(|j| {
                    let wd = if i == 0 {
                        let col = t.slice_cols(w, j..j + 1);
                        t.scale(col, gain[j])
                    } else {
                        t.matmul(w, dh[j])
                    };
                    gated(&mut t, gate, wd)
                })
                .collect();
        }

        let head = |t: &mut Tape, (w, b): (NodeId, NodeId), act: Activation, dh: &[NodeId]| -> Result<(NodeId, Vec<NodeId>)> {
            let wh = t.matmul(w, h);
            let pre = t.add(wh, b);
            let out = t.activation(pre, act);
            let gate = tangent_gate(t, pre, act)?;
            let d = dh
                .iter()
                .map(|&x| {
                    let wd = t.matmul(w, x);
                    gated(t, gate, wd)
                })
                .collect();
            Ok((out, d))
        };
        let (ld, dld) = head(&mut t, heads[0], config.diag_activation, &dh)?;
        let ld = t.add(ld, offset);
        let (lo, dlo) = if n > 1 {
            head(&mut t, heads[1], Activation::Identity, &dh)?
        } else {
            // no strictly-lower entries; the empty head still owns its leaves
            (ld, Vec::new())
        };
        let gw = t.matmul(heads[2].0, h);
        let g = t.add(gw, heads[2].1);

        // L entries and their q-derivatives as 1 x B rows
        let entry = |t: &mut Tape, r: usize, c: usize| -> NodeId {
            if r == c {
                t.slice_rows(ld, r..r + 1)
            } else {
                let k = off_diagonal_index(r, c);
                t.slice_rows(lo, k..k + 1)
            }
        };
        let d_entry = |t: &mut Tape, r: usize, c: usize, j: usize| -> NodeId {
            if r == c {
                t.slice_rows(dld[j], r..r + 1)
            } else {
                let k = off_diagonal_index(r, c);
                t.slice_rows(dlo[j], k..k + 1)
            }
        };
        let mut l = vec![vec![None; n]; n];
        let mut dl = vec![vec![vec![None; n]; n]; n];
        for r in 0..n {
            for c in 0..=r {
                l[r][c] = Some(entry(&mut t, r, c));
                for j in 0..n {
                    dl[j][r][c] = Some(d_entry(&mut t, r, c, j));
                }
            }
        }
        let lrc = |r: usize, c: usize| l[r][c].expect("lower entry");
        let rows = |t: &mut Tape, x: NodeId| -> Vec<NodeId> { (0..n).map(|r| t.slice_rows(x, r..r + 1)).collect() };
        let qd_r = rows(&mut t, qd);
        let qdd_r = rows(&mut t, qdd);
        let tau_r = rows(&mut t, tau);
        let g_r = rows(&mut t, g);

        // Lᵀ x and L x for a lower-triangular matrix given entry-wise
        let lt_times = |t: &mut Tape, m: &dyn Fn(usize, usize) -> NodeId, x: &[NodeId]| -> Vec<NodeId> {
            (0..n)
                .map(|c| {
                    let terms: Vec<NodeId> = (c..n).map(|r| t.mul(m(r, c), x[r])).collect();
                    t.sum(&terms)
                })
                .collect()
        };
        let l_times = |t: &mut Tape, m: &dyn Fn(usize, usize) -> NodeId, x: &[NodeId]| -> Vec<NodeId> {
            (0..n)
                .map(|r| {
                    let terms: Vec<NodeId> = (0..=r).map(|c| t.mul(m(r, c), x[c])).collect();
                    t.sum(&terms)
                })
                .collect()
        };

        let u = lt_times(&mut t, &lrc, &qdd_r);
        let h_qdd = l_times(&mut t, &lrc, &u);
        let v = lt_times(&mut t, &lrc, &qd_r);

        let mut ldot = vec![vec![None; n]; n];
        for r in 0..n {
            for c in 0..=r {
                let terms: Vec<NodeId> = (0..n)
                    .map(|j| t.mul(dl[j][r][c].expect("lower entry"), qd_r[j]))
                    .collect();
                ldot[r][c] = Some(t.sum(&terms));
            }
        }
        let ldot_rc = |r: usize, c: usize| ldot[r][c].expect("lower entry");
        let x = lt_times(&mut t, &ldot_rc, &qd_r);
        let l_x = l_times(&mut t, &lrc, &x);
        let ldot_v = l_times(&mut t, &ldot_rc, &v);

        let mut tau_hat = Vec::with_capacity(n);
        let mut residuals = Vec::with_capacity(n);
        for i in 0..n {
            let dli = |r: usize, c: usize| dl[i][r][c].expect("lower entry");
            let w = lt_times(&mut t, &dli, &qd_r);
            let half_quad_terms: Vec<NodeId> = (0..n).map(|c| t.mul(w[c], v[c])).collect();
            let half_quad = t.sum(&half_quad_terms);
            let neg_half_quad = t.scale(half_quad, -1.0);
            let ti = t.sum(&[h_qdd[i], l_x[i], ldot_v[i], neg_half_quad, g_r[i]]);
            let ti = t.label(ti, format!("tau_hat{i}"));
            tau_hat.push(ti);
            let res = t.sub(ti, tau_r[i]);
            residuals.push(t.sum_squares(res));
        }
        let sse = t.sum(&residuals);
        let data_term = t.matmul(sse, inv_b);
        let data_term = t.label(data_term, "data");
        let mut loss = data_term;
        if lambda > 0.0 {
            let weights: Vec<NodeId> = layers.iter().chain(&heads).map(|(w, _)| t.sum_squares(*w)).collect();
            let omega = t.sum(&weights);
            let reg = t.scale(omega, lambda);
            loss = t.add(data_term, reg);
        }
        let loss = t.label(loss, "loss");
        t.set_outputs(&[loss]);
        Ok(Self {
            tape: t,
            config: config.clone(),
            lambda,
            param_count,
            data_term,
            tau_hat,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn tape_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }

    /// Leaf values in tape order: parameter tensors, then `q` (normalized),
    /// `q̇`, `q̈`, `τ`, `1/B` and the diagonal offset column.
    pub fn inputs(&self, params: &DelanParams, batch: &[DynSample]) -> Result<Vec<Matrix>> {
        if params.config != self.config {
            return Err(Error::InvalidArgument("parameters do not match the recorded architecture".into()));
        }
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = self.config.n;
        let b = batch.len();
        let mut fields = [
            Matrix::zeros(n, b),
            Matrix::zeros(n, b),
            Matrix::zeros(n, b),
            Matrix::zeros(n, b),
        ];
        for (k, s) in batch.iter().enumerate() {
            if s.dof() != n {
                return Err(Error::Shape(format!("sample {k} has {} dof, model has {n}", s.dof())));
            }
            let qn = self.config.normalize(&s.state.q);
            for r in 0..n {
                fields[0][(r, k)] = qn[r];
                fields[1][(r, k)] = s.state.qdot[r];
                fields[2][(r, k)] = s.state.qddot[r];
                fields[3][(r, k)] = s.tau[r];
            }
        }
        let mut inputs: Vec<Matrix> = params.tensors().into_iter().cloned().collect();
        debug_assert_eq!(inputs.len(), self.param_count);
        inputs.extend(fields);
        inputs.push(Matrix::scalar(1.0 / b as f64));
        inputs.push(Matrix::filled(n, 1, self.config.diag_offset));
        Ok(inputs)
    }

    /// Loss and gradients ordered like [`DelanParams::tensors`].
    pub fn loss_and_gradient(&mut self, params: &DelanParams, batch: &[DynSample]) -> Result<(f64, Vec<Matrix>)> {
        let inputs = self.inputs(params, batch)?;
        let loss = self.tape.forward(&inputs)?[0].item();
        let grads = self.tape.backward(&Matrix::scalar(1.0))?;
        let grads = grads
            .into_slots()
            .into_iter()
            .take(self.param_count)
            .map(|g| g.expect("parameter leaves are differentiable"))
            .collect();
        Ok((loss, grads))
    }

    /// Loss alone, without the backward pass.
    pub fn loss(&mut self, params: &DelanParams, batch: &[DynSample]) -> Result<f64> {
        let inputs = self.inputs(params, batch)?;
        Ok(self.tape.forward(&inputs)?[0].item())
    }

    /// Mean squared torque error of the batch, excluding the penalty.
    pub fn data_loss(&mut self, params: &DelanParams, batch: &[DynSample]) -> Result<f64> {
        let inputs = self.inputs(params, batch)?;
        self.tape.forward(&inputs)?;
        Ok(self.tape.value(self.data_term).expect("forward ran").item())
    }

    /// Predicted torques for every sample of the batch (its `τ` is ignored).
    pub fn predict(&mut self, params: &DelanParams, batch: &[DynSample]) -> Result<Vec<Vec<f64>>> {
        let inputs = self.inputs(params, batch)?;
        self.tape.forward(&inputs)?;
        let rows: Vec<&Matrix> = self
            .tau_hat
            .iter()
            .map(|id| self.tape.value(*id).expect("forward ran"))
            .collect();
        Ok((0..batch.len()).map(|k| rows.iter().map(|r| r[(0, k)]).collect()).collect())
    }
}

use super::graph::LossGraph;
use super::params::DelanParams;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::state::DynSample;
use crate::tensor::Matrix;

/// One-off loss and gradient; records a fresh graph on every call.
pub fn loss_and_gradient(params: &DelanParams, batch: &[DynSample], lambda: f64) -> Result<(f64, Vec<Matrix>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    LossGraph::build(&params.config, lambda)?.loss_and_gradient(params, batch)
}

/// Recorded loss graph plus Adam state for one parameter set.
#[derive(Clone, Debug)]
pub struct DelanTrainer {
    graph: LossGraph,
    adam: Adam,
}

impl DelanTrainer {
    pub fn new(params: &DelanParams, lambda: f64, adam: AdamConfig) -> Result<Self> {
        Ok(Self {
            graph: LossGraph::build(&params.config, lambda)?,
            adam: Adam::new(adam, params.shapes()),
        })
    }

    pub fn steps(&self) -> u64 {
        self.adam.steps()
    }

    pub fn graph_mut(&mut self) -> &mut LossGraph {
        &mut self.graph
    }

    /// One Adam update on `batch`; returns the loss before the update. The
    /// diagonal offset is a fixed hyper-parameter and never changes. On a
    /// non-finite loss or gradient `params` are left untouched.
    pub fn train_step(&mut self, params: &mut DelanParams, batch: &[DynSample], lr: f64) -> Result<f64> {
        let (loss, grads) = self.graph.loss_and_gradient(params, batch).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("training loss: {msg}")),
            other => other,
        })?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("training loss {loss} or its gradient")));
        }
        self.adam.step(&mut params.tensors_mut(), &grads, lr);
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::DelanConfig;
    use crate::oracle::{inverse_dynamics, RobotParams};
    use crate::state::JointState;

    fn oracle_batch() -> Vec<DynSample> {
        let rp = RobotParams::default();
        (0..16)
            .map(|k| {
                let x = k as f64 * 0.37;
                let st = JointState::new(vec![x.sin(), (1.3 * x).cos()], vec![x.cos(), -x.sin()], vec![0.5 * x.sin(), x.cos()])
                    .unwrap();
                let tau = inverse_dynamics(&rp, &st);
                DynSample::new(0.0, st, tau).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let cfg = DelanConfig::new(2).with_hidden(&[8]);
        let mut p = DelanParams::init(cfg, 0).unwrap();
        let before = p.clone();
        let mut tr = DelanTrainer::new(&p, 1e-4, AdamConfig::default()).unwrap();
        tr.train_step(&mut p, &oracle_batch(), 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn loss_decreases_and_offset_is_fixed() {
        let cfg = DelanConfig::new(2).with_hidden(&[16, 16]);
        let mut p = DelanParams::init(cfg, 3).unwrap();
        let batch = oracle_batch();
        let mut tr = DelanTrainer::new(&p, 1e-4, AdamConfig::default()).unwrap();
        let first = tr.train_step(&mut p, &batch, 3e-3).unwrap();
        let mut last = first;
        for _ in 0..100 {
            last = tr.train_step(&mut p, &batch, 3e-3).unwrap();
        }
        assert!(last < 0.5 * first, "{first} -> {last}");
        assert_eq!(p.config.diag_offset, 1e-2);
    }

    #[test]
    fn regularized_loss_bounds_the_penalty() {
        let cfg = DelanConfig::new(2).with_hidden(&[8]);
        let p = DelanParams::init(cfg, 0).unwrap();
        let (loss, _) = loss_and_gradient(&p, &oracle_batch(), 0.1).unwrap();
        assert!(loss >= 0.1 * p.weight_norm_sq());
        assert!(matches!(loss_and_gradient(&p, &[], 0.1), Err(Error::EmptyBatch)));
    }
}

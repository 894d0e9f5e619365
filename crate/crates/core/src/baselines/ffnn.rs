use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Dense, Normalization};
use crate::optim::{Adam, AdamConfig};
use crate::state::{DynSample, JointState};
use crate::tensor::{Activation, Matrix, NodeId, Tape};

/// Multilayer perceptron mapping `(q, q̇, q̈)` to `τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfnnConfig {
    pub n: usize,
    /// Hidden widths; empty for a single affine map.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Optional whitening of the `3n` inputs.
    pub normalization: Option<Normalization>,
}

impl FfnnConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            hidden: vec![64, 64],
            activation: Activation::Softplus,
            normalization: None,
        }
    }

    pub fn with_hidden(mut self, hidden: &[usize]) -> Self {
        self.hidden = hidden.to_vec();
        self
    }

    pub fn input_dim(&self) -> usize {
        3 * self.n
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("network widths must be positive".into()));
        }
        if let Some(norm) = &self.normalization {
            norm.validate(self.input_dim())?;
        }
        Ok(())
    }

    fn features(&self, s: &JointState) -> Vec<f64> {
        let x: Vec<f64> = s.q.iter().chain(&s.qdot).chain(&s.qddot).copied().collect();
        match &self.normalization {
            Some(norm) => norm.apply(&x),
            None => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FfnnParams {
    pub config: FfnnConfig,
    /// Hidden layers followed by the linear output layer.
    pub layers: Vec<Dense>,
}

impl FfnnParams {
    fn widths(config: &FfnnConfig) -> Vec<usize> {
        let mut w = vec![config.input_dim()];
        w.extend(&config.hidden);
        w.push(config.n);
        w
    }

    pub fn init(config: FfnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = Self::widths(&config);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i == last { 1.0 } else { std::f64::consts::SQRT_2 };
                Dense::init(w[0], w[1], gain, &mut rng)
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn zeros(config: FfnnConfig) -> Result<Self> {
        config.validate()?;
        let layers = Self::widths(&config).windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { config, layers })
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|t| t.shape()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.layers.iter().map(|l| l.w.sum_squares()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let widths = Self::widths(&self.config);
        if self.layers.len() != widths.len() - 1 {
            return Err(Error::Shape("layer count does not match configuration".into()));
        }
        for (l, w) in self.layers.iter().zip(widths.windows(2)) {
            if l.w.shape() != (w[1], w[0]) || l.b.shape() != (w[1], 1) {
                return Err(Error::Shape(format!("layer W {:?} should be {}x{}", l.w.shape(), w[1], w[0])));
            }
        }
        if !self.tensors().iter().all(|t| t.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    pub fn predict(&self, state: &JointState) -> Result<Vec<f64>> {
        if state.dof() != self.n() {
            return Err(Error::Shape(format!("state has {} dof, model has {}", state.dof(), self.n())));
        }
        let mut h = self.config.features(state);
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.affine(&h);
            if i != last {
                h.iter_mut().for_each(|v| *v = self.config.activation.apply(*v));
            }
        }
        Ok(h)
    }
}

/// Batched `mean ‖τ̂ − τ‖² + λ Σ‖W‖²` on a tape.
#[derive(Clone, Debug)]
pub struct FfnnLossGraph {
    tape: Tape,
    config: FfnnConfig,
    param_count: usize,
    data_term: NodeId,
    output: NodeId,
}

impl FfnnLossGraph {
    pub fn build(config: &FfnnConfig, lambda: f64) -> Result<Self> {
        config.validate()?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("regularization weight {lambda} must be non-negative")));
        }
        let mut t = Tape::new();
        let depth = config.hidden.len() + 1;
        let layers: Vec<(NodeId, NodeId)> = (0..depth)
            .map(|i| (t.variable(&format!("layer{i}.W")), t.variable(&format!("layer{i}.b"))))
            .collect();
        let param_count = t.leaves().len();
        let x = t.constant("x");
        let tau = t.constant("tau");
        let inv_b = t.constant("1/B");
        let mut h = x;
        for (i, &(w, b)) in layers.iter().enumerate() {
            let wh = t.matmul(w, h);
            h = t.add(wh, b);
            if i + 1 != depth {
                h = t.activation(h, config.activation);
            }
        }
        let output = h;
        let res = t.sub(output, tau);
        let sse = t.sum_squares(res);
        let data_term = t.matmul(sse, inv_b);
        let mut loss = data_term;
        if lambda > 0.0 {
            let norms: Vec<NodeId> = layers.iter().map(|(w, _)| t.sum_squares(*w)).collect();
            let omega = t.sum(&norms);
            let reg = t.scale(omega, lambda);
            loss = t.add(data_term, reg);
        }
        t.set_outputs(&[loss]);
        Ok(Self {
            tape: t,
            config: config.clone(),
            param_count,
            data_term,
            output,
        })
    }

    pub fn tape_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }

    pub fn inputs(&self, params: &FfnnParams, batch: &[DynSample]) -> Result<Vec<Matrix>> {
        if params.config != self.config {
            return Err(Error::InvalidArgument("parameters do not match the recorded architecture".into()));
        }
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = self.config.n;
        let b = batch.len();
        let mut x = Matrix::zeros(3 * n, b);
        let mut tau = Matrix::zeros(n, b);
        for (k, s) in batch.iter().enumerate() {
            if s.dof() != n {
                return Err(Error::Shape(format!("sample {k} has {} dof, model has {n}", s.dof())));
            }
            for (r, v) in self.config.features(&s.state).into_iter().enumerate() {
                x[(r, k)] = v;
            }
            for r in 0..n {
                tau[(r, k)] = s.tau[r];
            }
        }
        let mut inputs: Vec<Matrix> = params.tensors().into_iter().cloned().collect();
        inputs.push(x);
        inputs.push(tau);
        inputs.push(Matrix::scalar(1.0 / b as f64));
        Ok(inputs)
    }

    pub fn loss_and_gradient(&mut self, params: &FfnnParams, batch: &[DynSample]) -> Result<(f64, Vec<Matrix>)> {
        let inputs = self.inputs(params, batch)?;
        let loss = self.tape.forward(&inputs)?[0].item();
        let grads = self
            .tape
            .backward(&Matrix::scalar(1.0))?
            .into_slots()
            .into_iter()
            .take(self.param_count)
            .map(|g| g.expect("parameter leaves are differentiable"))
            .collect();
        Ok((loss, grads))
    }

    pub fn data_loss(&mut self, params: &FfnnParams, batch: &[DynSample]) -> Result<f64> {
        let inputs = self.inputs(params, batch)?;
        self.tape.forward(&inputs)?;
        Ok(self.tape.value(self.data_term).expect("forward ran").item())
    }

    pub fn predict(&mut self, params: &FfnnParams, batch: &[DynSample]) -> Result<Vec<Vec<f64>>> {
        let inputs = self.inputs(params, batch)?;
        self.tape.forward(&inputs)?;
        let out = self.tape.value(self.output).expect("forward ran");
        Ok((0..batch.len()).map(|k| out.col_vec(k)).collect())
    }
}

#[derive(Clone, Debug)]
pub struct FfnnTrainer {
    graph: FfnnLossGraph,
    adam: Adam,
}

impl FfnnTrainer {
    pub fn new(params: &FfnnParams, lambda: f64, adam: AdamConfig) -> Result<Self> {
        Ok(Self {
            graph: FfnnLossGraph::build(&params.config, lambda)?,
            adam: Adam::new(adam, params.shapes()),
        })
    }

    pub fn steps(&self) -> u64 {
        self.adam.steps()
    }

    pub fn graph_mut(&mut self) -> &mut FfnnLossGraph {
        &mut self.graph
    }

    /// Same contract as the DeLaN trainer: one Adam step, loss before the
    /// update returned, parameters untouched on a non-finite loss.
    pub fn train_step(&mut self, params: &mut FfnnParams, batch: &[DynSample], lr: f64) -> Result<f64> {
        let (loss, grads) = self.graph.loss_and_gradient(params, batch)?;
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

    fn state() -> JointState {
        JointState::new(vec![0.3, -0.2], vec![1.0, 2.0], vec![-1.0, 0.5]).unwrap()
    }

    #[test]
    fn zero_weights_predict_zero() {
        let p = FfnnParams::zeros(FfnnConfig::new(2)).unwrap();
        assert_eq!(p.predict(&state()).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn linear_probe_returns_q() {
        let mut p = FfnnParams::zeros(FfnnConfig::new(2).with_hidden(&[])).unwrap();
        p.layers[0].w[(0, 0)] = 1.0;
        p.layers[0].w[(1, 1)] = 1.0;
        assert_eq!(p.predict(&state()).unwrap(), vec![0.3, -0.2]);
    }

    #[test]
    fn default_parameter_count() {
        let p = FfnnParams::init(FfnnConfig::new(2), 0).unwrap();
        assert_eq!(p.param_count(), 6 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
    }

    #[test]
    fn batched_prediction_matches_direct() {
        let p = FfnnParams::init(FfnnConfig::new(2).with_hidden(&[7, 5]), 1).unwrap();
        let s = DynSample::new(0.0, state(), vec![1.0, 1.0]).unwrap();
        let mut g = FfnnLossGraph::build(&p.config, 0.0).unwrap();
        let a = g.predict(&p, std::slice::from_ref(&s)).unwrap();
        let b = p.predict(&s.state).unwrap();
        for (x, y) in a[0].iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lr_zero_and_loss_decrease() {
        let mut p = FfnnParams::init(FfnnConfig::new(2).with_hidden(&[16]), 2).unwrap();
        let batch: Vec<DynSample> = (0..8)
            .map(|k| {
                let x = k as f64 * 0.5;
                let st = JointState::new(vec![x.sin(), x.cos()], vec![x, -x], vec![1.0, x]).unwrap();
                DynSample::new(0.0, st, vec![x.sin() * 2.0, x.cos()]).unwrap()
            })
            .collect();
        let mut tr = FfnnTrainer::new(&p, 0.0, AdamConfig::default()).unwrap();
        let before = p.clone();
        tr.train_step(&mut p, &batch, 0.0).unwrap();
        assert_eq!(p, before);
        let first = tr.train_step(&mut p, &batch, 1e-2).unwrap();
        let mut last = first;
        for _ in 0..100 {
            last = tr.train_step(&mut p, &batch, 1e-2).unwrap();
        }
        assert!(last < 0.5 * first, "{first} -> {last}");
    }
}

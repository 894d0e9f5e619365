use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Dense, Normalization};
use crate::tensor::{Activation, Matrix};

/// Architecture and fixed hyper-parameters of a Deep Lagrangian Network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelanConfig {
    /// Degrees of freedom.
    pub n: usize,
    /// Widths of the shared trunk layers.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Non-negative activation of the `L` diagonal head.
    pub diag_activation: Activation,
    /// Constant added to the diagonal of `L`; not trained.
    pub diag_offset: f64,
    /// Optional whitening of `q` before the first layer.
    pub normalization: Option<Normalization>,
}

impl DelanConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            hidden: vec![64, 64],
            activation: Activation::Softplus,
            diag_activation: Activation::Softplus,
            diag_offset: 1e-2,
            normalization: None,
        }
    }

    pub fn with_hidden(mut self, hidden: &[usize]) -> Self {
        self.hidden = hidden.to_vec();
        self
    }

    pub fn off_diagonal_count(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("a DeLaN needs at least one degree of freedom".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("trunk layers must be non-empty".into()));
        }
        if !(self.diag_offset > 0.0) || !self.diag_offset.is_finite() {
            return Err(Error::Invariant(format!(
                "diagonal offset {} must be strictly positive",
                self.diag_offset
            )));
        }
        if !matches!(
            self.diag_activation,
            Activation::Softplus | Activation::Relu | Activation::Sigmoid
        ) {
            return Err(Error::InvalidArgument(format!(
                "diagonal activation {} is not non-negative",
                self.diag_activation.name()
            )));
        }
        if let Some(norm) = &self.normalization {
            norm.validate(self.n)?;
        }
        Ok(())
    }

    /// Scale applied to `∂q̃/∂q` by the input whitening.
    pub(crate) fn input_gain(&self) -> Vec<f64> {
        match &self.normalization {
            Some(norm) => norm.scale.iter().map(|s| 1.0 / s).collect(),
            None => vec![1.0; self.n],
        }
    }

    pub(crate) fn normalize(&self, q: &[f64]) -> Vec<f64> {
        match &self.normalization {
            Some(norm) => norm.apply(q),
            None => q.to_vec(),
        }
    }
}

/// Init gain of the `L` diagonal head. With unit gain a fraction of random
/// networks start with `cond(H)` near 1e9 at large `|q|`.
pub const DIAG_HEAD_GAIN: f64 = 0.3;

/// All trainable weights: the shared trunk and the heads producing the
/// diagonal of `L`, its strictly-lower entries and the gravity torques.
#[derive(Clone, Debug, PartialEq)]
pub struct DelanParams {
    pub config: DelanConfig,
    pub trunk: Vec<Dense>,
    pub head_ld: Dense,
    pub head_lo: Dense,
    pub head_g: Dense,
}

impl DelanParams {
    pub fn init(config: DelanConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden_gain = std::f64::consts::SQRT_2;
        let mut trunk = Vec::with_capacity(config.hidden.len());
        let mut width = config.n;
        for &h in &config.hidden {
            trunk.push(Dense::init(width, h, hidden_gain, &mut rng));
            width = h;
        }
        let head_ld = Dense::init(width, config.n, DIAG_HEAD_GAIN, &mut rng);
        let head_lo = Dense::init(width, config.off_diagonal_count(), 1.0, &mut rng);
        let head_g = Dense::init(width, config.n, 1.0, &mut rng);
        Ok(Self {
            config,
            trunk,
            head_ld,
            head_lo,
            head_g,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(config: DelanConfig) -> Result<Self> {
        config.validate()?;
        let mut width = config.n;
        let mut trunk = Vec::new();
        for &h in &config.hidden {
            trunk.push(Dense::zeros(width, h));
            width = h;
        }
        Ok(Self {
            head_ld: Dense::zeros(width, config.n),
            head_lo: Dense::zeros(width, config.off_diagonal_count()),
            head_g: Dense::zeros(width, config.n),
            trunk,
            config,
        })
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk
            .iter()
            .chain([&self.head_ld, &self.head_lo, &self.head_g])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain([&mut self.head_ld, &mut self.head_lo, &mut self.head_g])
    }

    /// Parameter tensors in canonical order: `W, b` of every trunk layer,
    /// then of the `l_d`, `l_o` and `g` heads.
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|t| t.shape()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    /// `Ω`: sum of squared weights (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers().map(|l| l.w.sum_squares()).sum()
    }

    /// Checks head widths and finiteness.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let n = self.n();
        let mut width = n;
        for (layer, &h) in self.trunk.iter().zip(&self.config.hidden) {
            if layer.w.shape() != (h, width) || layer.b.shape() != (h, 1) {
                return Err(Error::Shape(format!("trunk layer of width {h} has W {:?}", layer.w.shape())));
            }
            width = h;
        }
        if self.trunk.len() != self.config.hidden.len() {
            return Err(Error::Shape("trunk depth does not match configuration".into()));
        }
        for (head, out) in [
            (&self.head_ld, n),
            (&self.head_lo, self.config.off_diagonal_count()),
            (&self.head_g, n),
        ] {
            if head.w.shape() != (out, width) || head.b.shape() != (out, 1) {
                return Err(Error::Shape(format!(
                    "head W {:?} should be {out}x{width}",
                    head.w.shape()
                )));
            }
        }
        if !self.tensors().iter().all(|t| t.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_widths() {
        let p = DelanParams::init(DelanConfig::new(4).with_hidden(&[8, 8]), 0).unwrap();
        assert_eq!(p.head_ld.output_dim(), 4);
        assert_eq!(p.head_lo.output_dim(), 6);
        assert_eq!(p.head_g.output_dim(), 4);
        p.validate().unwrap();
    }

    #[test]
    fn default_two_dof_parameter_count() {
        let p = DelanParams::init(DelanConfig::new(2), 0).unwrap();
        // 2·64+64 + 64·64+64 + (64·2+2) + (64+1) + (64·2+2)
        assert_eq!(p.param_count(), 192 + 4160 + 130 + 65 + 130);
    }

    #[test]
    fn non_positive_offset_is_rejected() {
        let mut c = DelanConfig::new(2);
        c.diag_offset = 0.0;
        assert!(matches!(DelanParams::init(c, 0), Err(Error::Invariant(_))));
    }

    #[test]
    fn same_seed_same_weights() {
        let c = DelanConfig::new(2).with_hidden(&[16]);
        assert_eq!(DelanParams::init(c.clone(), 3).unwrap(), DelanParams::init(c.clone(), 3).unwrap());
        assert_ne!(DelanParams::init(c.clone(), 3).unwrap(), DelanParams::init(c, 4).unwrap());
    }
}

//! Building blocks shared by the DeLaN and feed-forward networks.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Affine layer `W x + b` with `W: out x in` and `b: out x 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Matrix,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Matrix::zeros(output, input),
            b: Matrix::zeros(output, 1),
        }
    }

    /// Uniform fan-in initialization, `W ~ U(±gain·√(3/fan_in))`, zero bias.
    pub fn init<R: Rng>(input: usize, output: usize, gain: f64, rng: &mut R) -> Self {
        let limit = gain * (3.0 / input as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("valid bounds");
        let data = (0..input * output).map(|_| dist.sample(rng)).collect();
        Self {
            w: Matrix::from_vec(output, input, data).expect("finite init"),
            b: Matrix::zeros(output, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// Pre-activation `W x + b` for a single input vector.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut a = self.w.mat_vec(x);
        for (a, b) in a.iter_mut().zip(self.b.as_slice()) {
            *a += b;
        }
        a
    }
}

/// Affine input whitening `x̃ = (x − mean) / scale`, fixed at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Per-dimension mean and standard deviation of `rows`; dimensions with
    /// (near) zero spread keep unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let dim = rows
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot fit normalization to no data".into()))?
            .len();
        let count = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v / count;
            }
        }
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m) / count;
            }
        }
        let scale = var
            .iter()
            .map(|v| if v.sqrt() > 1e-8 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.mean.len() != dim || self.scale.len() != dim {
            return Err(Error::Shape(format!(
                "normalization of width {}/{} for input width {dim}",
                self.mean.len(),
                self.scale.len()
            )));
        }
        if self.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("normalization scale must be positive and finite".into()));
        }
        Ok(())
    }
}

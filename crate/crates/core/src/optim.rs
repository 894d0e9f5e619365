//! Adam with bias correction over a list of parameter matrices.

use serde::{Deserialize, Serialize};

use crate::tensor::Matrix;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|(r, c)| (Matrix::zeros(r, c), Matrix::zeros(r, c)))
            .unzip();
        Self { config, t: 0, m, v }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update in place. With `lr == 0` parameters are untouched.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - beta2.powi(self.t.min(i32::MAX as u64) as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let p = p.as_mut_slice();
            for (((p, g), m), v) in p
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                if lr != 0.0 {
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // bias-corrected first step is lr·sign(g)
        let mut p = Matrix::column(&[1.0, -1.0]);
        let mut adam = Adam::new(AdamConfig::default(), [(2, 1)]);
        adam.step(&mut [&mut p], &[Matrix::column(&[0.3, -5.0])], 0.1);
        assert!((p[(0, 0)] - 0.9).abs() < 1e-6);
        assert!((p[(1, 0)] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p = Matrix::column(&[1.0, 2.0]);
        let mut adam = Adam::new(AdamConfig::default(), [(2, 1)]);
        adam.step(&mut [&mut p], &[Matrix::column(&[1.0, 1.0])], 0.0);
        assert_eq!(p.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Matrix::column(&[3.0, -2.0]);
        let mut adam = Adam::new(AdamConfig::default(), [(2, 1)]);
        for _ in 0..2000 {
            let g = p.scale(2.0);
            adam.step(&mut [&mut p], &[g], 0.05);
        }
        assert!(p.max_abs() < 1e-3, "{p:?}");
    }
}

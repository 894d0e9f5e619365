//! Central finite-difference validation of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, Tape};
use crate::error::Result;

/// Relative error with a small absolute floor in the denominator, so that
/// entries where both values are essentially zero compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Central finite-difference formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`, error `O(h²)`.
    ThreePoint,
    /// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`, error `O(h⁴)`.
    FivePoint,
}

impl Stencil {
    /// Derivative at offset zero of a vector-valued `f(offset)`.
    pub fn differentiate(self, step: f64, mut f: impl FnMut(f64) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
        let combine = |terms: &[(f64, Vec<f64>)], denom: f64| -> Vec<f64> {
            (0..terms[0].1.len())
                .map(|i| terms.iter().map(|(w, v)| w * v[i]).sum::<f64>() / denom)
                .collect()
        };
        Ok(match self {
            Stencil::ThreePoint => combine(&[(1.0, f(step)?), (-1.0, f(-step)?)], 2.0 * step),
            Stencil::FivePoint => combine(
                &[(-1.0, f(2.0 * step)?), (8.0, f(step)?), (-8.0, f(-step)?), (1.0, f(-2.0 * step)?)],
                12.0 * step,
            ),
        })
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub stencil: Stencil,
    pub tolerance: f64,
    /// Denominator floor of [`relative_error`].
    pub floor: f64,
    /// Check at most this many randomly chosen entries of each leaf.
    pub max_entries_per_leaf: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            stencil: Stencil::ThreePoint,
            tolerance: 1e-5,
            floor: 1e-6,
            max_entries_per_leaf: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LeafCheck {
    pub leaf: usize,
    pub label: String,
    pub entries_checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub leaves: Vec<LeafCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Compares the reverse-mode gradient of the tape's first output (contracted
/// with an all-ones cotangent) against central differences for every
/// differentiable leaf.
pub fn grad_check(tape: &mut Tape, inputs: &[Matrix], opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let out = tape.forward(inputs)?;
    let cot = Matrix::filled(out[0].rows(), out[0].cols(), 1.0);
    let grads = tape.backward(&cot)?.into_slots();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let objective = |tape: &mut Tape, inputs: &[Matrix]| -> Result<f64> {
        Ok(tape.forward(inputs)?[0].as_slice().iter().sum())
    };

    let mut work: Vec<Matrix> = inputs.to_vec();
    let mut leaves = Vec::new();
    for (slot, grad) in grads.iter().enumerate() {
        let Some(grad) = grad else { continue };
        let len = work[slot].len();
        let entries: Vec<usize> = match opts.max_entries_per_leaf {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for &e in &entries {
            let orig = work[slot].as_slice()[e];
            let numeric = opts.stencil.differentiate(opts.step, |h| {
                work[slot].as_mut_slice()[e] = orig + h;
                Ok(vec![objective(tape, &work)?])
            })?[0];
            work[slot].as_mut_slice()[e] = orig;
            let analytic = grad.as_slice()[e];
            max_rel = max_rel.max(relative_error(analytic, numeric, opts.floor));
            max_abs = max_abs.max((analytic - numeric).abs());
        }
        let id = tape.leaves()[slot];
        leaves.push(LeafCheck {
            leaf: slot,
            label: tape.leaf_label(id).unwrap_or_default().to_string(),
            entries_checked: entries.len(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    // leave the tape holding the unperturbed forward values
    tape.forward(inputs)?;
    let max_rel_error = leaves.iter().fold(0.0_f64, |m, l| m.max(l.max_rel_error));
    Ok(GradCheckReport {
        leaves,
        max_rel_error,
        tolerance: opts.tolerance,
    })
}

//! Finite-difference validation of the analytic derivatives and a timing
//! benchmark of single-sample inference.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::median;
use crate::error::Result;
use crate::network::{evaluate, inverse_dynamics, network_heads, quadratic_dq, DelanConfig, DelanParams, LossGraph};
use crate::state::{DynSample, JointState};
use crate::tensor::gradcheck::relative_error;
use crate::tensor::{grad_check, GradCheckOptions, Matrix, Stencil};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSettings {
    /// Random `(parameters, state)` draws per check.
    pub configurations: usize,
    pub dof: usize,
    pub hidden: Vec<usize>,
    /// Central-difference step.
    pub step: f64,
    pub stencil: Stencil,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Samples per batch of the loss check.
    pub batch_size: usize,
    /// Randomly chosen entries of each parameter tensor in the loss check.
    pub entries_per_leaf: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self {
            configurations: 100,
            dof: 2,
            hidden: vec![64, 64],
            step: 1e-3,
            stencil: Stencil::FivePoint,
            tolerance: 1e-5,
            floor: 1e-6,
            batch_size: 4,
            entries_per_leaf: 16,
            lambda: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckSummary {
    pub name: String,
    pub configurations: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckSummary {
    fn new(name: &str, s: &GradcheckSettings, max_rel_error: f64) -> Self {
        Self {
            name: name.into(),
            configurations: s.configurations,
            max_rel_error,
            tolerance: s.tolerance,
            passed: max_rel_error < s.tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckOutcome {
    pub checks: Vec<CheckSummary>,
}

impl GradcheckOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Draw {
    params: DelanParams,
    q: Vec<f64>,
    qdot: Vec<f64>,
}

fn draws(s: &GradcheckSettings, stream: u64) -> Result<Vec<Draw>> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_mul(31).wrapping_add(stream));
    (0..s.configurations)
        .map(|_| {
            let params = DelanParams::init(DelanConfig::new(s.dof).with_hidden(&s.hidden), rng.random())?;
            let q = (0..s.dof).map(|_| rng.random_range(-3.0..3.0)).collect();
            let qdot = (0..s.dof).map(|_| rng.random_range(-2.0..2.0)).collect();
            Ok(Draw { params, q, qdot })
        })
        .collect()
}

fn shifted(x: &[f64], dir: &[f64], h: f64) -> Vec<f64> {
    x.iter().zip(dir).map(|(a, d)| a + h * d).collect()
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

fn quadratic_form(h: &Matrix, v: &[f64]) -> f64 {
    h.mat_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Jacobians of the `L` heads with respect to `q`.
pub fn check_dh_dq(s: &GradcheckSettings) -> Result<CheckSummary> {
    let mut worst: f64 = 0.0;
    for d in draws(s, 1)? {
        let heads = network_heads(&d.params, &d.q)?;
        let n_d = heads.l_d.len();
        for i in 0..s.dof {
            let e = unit(s.dof, i);
            let numeric = s.stencil.differentiate(s.step, |h| {
                let out = network_heads(&d.params, &shifted(&d.q, &e, h))?;
                Ok(out.l_d.into_iter().chain(out.l_o).collect())
            })?;
            for (r, fd) in numeric.iter().enumerate() {
                let analytic = if r < n_d { heads.dl_d_dq[(r, i)] } else { heads.dl_o_dq[(r - n_d, i)] };
                worst = worst.max(relative_error(analytic, *fd, s.floor));
            }
        }
    }
    Ok(CheckSummary::new("dh/dq", s, worst))
}

/// `dH/dt` against `H` differenced along `q̇`.
pub fn check_dh_dt(s: &GradcheckSettings) -> Result<CheckSummary> {
    let mut worst: f64 = 0.0;
    for d in draws(s, 2)? {
        let ev = evaluate(&d.params, &d.q, &d.qdot)?;
        let numeric = s.stencil.differentiate(s.step, |h| {
            Ok(evaluate(&d.params, &shifted(&d.q, &d.qdot, h), &d.qdot)?.h.into_vec())
        })?;
        for (a, fd) in ev.dh_dt.as_slice().iter().zip(&numeric) {
            worst = worst.max(relative_error(*a, *fd, s.floor));
        }
    }
    Ok(CheckSummary::new("dH/dt", s, worst))
}

/// `q̇ᵀ (∂H/∂q_i) q̇` as computed by `quad` against differenced `q̇ᵀ H q̇`.
pub fn check_quadratic_dq(
    s: &GradcheckSettings,
    quad: impl Fn(&Matrix, &[Matrix], &[f64]) -> Vec<f64>,
) -> Result<CheckSummary> {
    let mut worst: f64 = 0.0;
    for d in draws(s, 3)? {
        let ev = evaluate(&d.params, &d.q, &d.qdot)?;
        let analytic = quad(&ev.l, &ev.dl_dq, &d.qdot);
        for (i, a) in analytic.iter().enumerate() {
            let e = unit(s.dof, i);
            let numeric = s.stencil.differentiate(s.step, |h| {
                let hq = evaluate(&d.params, &shifted(&d.q, &e, h), &d.qdot)?.h;
                Ok(vec![quadratic_form(&hq, &d.qdot)])
            })?;
            worst = worst.max(relative_error(*a, numeric[0], s.floor));
        }
    }
    Ok(CheckSummary::new("qdot' dH/dq_i qdot", s, worst))
}

/// Reverse-mode gradient of the batched training loss.
pub fn check_loss_gradient(s: &GradcheckSettings) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_mul(31).wrapping_add(4));
    let config = DelanConfig::new(s.dof).with_hidden(&s.hidden);
    let mut graph = LossGraph::build(&config, s.lambda)?;
    let mut worst: f64 = 0.0;
    for d in draws(s, 4)? {
        let batch = (0..s.batch_size)
            .map(|k| {
                let mut v = |lo: f64, hi: f64| (0..s.dof).map(|_| rng.random_range(lo..hi)).collect::<Vec<f64>>();
                let state = if k == 0 {
                    JointState::new(d.q.clone(), d.qdot.clone(), v(-5.0, 5.0))?
                } else {
                    JointState::new(v(-3.0, 3.0), v(-2.0, 2.0), v(-5.0, 5.0))?
                };
                DynSample::new(0.0, state, v(-5.0, 5.0))
            })
            .collect::<Result<Vec<_>>>()?;
        let inputs = graph.inputs(&d.params, &batch)?;
        let opts = GradCheckOptions {
            step: s.step,
            stencil: s.stencil,
            tolerance: s.tolerance,
            floor: s.floor,
            max_entries_per_leaf: Some(s.entries_per_leaf),
            seed: rng.random(),
        };
        let report = grad_check(graph.tape_mut(), &inputs, &opts)?;
        worst = worst.max(report.max_rel_error);
    }
    Ok(CheckSummary::new("loss gradient", s, worst))
}

/// Every derivative check with the library's own implementations.
pub fn run_gradcheck(s: &GradcheckSettings) -> Result<GradcheckOutcome> {
    Ok(GradcheckOutcome {
        checks: vec![
            check_dh_dq(s)?,
            check_dh_dt(s)?,
            check_quadratic_dq(s, quadratic_dq)?,
            check_loss_gradient(s)?,
        ],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub dof: usize,
    pub hidden: Vec<usize>,
    pub evaluations: usize,
    /// Seconds per inverse-dynamics evaluation.
    pub median: f64,
    pub p95: f64,
    pub max: f64,
    /// Feed-forward period the evaluation has to fit in.
    pub budget: f64,
}

/// Wall-clock time of single-sample DeLaN inverse dynamics of an untrained
/// `dof`-joint network on random states.
pub fn inference_benchmark(dof: usize, hidden: &[usize], evaluations: usize, budget: f64, seed: u64) -> Result<BenchmarkReport> {
    let params = DelanParams::init(DelanConfig::new(dof).with_hidden(hidden), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = (0..evaluations.max(1))
        .map(|_| {
            let mut v = |a: f64| (0..dof).map(|_| rng.random_range(-a..a)).collect::<Vec<f64>>();
            JointState::new(v(3.0), v(2.0), v(5.0))
        })
        .collect::<Result<Vec<_>>>()?;
    // one untimed call so allocations and caches are warm
    inverse_dynamics(&params, &states[0])?;
    let mut times = Vec::with_capacity(states.len());
    for st in &states {
        let clock = Instant::now();
        let tau = inverse_dynamics(&params, st)?;
        times.push(clock.elapsed().as_secs_f64());
        std::hint::black_box(tau);
    }
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let p95 = sorted[((sorted.len() as f64 * 0.95).ceil() as usize).clamp(1, sorted.len()) - 1];
    Ok(BenchmarkReport {
        dof,
        hidden: hidden.to_vec(),
        evaluations: times.len(),
        median: median(&times).expect("at least one evaluation"),
        p95,
        max: *sorted.last().expect("at least one evaluation"),
        budget,
    })
}

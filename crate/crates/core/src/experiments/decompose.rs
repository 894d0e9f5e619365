//! Recovery of the inertial, Coriolis and gravity torques by a DeLaN that
//! only ever saw their sum.

use serde::Serialize;

use super::{character_pool, fit_offline, mean, oracle_labels, ExperimentConfig, ExperimentKind, TrainedModel};
use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::network::{decompose, DelanParams};
use crate::oracle;
use crate::state::DynSample;
use crate::trajectories::split_characters;

/// `‖pred − truth‖ / ‖truth‖` over all samples and joints.
pub fn relative_rmse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    let mut err = 0.0;
    let mut norm = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.iter().zip(t) {
            err += (a - b) * (a - b);
            norm += b * b;
        }
    }
    if norm == 0.0 {
        if err == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (err / norm).sqrt()
    }
}

/// Relative RMSE of each learned component on the held-out characters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentErrors {
    pub seed: u64,
    pub inertial: f64,
    pub coriolis: f64,
    pub gravity: f64,
    pub test_mse: f64,
}

/// One joint of one sample of a written component series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentPoint {
    pub seed: u64,
    pub character: String,
    pub held_out: bool,
    pub t: f64,
    pub joint: usize,
    pub tau: f64,
    pub inertial_true: f64,
    pub inertial_learned: f64,
    pub coriolis_true: f64,
    pub coriolis_learned: f64,
    pub gravity_true: f64,
    pub gravity_learned: f64,
}

#[derive(Clone, Debug)]
pub struct DecompositionOutcome {
    pub errors: Vec<ComponentErrors>,
    pub series: Vec<ComponentPoint>,
    pub models: Vec<(u64, DelanParams)>,
}

impl DecompositionOutcome {
    /// Seed-averaged `(inertial, coriolis, gravity)` relative RMSE.
    pub fn mean_errors(&self) -> Option<[f64; 3]> {
        let pick = |f: fn(&ComponentErrors) -> f64| mean(&self.errors.iter().map(f).collect::<Vec<_>>());
        Some([pick(|e| e.inertial)?, pick(|e| e.coriolis)?, pick(|e| e.gravity)?])
    }
}

struct Split {
    learned: [Vec<Vec<f64>>; 3],
    truth: [Vec<Vec<f64>>; 3],
}

fn components(params: &DelanParams, samples: &[DynSample], plant: &oracle::RobotParams) -> Result<Split> {
    let mut out = Split {
        learned: Default::default(),
        truth: Default::default(),
    };
    for s in samples {
        let c = decompose(params, &s.state)?;
        let (i, cc, g) = oracle::torque_components(plant, &s.state);
        out.learned[0].push(c.inertial);
        out.learned[1].push(c.coriolis);
        out.learned[2].push(c.gravity);
        out.truth[0].push(i);
        out.truth[1].push(cc);
        out.truth[2].push(g);
    }
    Ok(out)
}

/// Trains one DeLaN per seed on `n_train` characters and compares its torque
/// components with the plant's on the remaining ones.
pub fn run_decomposition(cfg: &ExperimentConfig) -> Result<DecompositionOutcome> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::Decompose {
        return Err(Error::InvalidArgument(format!("{} is not a decomposition", cfg.kind)));
    }
    let pool = character_pool(cfg)?;
    let labelled = pool
        .iter()
        .map(|c| oracle_labels(&cfg.plant, &c.trajectory))
        .collect::<Result<Vec<_>>>()?;
    let n_train = cfg.n_train[0];
    let mut outcome = DecompositionOutcome {
        errors: Vec::new(),
        series: Vec::new(),
        models: Vec::new(),
    };
    for &seed in &cfg.seeds {
        let (train_idx, test_idx) = split_characters(pool.len(), n_train, seed)?;
        let train: Vec<DynSample> = train_idx.iter().flat_map(|&i| labelled[i].iter().cloned()).collect();
        let test: Vec<DynSample> = test_idx.iter().flat_map(|&i| labelled[i].iter().cloned()).collect();
        let TrainedModel::Delan(params) = fit_offline(ModelKind::Delan, cfg, &train, seed)? else {
            unreachable!("fit_offline returns the requested kind")
        };
        if !test.is_empty() {
            let split = components(&params, &test, &cfg.plant)?;
            let rel = |k: usize| relative_rmse(&split.learned[k], &split.truth[k]);
            outcome.errors.push(ComponentErrors {
                seed,
                inertial: rel(0),
                coriolis: rel(1),
                gravity: rel(2),
                test_mse: super::model_mse(&params, &test)?,
            });
        }
        for name in &cfg.series_characters {
            let Some(idx) = pool.iter().position(|c| &c.name == name) else { continue };
            let split = components(&params, &labelled[idx], &cfg.plant)?;
            for (k, s) in labelled[idx].iter().enumerate() {
                for j in 0..s.dof() {
                    outcome.series.push(ComponentPoint {
                        seed,
                        character: name.clone(),
                        held_out: test_idx.contains(&idx),
                        t: s.t,
                        joint: j + 1,
                        tau: s.tau[j],
                        inertial_true: split.truth[0][k][j],
                        inertial_learned: split.learned[0][k][j],
                        coriolis_true: split.truth[1][k][j],
                        coriolis_learned: split.learned[1][k][j],
                        gravity_true: split.truth[2][k][j],
                        gravity_learned: split.learned[2][k][j],
                    });
                }
            }
        }
        outcome.models.push((seed, params));
    }
    Ok(outcome)
}

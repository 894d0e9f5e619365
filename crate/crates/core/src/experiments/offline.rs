//! Offline training on oracle-labelled references: held-out characters,
//! velocity-scaled cosines and the training-noise sweep.

use serde::Serialize;

use super::{
    character_pool, fit_offline, linear_fit, mean, model_mse, oracle_labels, ExperimentConfig, ExperimentKind,
    TrainedModel,
};
use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::state::DynSample;
use crate::trajectories::{corrupt, cosine_trajectory, split_characters};

/// One trained model evaluated on its training and test data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OfflineRecord {
    pub model: ModelKind,
    /// Training trajectories used.
    pub n_train: usize,
    /// Velocity scale of the test data.
    pub velocity_scale: f64,
    /// Standard deviation of the training-data noise.
    pub sigma: f64,
    pub seed: u64,
    pub train_mse: f64,
    /// Empty when nothing is held out.
    pub test_mse: Option<f64>,
}

const NOISE_STREAM: u64 = 1 << 32;

fn concat(pool: &[Vec<DynSample>], idx: &[usize]) -> Vec<DynSample> {
    idx.iter().flat_map(|&i| pool[i].iter().cloned()).collect()
}

/// Runs an offline, offline-cosine or noise-sweep configuration.
pub fn run_offline(cfg: &ExperimentConfig) -> Result<Vec<OfflineRecord>> {
    run_offline_with(cfg, |_, _| Ok(()))
}

/// [`run_offline`], handing every trained model to `on_model` next to its
/// first record.
pub fn run_offline_with(
    cfg: &ExperimentConfig,
    mut on_model: impl FnMut(&OfflineRecord, &TrainedModel) -> Result<()>,
) -> Result<Vec<OfflineRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    match cfg.kind {
        ExperimentKind::OfflineCharacters | ExperimentKind::NoiseSweep => {
            let pool = character_pool(cfg)?
                .iter()
                .map(|c| oracle_labels(&cfg.plant, &c.trajectory))
                .collect::<Result<Vec<_>>>()?;
            let sigmas: &[f64] = if cfg.kind == ExperimentKind::NoiseSweep { &cfg.noise_sigmas } else { &[0.0] };
            for &seed in &cfg.seeds {
                for &n in &cfg.n_train {
                    let (train_idx, test_idx) = split_characters(pool.len(), n, seed)?;
                    let clean = concat(&pool, &train_idx);
                    let test = concat(&pool, &test_idx);
                    for &sigma in sigmas {
                        let train = corrupt(&clean, sigma, seed.wrapping_add(NOISE_STREAM))?;
                        for &kind in &cfg.models {
                            let model = fit_offline(kind, cfg, &train, seed)?;
                            let record = OfflineRecord {
                                model: kind,
                                n_train: n,
                                velocity_scale: 1.0,
                                sigma,
                                seed,
                                train_mse: model_mse(&model, &train)?,
                                test_mse: if test.is_empty() { None } else { Some(model_mse(&model, &test)?) },
                            };
                            on_model(&record, &model)?;
                            records.push(record);
                        }
                    }
                }
            }
        }
        ExperimentKind::OfflineCosine => {
            let train = oracle_labels(&cfg.plant, &cosine_trajectory(&cfg.cosine, 1.0, cfg.fd())?)?;
            let tests = cfg
                .velocity_scales
                .iter()
                .map(|&s| oracle_labels(&cfg.plant, &cosine_trajectory(&cfg.cosine, s, cfg.fd())?))
                .collect::<Result<Vec<_>>>()?;
            for &seed in &cfg.seeds {
                for &kind in &cfg.models {
                    let model = fit_offline(kind, cfg, &train, seed)?;
                    let train_mse = model_mse(&model, &train)?;
                    for (k, (&scale, test)) in cfg.velocity_scales.iter().zip(&tests).enumerate() {
                        let record = OfflineRecord {
                            model: kind,
                            n_train: 1,
                            velocity_scale: scale,
                            sigma: 0.0,
                            seed,
                            train_mse,
                            test_mse: Some(model_mse(&model, test)?),
                        };
                        if k == 0 {
                            on_model(&record, &model)?;
                        }
                        records.push(record);
                    }
                }
            }
        }
        other => return Err(Error::InvalidArgument(format!("{other} is not an offline experiment"))),
    }
    Ok(records)
}

/// Mean test MSE over seeds of the records of `model` accepted by `filter`.
pub fn mean_test_mse(records: &[OfflineRecord], model: ModelKind, filter: impl Fn(&OfflineRecord) -> bool) -> Option<f64> {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.model == model && filter(r))
        .filter_map(|r| r.test_mse)
        .collect();
    mean(&v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleEfficiency {
    pub n_train: usize,
    pub delan: f64,
    pub ffnn: f64,
    /// `ffnn − delan`: how much lower the DeLaN test error is.
    pub gap: f64,
}

/// Seed-averaged test MSE of both networks per training-set size.
pub fn sample_efficiency(records: &[OfflineRecord]) -> Vec<SampleEfficiency> {
    let mut sizes: Vec<usize> = records.iter().map(|r| r.n_train).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .filter_map(|n| {
            let delan = mean_test_mse(records, ModelKind::Delan, |r| r.n_train == n)?;
            let ffnn = mean_test_mse(records, ModelKind::Ffnn, |r| r.n_train == n)?;
            Some(SampleEfficiency {
                n_train: n,
                delan,
                ffnn,
                gap: ffnn - delan,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseSlope {
    pub model: ModelKind,
    /// Growth of the seed-averaged clean-test MSE per unit of σ².
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares slope of mean test MSE against σ² for every model present.
pub fn noise_slopes(records: &[OfflineRecord]) -> Vec<NoiseSlope> {
    let mut sigmas: Vec<f64> = records.iter().map(|r| r.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let mut models: Vec<ModelKind> = records.iter().map(|r| r.model).collect();
    models.sort_by_key(|m| m.name());
    models.dedup();
    models
        .into_iter()
        .filter_map(|model| {
            let (x, y): (Vec<f64>, Vec<f64>) = sigmas
                .iter()
                .filter_map(|&s| mean_test_mse(records, model, |r| r.sigma == s).map(|m| (s * s, m)))
                .unzip();
            let (slope, intercept) = linear_fit(&x, &y)?;
            Some(NoiseSlope { model, slope, intercept })
        })
        .collect()
}

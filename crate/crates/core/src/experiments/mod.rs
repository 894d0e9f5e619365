//! Experiment protocols: dataset construction, training runs and the
//! aggregate statistics the command-line tool reports.

mod config;
mod decompose;
mod offline;
mod tracking;
mod validation;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{si_fit, FfnnConfig, FfnnParams, SiModel};
use crate::error::{Error, Result};
use crate::model::{DelanLearner, FfnnLearner, InverseModel, Learner, ModelKind, OracleModel, ZeroModel};
use crate::model_io::ModelDocument;
use crate::network::{DelanConfig, DelanParams};
use crate::nn::Normalization;
use crate::oracle::{self, RobotParams};
use crate::state::{DynSample, JointState};
use crate::trajectories::{character_to_joint, synth_characters, DesiredTrajectory};

pub use config::{ExperimentConfig, ExperimentKind, NetworkSettings};
pub use decompose::{relative_rmse, run_decomposition, ComponentErrors, ComponentPoint, DecompositionOutcome};
pub use offline::{
    mean_test_mse, noise_slopes, run_offline, run_offline_with, sample_efficiency, NoiseSlope, OfflineRecord, SampleEfficiency,
};
pub use tracking::{
    run_tracking, run_tracking_logged, tracking_summary, EpisodeLog, EpisodeRecord, TrackingOutcome, TrackingRecord,
    TrackingSummary,
};
pub use validation::{
    check_dh_dq, check_dh_dt, check_loss_gradient, check_quadratic_dq, inference_benchmark, run_gradcheck,
    BenchmarkReport, CheckSummary, GradcheckOutcome, GradcheckSettings,
};

/// A named reference trajectory.
#[derive(Clone, Debug)]
pub struct NamedTrajectory {
    pub name: String,
    pub trajectory: DesiredTrajectory,
}

/// The character pool of `cfg` mapped into joint space at `fd`.
pub fn character_pool(cfg: &ExperimentConfig) -> Result<Vec<NamedTrajectory>> {
    synth_characters(cfg.character_count)?
        .strokes
        .iter()
        .map(|st| {
            Ok(NamedTrajectory {
                name: st.name.clone(),
                trajectory: character_to_joint(st, &cfg.characters, &cfg.plant, cfg.fd())?,
            })
        })
        .collect()
}

/// Reference states labelled with the exact torques of the plant.
pub fn oracle_labels(plant: &RobotParams, traj: &DesiredTrajectory) -> Result<Vec<DynSample>> {
    traj.label(|s| oracle::inverse_dynamics(plant, s))
}

/// Any model an experiment produces.
#[derive(Clone, Debug)]
pub enum TrainedModel {
    Delan(DelanParams),
    Ffnn(FfnnParams),
    Si(SiModel),
    Oracle(OracleModel),
    Pd(ZeroModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Delan(_) => ModelKind::Delan,
            TrainedModel::Ffnn(_) => ModelKind::Ffnn,
            TrainedModel::Si(_) => ModelKind::Si,
            TrainedModel::Oracle(_) => ModelKind::Oracle,
            TrainedModel::Pd(_) => ModelKind::Pd,
        }
    }

    /// Serializable form; the oracle and PD have no parameters to store.
    pub fn document(&self) -> Option<ModelDocument> {
        match self {
            TrainedModel::Delan(p) => Some(p.into()),
            TrainedModel::Ffnn(p) => Some(p.into()),
            TrainedModel::Si(m) => Some(m.into()),
            TrainedModel::Oracle(_) | TrainedModel::Pd(_) => None,
        }
    }

    fn as_model(&self) -> &dyn InverseModel {
        match self {
            TrainedModel::Delan(p) => p,
            TrainedModel::Ffnn(p) => p,
            TrainedModel::Si(m) => m,
            TrainedModel::Oracle(m) => m,
            TrainedModel::Pd(m) => m,
        }
    }
}

impl InverseModel for TrainedModel {
    fn dof(&self) -> usize {
        self.as_model().dof()
    }

    fn inverse_dynamics(&self, state: &JointState) -> Result<Vec<f64>> {
        self.as_model().inverse_dynamics(state)
    }
}

/// Mean squared torque error norm of `model` over `samples`.
pub fn model_mse(model: &dyn InverseModel, samples: &[DynSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for s in samples {
        let pred = model.inverse_dynamics(&s.state)?;
        total += pred.iter().zip(&s.tau).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / samples.len() as f64)
}

pub(crate) fn delan_config(net: &NetworkSettings, n: usize, data: &[DynSample]) -> Result<DelanConfig> {
    let mut cfg = DelanConfig::new(n).with_hidden(&net.hidden);
    cfg.activation = net.activation;
    cfg.diag_offset = net.diag_offset;
    if net.normalize_inputs && !data.is_empty() {
        cfg.normalization = Some(Normalization::fit(data.iter().map(|s| s.state.q.as_slice()))?);
    }
    Ok(cfg)
}

pub(crate) fn ffnn_config(net: &NetworkSettings, n: usize, data: &[DynSample]) -> Result<FfnnConfig> {
    let mut cfg = FfnnConfig::new(n).with_hidden(&net.hidden);
    cfg.activation = net.activation;
    if net.normalize_inputs && !data.is_empty() {
        let rows: Vec<Vec<f64>> = data
            .iter()
            .map(|s| s.state.q.iter().chain(&s.state.qdot).chain(&s.state.qddot).copied().collect())
            .collect();
        cfg.normalization = Some(Normalization::fit(rows.iter().map(Vec::as_slice))?);
    }
    Ok(cfg)
}

/// Mixed into the seed so batch sampling and weight initialization draw from
/// different streams.
const BATCH_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn train_learner<L: Learner>(learner: &mut L, net: &NetworkSettings, data: &[DynSample], seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ BATCH_STREAM);
    let mut batch = Vec::with_capacity(net.batch_size);
    for _ in 0..net.steps {
        batch.clear();
        batch.extend((0..net.batch_size).map(|_| data[rng.random_range(0..data.len())].clone()));
        learner.train_step(&batch, net.lr)?;
    }
    Ok(())
}

/// Trains (or builds) a model of `kind` on `data` with mini-batches drawn
/// uniformly with replacement.
pub fn fit_offline(kind: ModelKind, cfg: &ExperimentConfig, data: &[DynSample], seed: u64) -> Result<TrainedModel> {
    let n = oracle::DOF;
    if data.is_empty() && matches!(kind, ModelKind::Delan | ModelKind::Ffnn | ModelKind::Si) {
        return Err(Error::EmptyBatch);
    }
    let net = &cfg.network;
    Ok(match kind {
        ModelKind::Delan => {
            let params = DelanParams::init(delan_config(net, n, data)?, seed)?;
            let mut learner = DelanLearner::new(params, net.lambda, Default::default())?;
            train_learner(&mut learner, net, data, seed)?;
            TrainedModel::Delan(learner.params)
        }
        ModelKind::Ffnn => {
            let params = FfnnParams::init(ffnn_config(net, n, data)?, seed)?;
            let mut learner = FfnnLearner::new(params, net.lambda, Default::default())?;
            train_learner(&mut learner, net, data, seed)?;
            TrainedModel::Ffnn(learner.params)
        }
        ModelKind::Si => TrainedModel::Si(si_fit(&cfg.plant, data)?.model),
        ModelKind::Oracle => TrainedModel::Oracle(OracleModel(cfg.plant.clone())),
        ModelKind::Pd => TrainedModel::Pd(ZeroModel(n)),
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Least-squares line `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

//! Online learning in the control loop, then tracking of held-out or
//! velocity-scaled references with the final models.

use serde::Serialize;

use super::{
    character_pool, delan_config, ffnn_config, mean, median, ExperimentConfig, ExperimentKind, NamedTrajectory,
    TrainedModel,
};
use crate::baselines::FfnnParams;
use crate::control::{run_episode, run_online, LoopConfig, OnlineConfig, OnlineOutcome};
use crate::error::{Error, Result};
use crate::model::{DelanLearner, FfnnLearner, InverseModel, ModelKind, OracleModel, ZeroModel};
use crate::network::DelanParams;
use crate::oracle;
use crate::state::DynSample;
use crate::trajectories::{cosine_trajectory, split_characters};

/// Tracking of one evaluation reference by one final model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingRecord {
    pub model: ModelKind,
    pub trajectory: String,
    pub velocity_scale: f64,
    pub seed: u64,
    pub accumulated: f64,
    /// Timing-dependent, so kept out of serialized records.
    #[serde(skip_serializing)]
    pub realtime_violations: usize,
}

/// Tracking of one training episode while the model was learning.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub model: ModelKind,
    pub seed: u64,
    pub episode: usize,
    pub trajectory: String,
    pub accumulated: f64,
    #[serde(skip_serializing)]
    pub realtime_violations: usize,
}

/// Samples measured during one evaluation episode.
#[derive(Clone, Debug)]
pub struct EpisodeLog {
    pub model: ModelKind,
    pub seed: u64,
    pub trajectory: String,
    pub velocity_scale: f64,
    pub samples: Vec<DynSample>,
}

#[derive(Clone, Debug)]
pub struct TrackingOutcome {
    pub records: Vec<TrackingRecord>,
    pub episodes: Vec<EpisodeRecord>,
    /// Models whose training stopped early, with the reason.
    pub halted: Vec<(ModelKind, u64, String)>,
    pub models: Vec<(u64, TrainedModel)>,
    /// Only filled by [`run_tracking_logged`].
    pub logs: Vec<EpisodeLog>,
}

/// Offsets of the sensor-noise streams. Every evaluation episode of a seed
/// uses the same stream, whatever the model or reference.
const TRAIN_NOISE: u64 = 1 << 40;
const EVAL_NOISE: u64 = 2 << 40;

fn learn(
    kind: ModelKind,
    cfg: &ExperimentConfig,
    schedule: &[crate::trajectories::DesiredTrajectory],
    seed: u64,
) -> Result<(TrainedModel, Option<OnlineOutcome>)> {
    let n = oracle::DOF;
    let loop_cfg = LoopConfig {
        seed: seed.wrapping_add(TRAIN_NOISE),
        ..cfg.control.clone()
    };
    let online = OnlineConfig { seed, ..cfg.online.clone() };
    let net = &cfg.network;
    Ok(match kind {
        ModelKind::Delan => {
            let params = DelanParams::init(delan_config(net, n, &[])?, seed)?;
            let mut learner = DelanLearner::new(params, net.lambda, Default::default())?;
            let out = run_online(&cfg.plant, &mut learner, schedule, &cfg.gains, &loop_cfg, &online)?;
            (TrainedModel::Delan(learner.params), Some(out))
        }
        ModelKind::Ffnn => {
            let params = FfnnParams::init(ffnn_config(net, n, &[])?, seed)?;
            let mut learner = FfnnLearner::new(params, net.lambda, Default::default())?;
            let out = run_online(&cfg.plant, &mut learner, schedule, &cfg.gains, &loop_cfg, &online)?;
            (TrainedModel::Ffnn(learner.params), Some(out))
        }
        ModelKind::Oracle => (TrainedModel::Oracle(OracleModel(cfg.plant.clone())), None),
        ModelKind::Pd => (TrainedModel::Pd(ZeroModel(n)), None),
        ModelKind::Si => return Err(Error::Unsupported("online learning of the SI model".into())),
    })
}

struct Protocol {
    schedule: Vec<NamedTrajectory>,
    /// `(reference, velocity scale)`
    evaluation: Vec<(NamedTrajectory, f64)>,
}

fn protocol(cfg: &ExperimentConfig, pool: &[NamedTrajectory], seed: u64) -> Result<Protocol> {
    let (train, eval) = match cfg.kind {
        ExperimentKind::OnlineCharacters => {
            let (train_idx, test_idx) = split_characters(pool.len(), cfg.n_train[0], seed)?;
            let train: Vec<NamedTrajectory> = train_idx.iter().map(|&i| pool[i].clone()).collect();
            let eval = test_idx.iter().map(|&i| (pool[i].clone(), 1.0)).collect();
            (train, eval)
        }
        ExperimentKind::OnlineCosine => {
            let named = |s: f64| -> Result<NamedTrajectory> {
                Ok(NamedTrajectory {
                    name: "cosine".into(),
                    trajectory: cosine_trajectory(&cfg.cosine, s, cfg.fd())?,
                })
            };
            let eval = cfg
                .velocity_scales
                .iter()
                .map(|&s| Ok((named(s)?, s)))
                .collect::<Result<Vec<_>>>()?;
            (vec![named(1.0)?], eval)
        }
        other => return Err(Error::InvalidArgument(format!("{other} is not an online experiment"))),
    };
    let schedule = (0..cfg.repetitions).flat_map(|_| train.iter().cloned()).collect();
    Ok(Protocol {
        schedule,
        evaluation: eval,
    })
}

/// Runs an online-characters or online-cosine configuration.
pub fn run_tracking(cfg: &ExperimentConfig) -> Result<TrackingOutcome> {
    tracking(cfg, false)
}

/// [`run_tracking`], also keeping the samples of every evaluation episode.
pub fn run_tracking_logged(cfg: &ExperimentConfig) -> Result<TrackingOutcome> {
    tracking(cfg, true)
}

fn tracking(cfg: &ExperimentConfig, keep_logs: bool) -> Result<TrackingOutcome> {
    cfg.validate()?;
    let pool = if cfg.kind == ExperimentKind::OnlineCharacters { character_pool(cfg)? } else { Vec::new() };
    let mut out = TrackingOutcome {
        records: Vec::new(),
        episodes: Vec::new(),
        halted: Vec::new(),
        models: Vec::new(),
        logs: Vec::new(),
    };
    for &seed in &cfg.seeds {
        let plan = protocol(cfg, &pool, seed)?;
        let schedule: Vec<_> = plan.schedule.iter().map(|t| t.trajectory.clone()).collect();
        for &kind in &cfg.models {
            let (model, online) = learn(kind, cfg, &schedule, seed)?;
            if let Some(online) = online {
                for (e, (report, traj)) in online.reports.iter().zip(&plan.schedule).enumerate() {
                    out.episodes.push(EpisodeRecord {
                        model: kind,
                        seed,
                        episode: e,
                        trajectory: traj.name.clone(),
                        accumulated: report.accumulated,
                        realtime_violations: report.realtime_violations,
                    });
                }
                if let Some(reason) = online.training_halted {
                    out.halted.push((kind, seed, reason));
                }
            }
            let loop_cfg = LoopConfig {
                seed: seed.wrapping_add(EVAL_NOISE),
                ..cfg.control.clone()
            };
            for (traj, scale) in &plan.evaluation {
                let (report, samples) =
                    run_episode(&cfg.plant, &model as &dyn InverseModel, &traj.trajectory, &cfg.gains, &loop_cfg)?;
                if keep_logs {
                    out.logs.push(EpisodeLog {
                        model: kind,
                        seed,
                        trajectory: traj.name.clone(),
                        velocity_scale: *scale,
                        samples,
                    });
                }
                out.records.push(TrackingRecord {
                    model: kind,
                    trajectory: traj.name.clone(),
                    velocity_scale: *scale,
                    seed,
                    accumulated: report.accumulated,
                    realtime_violations: report.realtime_violations,
                });
            }
            out.models.push((seed, model));
        }
    }
    Ok(out)
}

/// Median and mean accumulated error of one model at one velocity scale,
/// over all seeds and evaluation references.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingSummary {
    pub model: ModelKind,
    pub velocity_scale: f64,
    pub median: f64,
    pub mean: f64,
    pub records: usize,
}

pub fn tracking_summary(records: &[TrackingRecord]) -> Vec<TrackingSummary> {
    let mut keys: Vec<(ModelKind, f64)> = records.iter().map(|r| (r.model, r.velocity_scale)).collect();
    keys.sort_by(|a, b| a.0.name().cmp(b.0.name()).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .filter_map(|(model, scale)| {
            let v: Vec<f64> = records
                .iter()
                .filter(|r| r.model == model && r.velocity_scale == scale)
                .map(|r| r.accumulated)
                .collect();
            Some(TrackingSummary {
                model,
                velocity_scale: scale,
                median: median(&v)?,
                mean: mean(&v)?,
                records: v.len(),
            })
        })
        .collect()
}

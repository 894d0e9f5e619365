//! PD control with model feed-forward on the simulated arm.
//!
//! The plant is integrated every `sim_dt`; the control law runs at
//! `control_rate` and holds its torque between ticks; the feed-forward torque
//! is evaluated once per reference sample, i.e. at `feedforward_rate`.
//! Measured samples are logged at every reference sample.

mod online;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::InverseModel;
use crate::oracle::{self, RobotParams};
use crate::state::{DynSample, JointState};
use crate::trajectories::DesiredTrajectory;

pub use online::{run_online, OnlineConfig, OnlineOutcome, SnapshotPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    /// N·m/rad
    pub kp: Vec<f64>,
    /// N·m·s/rad
    pub kd: Vec<f64>,
}

impl Gains {
    /// Low gains, so tracking quality depends on the feed-forward term.
    pub fn low(n: usize) -> Self {
        Self {
            kp: vec![5.0; n],
            kd: vec![0.5; n],
        }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            kp: vec![0.0; n],
            kd: vec![0.0; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.kp.len() != n || self.kd.len() != n {
            return Err(Error::Shape(format!("gains for {}/{} joints, plant has {n}", self.kp.len(), self.kd.len())));
        }
        if self.kp.iter().chain(&self.kd).any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidArgument("gains must be non-negative".into()));
        }
        Ok(())
    }
}

/// Which reference sample is active between two sample instants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceHold {
    /// The latest sample at or before the current time.
    ZeroOrder,
    /// The sample nearest in time; references are known ahead of time, so
    /// each one is applied from half a period before its instant.
    Centered,
    /// Linear interpolation between reference samples: the PD reference at
    /// the control instant, the feed-forward at the middle of the control
    /// period. Feed-forward is still evaluated once per reference sample.
    Interpolated,
}

/// How the logged `q̈` is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccelerationSource {
    /// Forward dynamics of the plant at the sample instant.
    Plant,
    /// Backward difference of the measured velocity over one sample period.
    Differenced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    /// Hz
    pub control_rate: f64,
    /// Hz; also the reference sample rate.
    pub feedforward_rate: f64,
    /// s
    pub sim_dt: f64,
    pub hold: ReferenceHold,
    pub acceleration: AccelerationSource,
    /// Standard deviation of additive noise on measured `q` and `q̇`.
    pub sensor_noise: f64,
    /// Symmetric clamp on the commanded torque.
    pub torque_limit: Option<f64>,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            control_rate: 500.0,
            feedforward_rate: 200.0,
            sim_dt: 1e-3,
            hold: ReferenceHold::Interpolated,
            acceleration: AccelerationSource::Plant,
            sensor_noise: 0.0,
            torque_limit: None,
            seed: 0,
        }
    }
}

fn ratio(a: f64, b: f64, what: &str) -> Result<usize> {
    let r = a / b;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::InvalidArgument(format!("{what} must be a whole multiple of the simulation step")));
    }
    Ok(k as usize)
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sim_dt > 0.0) || !(self.control_rate > 0.0) || !(self.feedforward_rate > 0.0) {
            return Err(Error::InvalidArgument("rates and simulation step must be positive".into()));
        }
        if self.control_rate < self.feedforward_rate {
            return Err(Error::InvalidArgument(format!(
                "control rate {} below feed-forward rate {}",
                self.control_rate, self.feedforward_rate
            )));
        }
        if self.sim_dt > 1.0 / self.control_rate + 1e-15 {
            return Err(Error::InvalidArgument("simulation step longer than the control period".into()));
        }
        if !(self.sensor_noise >= 0.0) || self.torque_limit.is_some_and(|l| !(l > 0.0)) {
            return Err(Error::InvalidArgument("sensor noise must be ≥ 0 and torque limits > 0".into()));
        }
        ratio(1.0 / self.control_rate, self.sim_dt, "the control period")?;
        ratio(1.0 / self.feedforward_rate, self.sim_dt, "the reference period")?;
        Ok(())
    }

    /// Inference budget per feed-forward evaluation (s).
    pub fn budget(&self) -> f64 {
        1.0 / self.feedforward_rate
    }
}

/// `τ = Kp (q_d − q) + Kd (q̇_d − q̇) + τ_ff`.
pub fn control_law(q: &[f64], qdot: &[f64], q_d: &[f64], qd_d: &[f64], tau_ff: &[f64], gains: &Gains) -> Vec<f64> {
    (0..q.len())
        .map(|i| gains.kp[i] * (q_d[i] - q[i]) + gains.kd[i] * (qd_d[i] - qdot[i]) + tau_ff[i])
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub per_joint_mse: Vec<f64>,
    /// Sum of `per_joint_mse`.
    pub accumulated: f64,
    /// Squared position error summed over joints, per reference sample.
    pub per_point_errors: Vec<f64>,
    /// Feed-forward evaluations slower than `1/feedforward_rate`.
    pub realtime_violations: usize,
}

/// Tracking metric of executed positions against the reference samples.
pub fn tracking_mse(executed: &[Vec<f64>], desired: &DesiredTrajectory) -> Result<TrackingReport> {
    if executed.len() != desired.len() {
        return Err(Error::Shape(format!(
            "{} executed samples for {} reference samples",
            executed.len(),
            desired.len()
        )));
    }
    if executed.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = desired.dof();
    let mut per_joint = vec![0.0; n];
    let mut per_point = Vec::with_capacity(executed.len());
    for (q, d) in executed.iter().zip(&desired.points) {
        if q.len() != n {
            return Err(Error::Shape(format!("executed state has {} joints, reference {n}", q.len())));
        }
        let mut point = 0.0;
        for j in 0..n {
            let e = (q[j] - d.q[j]).powi(2);
            per_joint[j] += e;
            point += e;
        }
        per_point.push(point);
    }
    let count = executed.len() as f64;
    per_joint.iter_mut().for_each(|v| *v /= count);
    Ok(TrackingReport {
        accumulated: per_joint.iter().sum(),
        per_joint_mse: per_joint,
        per_point_errors: per_point,
        realtime_violations: 0,
    })
}

/// Callbacks of the episode loop: where feed-forward comes from and where
/// logged samples go.
pub(crate) trait EpisodeHooks {
    fn feedforward(&mut self, desired: &JointState) -> Result<Vec<f64>>;

    fn on_sample(&mut self, _sample: &DynSample) -> Result<()> {
        Ok(())
    }
}

struct ModelHooks<'a, M: InverseModel + ?Sized>(&'a M);

impl<M: InverseModel + ?Sized> EpisodeHooks for ModelHooks<'_, M> {
    fn feedforward(&mut self, desired: &JointState) -> Result<Vec<f64>> {
        self.0.inverse_dynamics(desired)
    }
}

/// Runs one trajectory with a fixed model; returns the tracking report and
/// the samples measured at every reference instant.
pub fn run_episode<M: InverseModel + ?Sized>(
    plant: &RobotParams,
    model: &M,
    traj: &DesiredTrajectory,
    gains: &Gains,
    cfg: &LoopConfig,
) -> Result<(TrackingReport, Vec<DynSample>)> {
    execute(plant, traj, gains, cfg, &mut ModelHooks(model))
}

/// Feed-forward torques of the most recent reference samples, each
/// evaluated (and timed) once.
struct FeedforwardCache<'a> {
    traj: &'a DesiredTrajectory,
    n: usize,
    budget: f64,
    slots: Vec<(usize, Vec<f64>)>,
    violations: usize,
}

impl FeedforwardCache<'_> {
    fn value(&mut self, idx: usize, hooks: &mut dyn EpisodeHooks) -> Result<&[f64]> {
        if let Some(pos) = self.slots.iter().position(|(k, _)| *k == idx) {
            return Ok(&self.slots[pos].1);
        }
        let clock = Instant::now();
        let value = hooks.feedforward(&self.traj.points[idx])?;
        if clock.elapsed().as_secs_f64() > self.budget {
            self.violations += 1;
        }
        if value.len() != self.n {
            return Err(Error::Shape(format!("feed-forward torque has {} entries", value.len())));
        }
        if self.slots.len() == 2 {
            self.slots.remove(0);
        }
        self.slots.push((idx, value));
        Ok(&self.slots.last().expect("just pushed").1)
    }
}

/// Sample index at or before `x` (in sample periods) and the fraction past it.
fn bracket(x: f64, last: usize) -> (usize, f64) {
    let k = (x.floor().max(0.0) as usize).min(last);
    (k, (x - k as f64).clamp(0.0, 1.0))
}

fn lerp(a: &[f64], b: &[f64], w: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
}

pub(crate) fn execute(
    plant: &RobotParams,
    traj: &DesiredTrajectory,
    gains: &Gains,
    cfg: &LoopConfig,
    hooks: &mut dyn EpisodeHooks,
) -> Result<(TrackingReport, Vec<DynSample>)> {
    cfg.validate()?;
    plant.validate()?;
    let n = oracle::DOF;
    if traj.dof() != n || traj.is_empty() {
        return Err(Error::Shape(format!("trajectory has {} dof, plant has {n}", traj.dof())));
    }
    gains.validate(n)?;
    if (traj.dt * cfg.feedforward_rate - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "trajectory sampled every {} s, feed-forward runs at {} Hz",
            traj.dt, cfg.feedforward_rate
        )));
    }
    let per_control = ratio(1.0 / cfg.control_rate, cfg.sim_dt, "the control period")?;
    let per_sample = ratio(traj.dt, cfg.sim_dt, "the reference period")?;
    let last = traj.len() - 1;
    let total_steps = last * per_sample;
    let noise = (cfg.sensor_noise > 0.0).then(|| Normal::new(0.0, cfg.sensor_noise).expect("valid noise level"));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let start = &traj.points[0];
    let mut q = start.q.clone();
    let mut qdot = start.qdot.clone();
    let mut tau = vec![0.0; n];
    let mut ff = FeedforwardCache {
        traj,
        n,
        budget: cfg.budget(),
        slots: Vec::with_capacity(2),
        violations: 0,
    };
    let mut executed = Vec::with_capacity(traj.len());
    let mut samples = Vec::with_capacity(traj.len());
    let mut prev_measured_qdot: Option<Vec<f64>> = None;
    let mut measured = (q.clone(), qdot.clone());

    for step in 0..=total_steps {
        let on_control = step % per_control == 0;
        let on_sample = step % per_sample == 0;
        if on_control || on_sample {
            measured = match &noise {
                Some(d) => (
                    q.iter().map(|v| v + d.sample(&mut rng)).collect(),
                    qdot.iter().map(|v| v + d.sample(&mut rng)).collect(),
                ),
                None => (q.clone(), qdot.clone()),
            };
        }
        if on_control {
            let t = step as f64 * cfg.sim_dt;
            let (tau_ff, q_d, qd_d) = match cfg.hold {
                ReferenceHold::ZeroOrder | ReferenceHold::Centered => {
                    let idx = match cfg.hold {
                        ReferenceHold::ZeroOrder => step / per_sample,
                        _ => (step + per_sample / 2) / per_sample,
                    }
                    .min(last);
                    let d = &traj.points[idx];
                    (ff.value(idx, hooks)?.to_vec(), d.q.clone(), d.qdot.clone())
                }
                ReferenceHold::Interpolated => {
                    let tm = t + 0.5 * per_control as f64 * cfg.sim_dt;
                    let (k, w) = bracket(tm / traj.dt, last);
                    let a = ff.value(k, hooks)?.to_vec();
                    let b = ff.value((k + 1).min(last), hooks)?;
                    let tau_ff = lerp(&a, b, w);
                    let (k, w) = bracket(t / traj.dt, last);
                    let (da, db) = (&traj.points[k], &traj.points[(k + 1).min(last)]);
                    (tau_ff, lerp(&da.q, &db.q, w), lerp(&da.qdot, &db.qdot, w))
                }
            };
            tau = control_law(&measured.0, &measured.1, &q_d, &qd_d, &tau_ff, gains);
            if let Some(limit) = cfg.torque_limit {
                tau.iter_mut().for_each(|t| *t = t.clamp(-limit, limit));
            }
            if tau.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFinite(format!("commanded torque at t = {}", step as f64 * cfg.sim_dt)));
            }
        }
        if on_sample {
            let k = step / per_sample;
            executed.push(q.clone());
            let qddot = match cfg.acceleration {
                AccelerationSource::Plant => oracle::forward_dynamics(plant, &q, &qdot, &tau),
                AccelerationSource::Differenced => match &prev_measured_qdot {
                    Some(prev) => measured.1.iter().zip(prev).map(|(a, b)| (a - b) / traj.dt).collect(),
                    None => vec![0.0; n],
                },
            };
            prev_measured_qdot = Some(measured.1.clone());
            let sample = DynSample::new(k as f64 * traj.dt, JointState::new(measured.0.clone(), measured.1.clone(), qddot)?, tau.clone())?;
            hooks.on_sample(&sample)?;
            samples.push(sample);
        }
        if step < total_steps {
            let (qn, vn) = oracle::step(plant, &q, &qdot, &tau, cfg.sim_dt)?;
            q = qn;
            qdot = vn;
        }
    }
    let mut report = tracking_mse(&executed, traj)?;
    report.realtime_violations = ff.violations;
    Ok((report, samples))
}

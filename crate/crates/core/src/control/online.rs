//! Episodes interleaved with training of the feed-forward model.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam::queue::ArrayQueue;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{execute, EpisodeHooks, Gains, LoopConfig, TrackingReport};
use crate::error::{Error, Result};
use crate::model::{InverseModel, Learner};
use crate::oracle::RobotParams;
use crate::state::{DynSample, JointState};
use crate::trajectories::DesiredTrajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotPolicy {
    /// Training runs inline between control ticks; fully deterministic.
    Synchronous,
    /// A worker thread trains on streamed samples and publishes snapshots.
    Asynchronous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnlineConfig {
    pub policy: SnapshotPolicy,
    pub lr: f64,
    pub batch_size: usize,
    /// Synchronous: optimizer steps run after every `train_every` samples.
    pub steps_per_update: usize,
    pub train_every: usize,
    /// Extra synchronous steps after each episode.
    pub steps_after_episode: usize,
    /// Most recent samples kept for replay.
    pub buffer_capacity: usize,
    /// Samples required before the first step.
    pub warmup: usize,
    /// Optimizer steps before the learner's feed-forward is used; until
    /// then the loop runs on PD alone.
    pub feedforward_after: u64,
    /// Asynchronous: bounded sample queue, oldest dropped on overflow.
    pub queue_capacity: usize,
    /// Asynchronous: optimizer steps between published snapshots.
    pub publish_every: usize,
    /// Asynchronous: pace the simulation to wall-clock time.
    pub realtime: bool,
    pub seed: u64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            policy: SnapshotPolicy::Synchronous,
            lr: 1e-3,
            batch_size: 64,
            steps_per_update: 1,
            train_every: 1,
            steps_after_episode: 0,
            buffer_capacity: 100_000,
            warmup: 64,
            feedforward_after: 0,
            queue_capacity: 4096,
            publish_every: 10,
            realtime: false,
            seed: 0,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || self.batch_size == 0 || self.train_every == 0 || self.buffer_capacity == 0 {
            return Err(Error::InvalidArgument(
                "online training needs lr ≥ 0 and positive batch size, cadence and buffer".into(),
            ));
        }
        if self.queue_capacity == 0 || self.publish_every == 0 {
            return Err(Error::InvalidArgument("queue capacity and publish cadence must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OnlineOutcome {
    pub reports: Vec<TrackingReport>,
    pub train_steps: u64,
    pub snapshots_published: u64,
    /// Samples lost to queue overflow (asynchronous only).
    pub dropped_samples: u64,
    /// Why training stopped early, if it did.
    pub training_halted: Option<String>,
    /// Loss of the last optimizer step.
    pub last_loss: Option<f64>,
}

struct Replay {
    data: VecDeque<DynSample>,
    capacity: usize,
}

impl Replay {
    fn new(capacity: usize) -> Self {
        Self {
            data: VecDeque::new(),
            capacity,
        }
    }

    fn push(&mut self, s: DynSample) {
        if self.data.len() == self.capacity {
            self.data.pop_front();
        }
        self.data.push_back(s);
    }

    fn len(&self) -> usize {
        self.data.len()
    }

    fn batch(&self, size: usize, rng: &mut ChaCha8Rng) -> Vec<DynSample> {
        (0..size)
            .map(|_| self.data[rng.random_range(0..self.data.len())].clone())
            .collect()
    }
}

struct Trainer<'a, L: Learner> {
    learner: &'a mut L,
    replay: Replay,
    rng: ChaCha8Rng,
    cfg: &'a OnlineConfig,
    steps: u64,
    halted: Option<String>,
    last_loss: Option<f64>,
}

impl<L: Learner> Trainer<'_, L> {
    fn feedforward_ready(&self) -> bool {
        self.steps >= self.cfg.feedforward_after
    }

    fn current(&self) -> Option<L::Snapshot> {
        self.feedforward_ready().then(|| self.learner.snapshot())
    }

    /// Runs up to `steps` optimizer steps; returns whether any ran.
    fn train(&mut self, steps: usize) -> bool {
        if self.halted.is_some() || self.replay.len() < self.cfg.warmup.max(1) || steps == 0 {
            return false;
        }
        for _ in 0..steps {
            let batch = self.replay.batch(self.cfg.batch_size, &mut self.rng);
            match self.learner.train_step(&batch, self.cfg.lr) {
                Ok(loss) => {
                    self.steps += 1;
                    self.last_loss = Some(loss);
                }
                Err(e) => {
                    self.halted = Some(e.to_string());
                    break;
                }
            }
        }
        true
    }
}

struct SyncHooks<'t, 'a, L: Learner> {
    trainer: &'t mut Trainer<'a, L>,
    snapshot: Option<L::Snapshot>,
    since_update: usize,
    published: u64,
}

impl<L: Learner> EpisodeHooks for SyncHooks<'_, '_, L> {
    fn feedforward(&mut self, desired: &JointState) -> Result<Vec<f64>> {
        match &self.snapshot {
            Some(m) => m.inverse_dynamics(desired),
            None => Ok(vec![0.0; desired.dof()]),
        }
    }

    fn on_sample(&mut self, sample: &DynSample) -> Result<()> {
        self.trainer.replay.push(sample.clone());
        self.since_update += 1;
        if self.since_update >= self.trainer.cfg.train_every {
            self.since_update = 0;
            if self.trainer.train(self.trainer.cfg.steps_per_update) && self.trainer.feedforward_ready() {
                self.snapshot = Some(self.trainer.learner.snapshot());
                self.published += 1;
            }
        }
        Ok(())
    }
}

struct AsyncHooks<'a, S> {
    slot: &'a RwLock<Option<Arc<S>>>,
    queue: &'a ArrayQueue<DynSample>,
    dropped: &'a AtomicU64,
    pace: Option<(Instant, f64)>,
    tick: u64,
}

impl<S: InverseModel> EpisodeHooks for AsyncHooks<'_, S> {
    fn feedforward(&mut self, desired: &JointState) -> Result<Vec<f64>> {
        // one snapshot per evaluation; the lock only guards the pointer swap
        let model = self.slot.read().map_err(|_| Error::Invariant("snapshot slot poisoned".into()))?.clone();
        match model {
            Some(m) => m.inverse_dynamics(desired),
            None => Ok(vec![0.0; desired.dof()]),
        }
    }

    fn on_sample(&mut self, sample: &DynSample) -> Result<()> {
        if self.queue.force_push(sample.clone()).is_some() {
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        self.tick += 1;
        if let Some((start, dt)) = self.pace {
            let due = start + Duration::from_secs_f64(self.tick as f64 * dt);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        Ok(())
    }
}

/// Executes `schedule` in order while training `learner` on the measured
/// samples. With zero optimizer steps this reduces to [`super::run_episode`]
/// with the initial model.
pub fn run_online<L: Learner>(
    plant: &RobotParams,
    learner: &mut L,
    schedule: &[DesiredTrajectory],
    gains: &Gains,
    cfg: &LoopConfig,
    online: &OnlineConfig,
) -> Result<OnlineOutcome>
where
    L::Snapshot: Send + Sync,
{
    online.validate()?;
    let mut trainer = Trainer {
        learner,
        replay: Replay::new(online.buffer_capacity),
        rng: ChaCha8Rng::seed_from_u64(online.seed),
        cfg: online,
        steps: 0,
        halted: None,
        last_loss: None,
    };
    match online.policy {
        SnapshotPolicy::Synchronous => {
            let mut reports = Vec::with_capacity(schedule.len());
            let mut published = 0;
            for (e, traj) in schedule.iter().enumerate() {
                let episode_cfg = LoopConfig {
                    seed: cfg.seed.wrapping_add(e as u64),
                    ..cfg.clone()
                };
                let snapshot = trainer.current();
                let mut hooks = SyncHooks {
                    trainer: &mut trainer,
                    snapshot,
                    since_update: 0,
                    published: 0,
                };
                let (report, _) = execute(plant, traj, gains, &episode_cfg, &mut hooks)?;
                published += hooks.published;
                reports.push(report);
                trainer.train(online.steps_after_episode);
            }
            Ok(OnlineOutcome {
                reports,
                train_steps: trainer.steps,
                snapshots_published: published,
                dropped_samples: 0,
                training_halted: trainer.halted,
                last_loss: trainer.last_loss,
            })
        }
        SnapshotPolicy::Asynchronous => run_async(plant, trainer, schedule, gains, cfg, online),
    }
}

fn run_async<L: Learner>(
    plant: &RobotParams,
    mut trainer: Trainer<'_, L>,
    schedule: &[DesiredTrajectory],
    gains: &Gains,
    cfg: &LoopConfig,
    online: &OnlineConfig,
) -> Result<OnlineOutcome>
where
    L::Snapshot: Send + Sync,
{
    let queue = ArrayQueue::new(online.queue_capacity);
    let slot = RwLock::new(trainer.current().map(Arc::new));
    let stop = AtomicBool::new(false);
    let dropped = AtomicU64::new(0);
    let published = AtomicU64::new(0);

    let (reports, trainer) = thread::scope(|scope| {
        let worker = scope.spawn(|| {
            let mut since_publish = 0;
            loop {
                let mut fresh = false;
                while let Some(s) = queue.pop() {
                    trainer.replay.push(s);
                    fresh = true;
                }
                let finished = stop.load(Ordering::Acquire);
                if finished && queue.is_empty() {
                    break;
                }
                if trainer.train(1) {
                    since_publish += 1;
                    if since_publish >= online.publish_every && trainer.feedforward_ready() {
                        since_publish = 0;
                        if let Ok(mut guard) = slot.write() {
                            *guard = Some(Arc::new(trainer.learner.snapshot()));
                            published.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                } else if !fresh {
                    thread::sleep(Duration::from_micros(200));
                }
            }
            trainer
        });
        let mut reports = Vec::with_capacity(schedule.len());
        let mut result = Ok(());
        for (e, traj) in schedule.iter().enumerate() {
            let episode_cfg = LoopConfig {
                seed: cfg.seed.wrapping_add(e as u64),
                ..cfg.clone()
            };
            let mut hooks = AsyncHooks {
                slot: &slot,
                queue: &queue,
                dropped: &dropped,
                pace: online.realtime.then(|| (Instant::now(), traj.dt)),
                tick: 0,
            };
            match execute(plant, traj, gains, &episode_cfg, &mut hooks) {
                Ok((report, _)) => reports.push(report),
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        stop.store(true, Ordering::Release);
        let trainer = worker.join().expect("trainer thread panicked");
        result.map(|_| (reports, trainer))
    })?;
    Ok(OnlineOutcome {
        reports,
        train_steps: trainer.steps,
        snapshots_published: published.into_inner(),
        dropped_samples: dropped.into_inner(),
        training_halted: trainer.halted,
        last_loss: trainer.last_loss,
    })
}

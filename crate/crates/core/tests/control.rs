use std::thread::sleep;
use std::time::Duration;

use delan::control::{
    run_episode, run_online, tracking_mse, Gains, LoopConfig, OnlineConfig, ReferenceHold, SnapshotPolicy,
};
use delan::model::{DelanLearner, InverseModel, OracleModel, ZeroModel};
use delan::network::{DelanConfig, DelanParams};
use delan::oracle::RobotParams;
use delan::state::JointState;
use delan::trajectories::{cosine_trajectory, CosineSpec, DesiredTrajectory};

fn short_cosine(duration: f64, scale: f64) -> DesiredTrajectory {
    let spec = CosineSpec {
        duration,
        ..CosineSpec::default()
    };
    cosine_trajectory(&spec, scale, 200.0).unwrap()
}

#[test]
fn metric_examples() {
    let traj = short_cosine(0.5, 1.0);
    let same: Vec<Vec<f64>> = traj.points.iter().map(|p| p.q.clone()).collect();
    let r = tracking_mse(&same, &traj).unwrap();
    assert_eq!(r.accumulated, 0.0);
    let shifted: Vec<Vec<f64>> = traj.points.iter().map(|p| vec![p.q[0] + 0.1, p.q[1]]).collect();
    let r = tracking_mse(&shifted, &traj).unwrap();
    assert!((r.per_joint_mse[0] - 0.01).abs() < 1e-15 && r.per_joint_mse[1] == 0.0);
    assert!(tracking_mse(&same[1..], &traj).is_err());
}

#[test]
fn exact_feedforward_tracks_far_better_than_pd() {
    let plant = RobotParams::default();
    let traj = short_cosine(4.0, 1.0);
    let cfg = LoopConfig::default();
    let gains = Gains::low(2);
    let (oracle, samples) = run_episode(&plant, &OracleModel(plant.clone()), &traj, &gains, &cfg).unwrap();
    let (pd, _) = run_episode(&plant, &ZeroModel(2), &traj, &gains, &cfg).unwrap();
    assert!(oracle.accumulated < 1e-6, "oracle {:e}", oracle.accumulated);
    assert!(pd.accumulated > 1e3 * oracle.accumulated, "PD {:e}", pd.accumulated);
    assert_eq!(samples.len(), traj.len());
}

#[test]
fn interpolated_hold_beats_sample_and_hold() {
    let plant = RobotParams::default();
    let traj = short_cosine(4.0, 2.0);
    let model = OracleModel(plant.clone());
    let run = |hold| {
        let cfg = LoopConfig {
            hold,
            ..LoopConfig::default()
        };
        run_episode(&plant, &model, &traj, &Gains::low(2), &cfg).unwrap().0.accumulated
    };
    let zoh = run(ReferenceHold::ZeroOrder);
    let centered = run(ReferenceHold::Centered);
    let interpolated = run(ReferenceHold::Interpolated);
    assert!(interpolated < centered && centered < zoh, "{interpolated:e} {centered:e} {zoh:e}");
}

#[test]
fn sensor_noise_is_seeded() {
    let plant = RobotParams::default();
    let traj = short_cosine(1.0, 1.0);
    let model = OracleModel(plant.clone());
    let run = |seed| {
        let cfg = LoopConfig {
            sensor_noise: 1e-3,
            seed,
            ..LoopConfig::default()
        };
        run_episode(&plant, &model, &traj, &Gains::low(2), &cfg).unwrap().0.accumulated
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

struct Slow(Duration);

impl InverseModel for Slow {
    fn dof(&self) -> usize {
        2
    }

    fn inverse_dynamics(&self, _state: &JointState) -> delan::Result<Vec<f64>> {
        sleep(self.0);
        Ok(vec![0.0, 0.0])
    }
}

#[test]
fn slow_inference_is_reported_as_realtime_violations() {
    let plant = RobotParams::default();
    let traj = short_cosine(0.05, 1.0);
    let cfg = LoopConfig::default();
    let (slow, _) = run_episode(&plant, &Slow(Duration::from_millis(6)), &traj, &Gains::low(2), &cfg).unwrap();
    assert!(slow.realtime_violations >= traj.len() - 1, "{} of {}", slow.realtime_violations, traj.len());
    let (fast, _) = run_episode(&plant, &ZeroModel(2), &traj, &Gains::low(2), &cfg).unwrap();
    assert_eq!(fast.realtime_violations, 0);
}

#[test]
fn invalid_loop_settings_are_rejected() {
    let plant = RobotParams::default();
    let traj = short_cosine(0.1, 1.0);
    for cfg in [
        LoopConfig {
            control_rate: 100.0,
            ..LoopConfig::default()
        },
        LoopConfig {
            sim_dt: 3e-4,
            ..LoopConfig::default()
        },
        LoopConfig {
            sensor_noise: -1.0,
            ..LoopConfig::default()
        },
    ] {
        assert!(run_episode(&plant, &ZeroModel(2), &traj, &Gains::low(2), &cfg).is_err(), "{cfg:?}");
    }
}

fn learner(seed: u64) -> DelanLearner {
    let params = DelanParams::init(DelanConfig::new(2).with_hidden(&[32, 32]), seed).unwrap();
    DelanLearner::new(params, 1e-4, Default::default()).unwrap()
}

#[test]
fn synchronous_online_learning_is_reproducible_and_improves() {
    let plant = RobotParams::default();
    let schedule = vec![short_cosine(2.0, 1.0); 6];
    let online = OnlineConfig {
        steps_per_update: 2,
        feedforward_after: 100,
        ..OnlineConfig::default()
    };
    let cfg = LoopConfig::default();
    let run = || {
        let mut l = learner(3);
        run_online(&plant, &mut l, &schedule, &Gains::low(2), &cfg, &online).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.reports, b.reports);
    assert!(a.train_steps > 1000);
    assert!(a.training_halted.is_none());
    let first = a.reports[0].accumulated;
    let last = a.reports.last().unwrap().accumulated;
    assert!(last < 0.2 * first, "first {first:e}, last {last:e}");
}

#[test]
fn asynchronous_online_learning_publishes_snapshots() {
    let plant = RobotParams::default();
    let schedule = vec![short_cosine(1.0, 1.0); 3];
    let online = OnlineConfig {
        policy: SnapshotPolicy::Asynchronous,
        publish_every: 5,
        ..OnlineConfig::default()
    };
    let mut l = learner(1);
    let out = run_online(&plant, &mut l, &schedule, &Gains::low(2), &LoopConfig::default(), &online).unwrap();
    assert_eq!(out.reports.len(), 3);
    assert!(out.train_steps > 0);
    assert!(out.snapshots_published > 0);
}

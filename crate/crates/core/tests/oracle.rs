use delan::baselines::{beta_true, si_features};
use delan::oracle::{self, RobotParams};
use delan::state::JointState;
use delan::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plants() -> Vec<RobotParams> {
    vec![
        RobotParams::default(),
        RobotParams::thin_rods(2.0, 0.7, 0.6, 0.4, 9.81),
        RobotParams::point_masses(1.5, 0.5, 0.3, 0.8, 3.0),
    ]
}

fn random_state(rng: &mut ChaCha8Rng) -> JointState {
    let mut v = |a: f64| (0..2).map(|_| rng.random_range(-a..a)).collect::<Vec<f64>>();
    JointState::new(v(3.1), v(3.0), v(8.0)).unwrap()
}

fn total_energy(p: &RobotParams, q: &[f64], qdot: &[f64]) -> f64 {
    let (t, v) = oracle::energy(p, q, qdot);
    t + v
}

fn simulate(p: &RobotParams, q: &[f64], qdot: &[f64], tau: &[f64], dt: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut q, mut v) = (q.to_vec(), qdot.to_vec());
    for _ in 0..steps {
        (q, v) = oracle::step(p, &q, &v, tau, dt).unwrap();
    }
    (q, v)
}

#[test]
fn energy_is_conserved_without_torque() {
    for p in plants() {
        let (q0, v0) = (vec![1.2, -0.7], vec![0.5, 1.5]);
        let e0 = total_energy(&p, &q0, &v0);
        let (mut q, mut v) = (q0, v0);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            (q, v) = oracle::step(&p, &q, &v, &[0.0, 0.0], 1e-3).unwrap();
            worst = worst.max((total_energy(&p, &q, &v) - e0).abs() / e0.abs());
        }
        assert!(worst < 1e-6, "relative drift {worst:e}");
    }
}

#[test]
fn power_balance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in plants() {
        for _ in 0..200 {
            let s = random_state(&mut rng);
            let tau: Vec<f64> = (0..2).map(|_| rng.random_range(-10.0..10.0)).collect();
            let qddot = oracle::forward_dynamics(&p, &s.q, &s.qdot, &tau);
            // energy differenced along the exact flow direction
            let h = 1e-6;
            let along = |sign: f64| {
                let q: Vec<f64> = (0..2).map(|i| s.q[i] + sign * h * s.qdot[i]).collect();
                let v: Vec<f64> = (0..2).map(|i| s.qdot[i] + sign * h * qddot[i]).collect();
                total_energy(&p, &q, &v)
            };
            let de_dt = (along(1.0) - along(-1.0)) / (2.0 * h);
            let power: f64 = tau.iter().zip(&s.qdot).map(|(a, b)| a * b).sum();
            assert!((de_dt - power).abs() < 1e-5, "dE/dt {de_dt} vs power {power}");
        }
    }
}

#[test]
fn integrated_power_matches_energy_change() {
    let p = RobotParams::default();
    let tau = [0.8, -0.3];
    let dt = 1e-4;
    let (mut q, mut v) = (vec![0.3, 0.4], vec![0.0, -1.0]);
    let e0 = total_energy(&p, &q, &v);
    let mut work = 0.0;
    for _ in 0..10_000 {
        let (q1, v1) = oracle::step(&p, &q, &v, &tau, dt).unwrap();
        // trapezoidal rule on τᵀq̇
        work += 0.5 * dt * (tau[0] * (v[0] + v1[0]) + tau[1] * (v[1] + v1[1]));
        (q, v) = (q1, v1);
    }
    let de = total_energy(&p, &q, &v) - e0;
    assert!((de - work).abs() < 1e-5 * e0.abs().max(1.0), "ΔE {de} vs work {work}");
}

#[test]
fn runge_kutta_is_fourth_order() {
    let p = RobotParams::default();
    let (q0, v0) = (vec![1.0, 0.5], vec![-0.5, 2.0]);
    let tau = [0.5, -0.2];
    let horizon = 1.0;
    let run = |dt: f64| simulate(&p, &q0, &v0, &tau, dt, (horizon / dt).round() as usize);
    let reference = run(horizon / 16384.0);
    let error = |dt: f64| {
        let (q, v) = run(dt);
        q.iter()
            .chain(&v)
            .zip(reference.0.iter().chain(&reference.1))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let errors: Vec<f64> = [1.0 / 256.0, 1.0 / 512.0, 1.0 / 1024.0].iter().map(|&dt| error(dt)).collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 4.0).abs() < 0.25, "observed order {order} from {errors:?}");
    }
}

#[test]
fn regressor_times_true_parameters_is_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in plants() {
        let beta = Matrix::column(&beta_true(&p));
        for _ in 0..1000 {
            let s = random_state(&mut rng);
            let y = si_features(&p, &s).unwrap();
            let tau = y.matmul(&beta).unwrap().into_vec();
            let exact = oracle::inverse_dynamics(&p, &s);
            for (a, b) in tau.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-10, "{tau:?} vs {exact:?}");
            }
        }
    }
}

/// `c_i = Σ_jk (∂H_ij/∂q_k − ½ ∂H_jk/∂q_i) q̇_j q̇_k` with `∂H` differenced.
fn coriolis_from_mass_matrix(p: &RobotParams, q: &[f64], qdot: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    let dh: Vec<Matrix> = (0..2)
        .map(|k| {
            let mut qp = q.to_vec();
            let mut qm = q.to_vec();
            qp[k] += h;
            qm[k] -= h;
            oracle::mass_matrix(p, &qp).sub(&oracle::mass_matrix(p, &qm)).unwrap().scale(0.5 / h)
        })
        .collect();
    (0..2)
        .map(|i| {
            let mut c = 0.0;
            for j in 0..2 {
                for k in 0..2 {
                    c += (dh[k][(i, j)] - 0.5 * dh[i][(j, k)]) * qdot[j] * qdot[k];
                }
            }
            c
        })
        .collect()
}

#[test]
fn coriolis_and_gravity_follow_from_energies() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for p in plants() {
        for _ in 0..200 {
            let s = random_state(&mut rng);
            let c = oracle::coriolis_vector(&p, &s.q, &s.qdot);
            let c_fd = coriolis_from_mass_matrix(&p, &s.q, &s.qdot);
            let g = oracle::gravity_vector(&p, &s.q);
            for i in 0..2 {
                assert!((c[i] - c_fd[i]).abs() < 1e-6 * (1.0 + c[i].abs()), "c {c:?} vs {c_fd:?}");
                let mut qp = s.q.clone();
                let mut qm = s.q.clone();
                qp[i] += 1e-6;
                qm[i] -= 1e-6;
                let g_fd = (oracle::potential_energy(&p, &qp) - oracle::potential_energy(&p, &qm)) / 2e-6;
                assert!((g[i] - g_fd).abs() < 1e-6 * (1.0 + g[i].abs()), "g {g:?}, differenced {g_fd}");
            }
        }
    }
}

#[test]
fn forward_and_inverse_dynamics_are_inverses() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = RobotParams::default();
    for _ in 0..1000 {
        let s = random_state(&mut rng);
        let tau = oracle::inverse_dynamics(&p, &s);
        let qddot = oracle::forward_dynamics(&p, &s.q, &s.qdot, &tau);
        for (a, b) in qddot.iter().zip(&s.qddot) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn hanging_arm_at_rest_stays_at_rest() {
    let p = RobotParams::default();
    let (q, v) = simulate(&p, &[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], 1e-3, 1000);
    assert!(q.iter().chain(&v).all(|x| x.abs() < 1e-15));
    assert!(oracle::step(&p, &q, &v, &[0.0, 0.0], 0.0).is_err());
}

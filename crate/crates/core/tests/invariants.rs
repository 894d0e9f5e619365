use delan::baselines::{beta_true, si_fit, FfnnConfig, FfnnParams};
use delan::model::InverseModel;
use delan::model_io::ModelDocument;
use delan::network::{decompose, evaluate, forward_dynamics, inverse_dynamics, DelanConfig, DelanParams, LossGraph};
use delan::oracle::{self, RobotParams};
use delan::state::{DynSample, JointState};
use delan::tensor::linalg::symmetric_eigen;
use delan::tensor::cholesky;
use delan::trajectories::{read_csv, write_csv};
use proptest::prelude::*;

fn vector(n: usize, a: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-a..a, n)
}

/// `(params, q, q̇, q̈)` for a random untrained network of `n` joints.
fn network_and_state(n: usize) -> impl Strategy<Value = (DelanParams, JointState)> {
    (any::<u64>(), vector(n, 3.0), vector(n, 3.0), vector(n, 10.0)).prop_map(move |(seed, q, qd, qdd)| {
        let params = DelanParams::init(DelanConfig::new(n), seed).unwrap();
        (params, JointState::new(q, qd, qdd).unwrap())
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mass_matrix_is_symmetric_positive_definite((params, s) in network_and_state(2)) {
        let h = evaluate(&params, &s.q, &s.qdot).unwrap().h;
        prop_assert_eq!(h.sub(&h.transpose()).unwrap().max_abs(), 0.0);
        prop_assert!(cholesky(&h).is_ok());
        let (eig, _) = symmetric_eigen(&h).unwrap();
        prop_assert!(eig[0] > 0.0, "eigenvalues {:?}", eig);
    }

    #[test]
    fn forward_inverts_inverse_dynamics((params, s) in network_and_state(2)) {
        let tau = inverse_dynamics(&params, &s).unwrap();
        let qdd = forward_dynamics(&params, &s.q, &s.qdot, &tau).unwrap();
        prop_assert!(max_abs_diff(&qdd, &s.qddot) < 1e-8, "{:?} vs {:?}", qdd, s.qddot);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn components_sum_to_the_torque((params, s) in network_and_state(3)) {
        let c = decompose(&params, &s).unwrap();
        let tau = inverse_dynamics(&params, &s).unwrap();
        prop_assert!(max_abs_diff(&c.total(), &tau) < 1e-12 * (1.0 + tau.iter().fold(0.0_f64, |m, x| m.max(x.abs()))));
    }

    #[test]
    fn coriolis_does_no_work_beyond_the_inertia_change((params, s) in network_and_state(3)) {
        // q̇ᵀ c = ½ q̇ᵀ Ḣ q̇ for any H(q)
        let ev = evaluate(&params, &s.q, &s.qdot).unwrap();
        let c = ev.coriolis(&s.qdot);
        let lhs: f64 = s.qdot.iter().zip(&c).map(|(a, b)| a * b).sum();
        let hq = ev.dh_dt.mat_vec(&s.qdot);
        let rhs: f64 = 0.5 * s.qdot.iter().zip(&hq).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn coriolis_is_quadratic_in_velocity((params, s) in network_and_state(2), alpha in -3.0..3.0f64) {
        let base = evaluate(&params, &s.q, &s.qdot).unwrap().coriolis(&s.qdot);
        let scaled_v: Vec<f64> = s.qdot.iter().map(|v| alpha * v).collect();
        let scaled = evaluate(&params, &s.q, &scaled_v).unwrap().coriolis(&scaled_v);
        let expect: Vec<f64> = base.iter().map(|c| alpha * alpha * c).collect();
        prop_assert!(max_abs_diff(&scaled, &expect) < 1e-10 * (1.0 + alpha * alpha));
    }

    #[test]
    fn at_rest_only_gravity_remains((params, s) in network_and_state(2)) {
        let rest = JointState::new(s.q.clone(), vec![0.0; 2], vec![0.0; 2]).unwrap();
        let c = decompose(&params, &rest).unwrap();
        prop_assert!(c.inertial.iter().chain(&c.coriolis).all(|x| *x == 0.0));
        prop_assert_eq!(inverse_dynamics(&params, &rest).unwrap(), c.gravity);
    }

    #[test]
    fn saved_networks_predict_identically((params, s) in network_and_state(2)) {
        let doc: ModelDocument = (&params).into();
        let json = serde_json::to_string(&doc).unwrap();
        let back = serde_json::from_str::<ModelDocument>(&json).unwrap().to_delan().unwrap();
        prop_assert_eq!(&back, &params);
        prop_assert_eq!(inverse_dynamics(&back, &s).unwrap(), inverse_dynamics(&params, &s).unwrap());
    }

    #[test]
    fn csv_roundtrip_is_exact(rows in prop::collection::vec((vector(2, 3.0), vector(2, 3.0), vector(2, 9.0), vector(2, 20.0)), 1..20)) {
        let samples: Vec<DynSample> = rows
            .into_iter()
            .enumerate()
            .map(|(k, (q, qd, qdd, tau))| DynSample::new(k as f64 * 0.005, JointState::new(q, qd, qdd).unwrap(), tau).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &samples, 0.005).unwrap();
        let (header, back) = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(header.unwrap().n, 2);
        prop_assert_eq!(back, samples);
    }

    #[test]
    fn system_identification_recovers_the_plant(
        m in (0.2..3.0f64, 0.2..3.0f64),
        l in (0.2..1.0f64, 0.2..1.0f64),
        states in prop::collection::vec((vector(2, 3.0), vector(2, 3.0), vector(2, 8.0)), 20..40),
    ) {
        let plant = RobotParams::thin_rods(m.0, m.1, l.0, l.1, 9.81);
        let data: Vec<DynSample> = states
            .into_iter()
            .map(|(q, qd, qdd)| {
                let s = JointState::new(q, qd, qdd).unwrap();
                let tau = oracle::inverse_dynamics(&plant, &s);
                DynSample::new(0.0, s, tau).unwrap()
            })
            .collect();
        let fit = si_fit(&plant, &data).unwrap();
        prop_assert_eq!(fit.rank, 5);
        prop_assert!(max_abs_diff(&fit.model.beta, &beta_true(&plant)) < 1e-6);
    }
}

fn scale_weights(params: &mut DelanParams, alpha: f64) {
    for layer in params.trunk.iter_mut().chain([&mut params.head_ld, &mut params.head_lo, &mut params.head_g]) {
        layer.w = layer.w.scale(alpha);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn weight_penalty_scales_quadratically_and_ignores_biases(seed in any::<u64>(), lambda in 1e-5..1e-2f64) {
        let config = DelanConfig::new(2).with_hidden(&[16, 16]);
        let params = DelanParams::init(config.clone(), seed).unwrap();
        let batch = vec![DynSample::new(0.0, JointState::new(vec![0.3, -0.2], vec![1.0, 0.5], vec![0.0, 2.0]).unwrap(), vec![1.0, -1.0]).unwrap()];
        let mut graph = LossGraph::build(&config, lambda).unwrap();
        let penalty = |graph: &mut LossGraph, p: &DelanParams| graph.loss(p, &batch).unwrap() - graph.data_loss(p, &batch).unwrap();

        let omega = penalty(&mut graph, &params);
        prop_assert!((omega - lambda * params.weight_norm_sq()).abs() < 1e-10 * (1.0 + omega));

        let mut doubled = params.clone();
        scale_weights(&mut doubled, 2.0);
        let omega2 = penalty(&mut graph, &doubled);
        prop_assert!((omega2 - 4.0 * omega).abs() < 1e-9 * (1.0 + omega2));

        let mut shifted = params.clone();
        for layer in shifted.trunk.iter_mut() {
            layer.b = layer.b.map(|b| b + 1.0);
        }
        prop_assert!((penalty(&mut graph, &shifted) - omega).abs() < 1e-9 * (1.0 + omega));
    }
}

#[test]
fn baseline_network_is_comparable_in_size() {
    let delan = DelanParams::init(DelanConfig::new(2), 0).unwrap().param_count();
    let ffnn = FfnnParams::init(FfnnConfig::new(2), 0).unwrap().param_count();
    let ratio = ffnn as f64 / delan as f64;
    assert!((0.9..=1.1).contains(&ratio), "DeLaN {delan}, FF-NN {ffnn}");
}

#[test]
fn ffnn_model_trait_matches_direct_prediction() {
    let params = FfnnParams::init(FfnnConfig::new(2), 4).unwrap();
    let s = JointState::new(vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]).unwrap();
    assert_eq!(params.inverse_dynamics(&s).unwrap(), params.predict(&s).unwrap());
}

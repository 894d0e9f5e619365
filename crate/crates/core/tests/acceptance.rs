//! End-to-end acceptance run. Each criterion prints one PASS/FAIL line; the
//! process fails if any criterion does.

use std::time::{Duration, Instant};

use delan::baselines::{beta_true, si_features};
use delan::experiments::{
    inference_benchmark, mean, noise_slopes, run_decomposition, run_gradcheck, run_offline, run_tracking,
    sample_efficiency, tracking_summary, ExperimentConfig, ExperimentKind, GradcheckSettings,
};
use delan::model::ModelKind;
use delan::network::{evaluate, forward_dynamics, inverse_dynamics, DelanConfig, DelanParams};
use delan::oracle::{self, RobotParams};
use delan::state::JointState;
use delan::tensor::{cholesky, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> delan::Result<Verdict> {
    Ok(Verdict {
        passed,
        detail: detail.into(),
    })
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, a: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-a..a)).collect()
}

fn derivative_suite() -> delan::Result<Verdict> {
    let out = run_gradcheck(&GradcheckSettings::default())?;
    let detail = out
        .checks
        .iter()
        .map(|c| format!("{} {:.1e}", c.name, c.max_rel_error))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(out.passed(), format!("max rel. error: {detail} (tol 1e-5, 100 configurations)"))
}

fn plausibility_suite() -> delan::Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut asymmetric = 0;
    let mut not_factorizable = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let params = DelanParams::init(DelanConfig::new(2), rng.random())?;
        let s = JointState::new(random_vec(&mut rng, 2, 3.0), random_vec(&mut rng, 2, 3.0), random_vec(&mut rng, 2, 10.0))?;
        let h = evaluate(&params, &s.q, &s.qdot)?.h;
        if h.sub(&h.transpose())?.max_abs() != 0.0 {
            asymmetric += 1;
        }
        if cholesky(&h).is_err() {
            not_factorizable += 1;
        }
        let tau = inverse_dynamics(&params, &s)?;
        let qdd = forward_dynamics(&params, &s.q, &s.qdot, &tau)?;
        for (a, b) in qdd.iter().zip(&s.qddot) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        asymmetric == 0 && not_factorizable == 0 && worst < 1e-8,
        format!("1000 draws: {asymmetric} asymmetric, {not_factorizable} not factorizable, roundtrip {worst:.1e} (tol 1e-8)"),
    )
}

fn total_energy(p: &RobotParams, q: &[f64], v: &[f64]) -> f64 {
    let (t, u) = oracle::energy(p, q, v);
    t + u
}

fn oracle_suite() -> delan::Result<Verdict> {
    let p = RobotParams::default();

    let (mut q, mut v) = (vec![1.2, -0.7], vec![0.5, 1.5]);
    let e0 = total_energy(&p, &q, &v);
    let mut drift: f64 = 0.0;
    for _ in 0..10_000 {
        (q, v) = oracle::step(&p, &q, &v, &[0.0, 0.0], 1e-3)?;
        drift = drift.max((total_energy(&p, &q, &v) - e0).abs() / e0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut power: f64 = 0.0;
    let mut regressor: f64 = 0.0;
    for _ in 0..1000 {
        let s = JointState::new(random_vec(&mut rng, 2, 3.1), random_vec(&mut rng, 2, 3.0), random_vec(&mut rng, 2, 8.0))?;
        let tau = random_vec(&mut rng, 2, 10.0);
        let qdd = oracle::forward_dynamics(&p, &s.q, &s.qdot, &tau);
        let h = 1e-6;
        let along = |sign: f64| {
            let q: Vec<f64> = (0..2).map(|i| s.q[i] + sign * h * s.qdot[i]).collect();
            let v: Vec<f64> = (0..2).map(|i| s.qdot[i] + sign * h * qdd[i]).collect();
            total_energy(&p, &q, &v)
        };
        let de_dt = (along(1.0) - along(-1.0)) / (2.0 * h);
        power = power.max((de_dt - (tau[0] * s.qdot[0] + tau[1] * s.qdot[1])).abs());

        let y = si_features(&p, &s)?.matmul(&Matrix::column(&beta_true(&p)))?.into_vec();
        let exact = oracle::inverse_dynamics(&p, &s);
        regressor = regressor.max((y[0] - exact[0]).abs().max((y[1] - exact[1]).abs()));
    }

    let run = |dt: f64| -> delan::Result<Vec<f64>> {
        let (mut q, mut v) = (vec![1.0, 0.5], vec![-0.5, 2.0]);
        for _ in 0..(1.0 / dt).round() as usize {
            (q, v) = oracle::step(&p, &q, &v, &[0.5, -0.2], dt)?;
        }
        Ok(q.into_iter().chain(v).collect())
    };
    let reference = run(1.0 / 16384.0)?;
    let err = |dt: f64| -> delan::Result<f64> {
        Ok(run(dt)?.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    };
    let order = (err(1.0 / 512.0)? / err(1.0 / 1024.0)?).log2();

    verdict(
        drift < 1e-6 && power < 1e-5 && (order - 4.0).abs() < 0.25 && regressor < 1e-10,
        format!("energy drift {drift:.1e}, power balance {power:.1e}, RK4 order {order:.2}, Yβ error {regressor:.1e}"),
    )
}

fn decomposition() -> delan::Result<Verdict> {
    let cfg = ExperimentConfig::preset(ExperimentKind::Decompose);
    let out = run_decomposition(&cfg)?;
    let [i, c, g] = out.mean_errors().expect("seeds ran");
    verdict(
        i < 0.15 && c < 0.15 && g < 0.15,
        format!(
            "n_train {}, {} seeds, relative RMSE Hq̈ {:.3}, c {:.3}, g {:.3} (tol 0.15)",
            cfg.n_train[0],
            cfg.seeds.len(),
            i,
            c,
            g
        ),
    )
}

fn sample_efficiency_ordering() -> delan::Result<Verdict> {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::OfflineCharacters);
    cfg.seeds = (0..10).collect();
    let rows = sample_efficiency(&run_offline(&cfg)?);
    let ordered = rows.iter().all(|r| r.delan < r.ffnn);
    let largest = rows.iter().max_by(|a, b| a.gap.total_cmp(&b.gap)).map_or(0, |r| r.n_train);
    let detail = rows
        .iter()
        .map(|r| format!("n={}: {:.3} vs {:.3}", r.n_train, r.delan, r.ffnn))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        rows.len() == 4 && ordered && largest == 1,
        format!("10 seeds, test MSE DeLaN vs FF-NN {detail}; largest gap at n={largest}"),
    )
}

fn velocity_extrapolation() -> delan::Result<Verdict> {
    let cfg = ExperimentConfig::preset(ExperimentKind::OnlineCosine);
    let out = run_tracking(&cfg)?;
    let at = |model: ModelKind, scale: f64| {
        let v: Vec<f64> = out
            .records
            .iter()
            .filter(|r| r.model == model && r.velocity_scale == scale)
            .map(|r| r.accumulated)
            .collect();
        mean(&v).expect("records")
    };
    let (delan, ffnn) = (at(ModelKind::Delan, 2.0), at(ModelKind::Ffnn, 2.0));
    let oracle: Vec<f64> = cfg.velocity_scales.iter().map(|&s| at(ModelKind::Oracle, s)).collect();
    let lo = oracle.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = oracle.iter().copied().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    verdict(
        delan < 0.5 * ffnn && spread < 0.1,
        format!(
            "{} seeds, at 2x DeLaN {delan:.2e} vs FF-NN {ffnn:.2e} (ratio {:.2}, tol 0.5); oracle spread {:.1}% (tol 10%)",
            cfg.seeds.len(),
            delan / ffnn,
            100.0 * spread
        ),
    )
}

fn tracking_ordering() -> delan::Result<Verdict> {
    let cfg = ExperimentConfig::preset(ExperimentKind::OnlineCharacters);
    let out = run_tracking(&cfg)?;
    let summary = tracking_summary(&out.records);
    let med = |m: ModelKind| summary.iter().find(|s| s.model == m).map(|s| s.median).expect("model ran");
    let (o, d, f, p) = (med(ModelKind::Oracle), med(ModelKind::Delan), med(ModelKind::Ffnn), med(ModelKind::Pd));
    verdict(
        o <= d && d < f && f < p,
        format!(
            "n_train {}, {} seeds, median error oracle {o:.2e}, DeLaN {d:.2e}, FF-NN {f:.2e}, PD {p:.2e}",
            cfg.n_train[0],
            cfg.seeds.len()
        ),
    )
}

fn noise_robustness() -> delan::Result<Verdict> {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::NoiseSweep);
    cfg.models = vec![ModelKind::Si, ModelKind::Delan];
    let slopes = noise_slopes(&run_offline(&cfg)?);
    let slope = |m: ModelKind| slopes.iter().find(|s| s.model == m).map(|s| s.slope).expect("model ran");
    let (si, delan) = (slope(ModelKind::Si), slope(ModelKind::Delan));
    verdict(
        cfg.noise_sigmas.len() >= 4 && si > delan,
        format!(
            "{} noise levels, {} seeds, slope of test MSE vs σ²: SI {si:.3}, DeLaN {delan:.3}",
            cfg.noise_sigmas.len(),
            cfg.seeds.len()
        ),
    )
}

fn realtime_budget() -> delan::Result<Verdict> {
    let r = inference_benchmark(7, &[64, 64], 2000, 1.0 / 200.0, 0)?;
    verdict(
        r.median < r.budget,
        format!(
            "n=7, hidden [64, 64]: median {:.1} µs, p95 {:.1} µs, max {:.1} µs (budget {:.0} ms)",
            r.median * 1e6,
            r.p95 * 1e6,
            r.max * 1e6,
            r.budget * 1e3
        ),
    )
}

type Criterion = (&'static str, Option<Duration>, fn() -> delan::Result<Verdict>);

fn main() {
    let min = |m: u64| Some(Duration::from_secs(60 * m));
    let criteria: [Criterion; 9] = [
        ("C1 analytic derivatives", min(1), derivative_suite),
        ("C2 physical plausibility", min(1), plausibility_suite),
        ("C3 oracle validity", min(1), oracle_suite),
        ("C4 torque decomposition", min(15), decomposition),
        ("C5 sample efficiency", min(30), sample_efficiency_ordering),
        ("C6 velocity extrapolation", min(20), velocity_extrapolation),
        ("C7 tracking ordering", min(30), tracking_ordering),
        ("C8 noise robustness", min(20), noise_robustness),
        ("C9 realtime budget", None, realtime_budget),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, limit, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let clock = Instant::now();
        let result = run();
        let elapsed = clock.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let (passed, detail) = match result {
            Ok(v) => (v.passed && in_time, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        let budget = limit.map_or(String::new(), |l| format!(" / {} s", l.as_secs()));
        println!(
            "{} {name}: {detail} [{:.1} s{budget}]",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

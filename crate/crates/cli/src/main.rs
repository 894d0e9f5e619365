//! `delan`: runs the experiment protocols and writes tidy CSV and JSON
//! artifacts for plotting.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use delan::experiments::{
    inference_benchmark, noise_slopes, run_decomposition, run_gradcheck, run_offline_with, run_tracking,
    run_tracking_logged, sample_efficiency, tracking_summary, ExperimentConfig, ExperimentKind,
};
use delan::trajectories::export_csv;
use delan::ModelKind;
use serde_json::json;

use config::resolve;
use output::{offline_means, realtime_totals, Output};

#[derive(Parser)]
#[command(name = "delan", version, about = "Deep Lagrangian Network experiments on a simulated two-link arm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offline training on oracle-labelled references.
    Offline {
        /// offline-characters, offline-cosine or noise-sweep.
        #[arg(long)]
        kind: Option<ExperimentKind>,
        #[command(flatten)]
        common: Common,
    },
    /// Online learning in the control loop, then tracking evaluation.
    Online {
        /// online-characters or online-cosine.
        #[arg(long)]
        kind: Option<ExperimentKind>,
        /// Write the measured samples of every evaluation episode.
        #[arg(long)]
        episode_logs: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Learned against true inertial, Coriolis and gravity torques.
    Decompose {
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference validation of the analytic derivatives.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

/// Options shared by every subcommand; flags override the config file.
#[derive(Args, Debug, Default)]
pub struct Common {
    /// JSON config; missing fields come from the experiment's preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replaces the seed list; repeatable.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replaces the model list; repeatable.
    #[arg(long = "model")]
    pub models: Vec<ModelKind>,
    /// Comma-separated velocity scales.
    #[arg(long, value_delimiter = ',')]
    pub velocity_scales: Vec<f64>,
    /// Comma-separated training-noise standard deviations.
    #[arg(long, value_delimiter = ',')]
    pub noise_sigmas: Vec<f64>,
    /// Comma-separated training-set sizes.
    #[arg(long, value_delimiter = ',')]
    pub n_train: Vec<usize>,
    /// Write every trained model as a JSON document.
    #[arg(long)]
    pub save_models: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Run(#[from] delan::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            _ => 1,
        }
    }
}

fn offline(cfg: &ExperimentConfig, out: &Output, save: bool) -> Result<(), CliError> {
    let records = run_offline_with(cfg, |r, model| {
        if save {
            if let Some(doc) = model.document() {
                let name = format!("{}-n{}-sigma{}-seed{}.json", r.model, r.n_train, r.sigma, r.seed);
                out.model(&name, &doc)?;
            }
        }
        Ok(())
    })?;
    out.csv("records.csv", &records)?;
    let mut summary = json!({ "kind": cfg.kind, "means": offline_means(&records) });
    match cfg.kind {
        ExperimentKind::OfflineCharacters => {
            let rows = sample_efficiency(&records);
            for r in &rows {
                println!("n={:<3} DeLaN {:.4e}  FF-NN {:.4e}  gap {:.4e}", r.n_train, r.delan, r.ffnn, r.gap);
            }
            summary["sample_efficiency"] = json!(rows);
        }
        ExperimentKind::NoiseSweep => {
            let slopes = noise_slopes(&records);
            for s in &slopes {
                println!("{:<7} test MSE slope vs sigma^2 {:.4e}", s.model, s.slope);
            }
            summary["noise_slopes"] = json!(slopes);
        }
        _ => {}
    }
    out.json("summary.json", &summary)?;
    Ok(())
}

fn online(cfg: &ExperimentConfig, out: &Output, save: bool, logs: bool) -> Result<(), CliError> {
    let outcome = if logs { run_tracking_logged(cfg)? } else { run_tracking(cfg)? };
    out.csv("records.csv", &outcome.records)?;
    out.csv("episodes.csv", &outcome.episodes)?;
    for log in &outcome.logs {
        let name = format!("{}-{}-x{}-seed{}.csv", log.model, log.trajectory, log.velocity_scale, log.seed);
        let path = out.subdir("episodes")?.join(name);
        export_csv(&path, &log.samples, 1.0 / cfg.fd())?;
    }
    if save {
        for (seed, model) in &outcome.models {
            if let Some(doc) = model.document() {
                out.model(&format!("{}-seed{seed}.json", model.kind()), &doc)?;
            }
        }
    }
    let summary = tracking_summary(&outcome.records);
    for s in &summary {
        println!("{:<7} x{:<5} median {:.4e}  mean {:.4e}", s.model, s.velocity_scale, s.median, s.mean);
    }
    for (model, seed, reason) in &outcome.halted {
        eprintln!("warning: {model} training for seed {seed} stopped early: {reason}");
    }
    let benchmark = inference_benchmark(2, &cfg.network.hidden, 1000, cfg.control.budget(), cfg.seeds[0])?;
    let halted: Vec<_> = outcome
        .halted
        .iter()
        .map(|(model, seed, reason)| json!({ "model": model, "seed": seed, "reason": reason }))
        .collect();
    out.json(
        "summary.json",
        &json!({
            "kind": cfg.kind,
            "tracking": summary,
            "halted": halted,
            "realtime": {
                "budget_s": cfg.control.budget(),
                "violations": realtime_totals(&outcome.records, &outcome.episodes),
                "delan_inference": benchmark,
            },
        }),
    )?;
    Ok(())
}

fn decompose(cfg: &ExperimentConfig, out: &Output, save: bool) -> Result<(), CliError> {
    let outcome = run_decomposition(cfg)?;
    out.csv("errors.csv", &outcome.errors)?;
    out.csv("components.csv", &outcome.series)?;
    if save {
        for (seed, params) in &outcome.models {
            out.model(&format!("delan-seed{seed}.json"), &params.into())?;
        }
    }
    let mean = outcome.mean_errors();
    if let Some([i, c, g]) = mean {
        println!("relative RMSE on held-out characters: inertial {i:.4}  coriolis {c:.4}  gravity {g:.4}");
    }
    out.json(
        "summary.json",
        &json!({
            "kind": cfg.kind,
            "mean_relative_rmse": mean.map(|[i, c, g]| json!({ "inertial": i, "coriolis": c, "gravity": g })),
        }),
    )?;
    Ok(())
}

fn gradcheck(cfg: &ExperimentConfig, out: &Output) -> Result<(), CliError> {
    let mut settings = cfg.gradcheck.clone();
    settings.seed = cfg.seeds[0];
    let report = run_gradcheck(&settings)?;
    for c in &report.checks {
        println!(
            "{} {:<20} max rel. error {:.3e} (tolerance {:.0e})",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.max_rel_error,
            c.tolerance
        );
    }
    out.json("report.json", &report)?;
    if !report.passed() {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(CliError::Validation(failed.join(", ")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    use ExperimentKind::*;
    let (cfg, common) = match &cli.command {
        Command::Offline { kind, common } => (resolve(common, *kind, &[OfflineCharacters, OfflineCosine, NoiseSweep])?, common),
        Command::Online { kind, common, .. } => (resolve(common, *kind, &[OnlineCharacters, OnlineCosine])?, common),
        Command::Decompose { common } => (resolve(common, None, &[Decompose])?, common),
        Command::Gradcheck { common } => (resolve(common, None, &[Gradcheck])?, common),
    };
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.kind.name()));
    let out = Output::create(dir)?;
    out.json("config.json", &cfg)?;
    let save = common.save_models;
    match cli.command {
        Command::Offline { .. } => offline(&cfg, &out, save),
        Command::Online { episode_logs, .. } => online(&cfg, &out, save, episode_logs),
        Command::Decompose { .. } => decompose(&cfg, &out, save),
        Command::Gradcheck { .. } => gradcheck(&cfg, &out),
    }?;
    eprintln!("wrote {}", out.dir().display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

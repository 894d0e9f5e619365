//! Output directory layout and tidy summaries.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use delan::experiments::{mean, EpisodeRecord, OfflineRecord, TrackingRecord};
use delan::model_io::ModelDocument;
use serde::Serialize;

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: PathBuf) -> delan::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn subdir(&self, name: &str) -> delan::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::create_dir_all(&path)?;
        Ok(path)
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> delan::Result<()> {
        fs::write(self.dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> delan::Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name)).map_err(std::io::Error::from)?;
        for row in rows {
            w.serialize(row).map_err(std::io::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn model(&self, name: &str, doc: &ModelDocument) -> delan::Result<()> {
        doc.save(&self.subdir("models")?.join(name))
    }
}

#[derive(Debug, Serialize)]
pub struct OfflineMean {
    pub model: String,
    pub n_train: usize,
    pub sigma: f64,
    pub velocity_scale: f64,
    pub seeds: usize,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
}

/// Seed means of the offline records per `(model, n_train, σ, scale)`.
pub fn offline_means(records: &[OfflineRecord]) -> Vec<OfflineMean> {
    let mut groups: BTreeMap<(String, usize, u64, u64), Vec<&OfflineRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.model.to_string(), r.n_train, r.sigma.to_bits(), r.velocity_scale.to_bits());
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((model, n_train, _, _), rs)| {
            let train: Vec<f64> = rs.iter().map(|r| r.train_mse).collect();
            let test: Vec<f64> = rs.iter().filter_map(|r| r.test_mse).collect();
            OfflineMean {
                model,
                n_train,
                sigma: rs[0].sigma,
                velocity_scale: rs[0].velocity_scale,
                seeds: rs.len(),
                train_mse: mean(&train).unwrap_or(f64::NAN),
                test_mse: mean(&test),
            }
        })
        .collect()
}

#[derive(Debug, Default, Serialize)]
pub struct Violations {
    pub training_episodes: usize,
    pub training_violations: usize,
    pub evaluation_episodes: usize,
    pub evaluation_violations: usize,
}

/// Feed-forward evaluations over budget, per model.
pub fn realtime_totals(records: &[TrackingRecord], episodes: &[EpisodeRecord]) -> BTreeMap<String, Violations> {
    let mut out: BTreeMap<String, Violations> = BTreeMap::new();
    for e in episodes {
        let v = out.entry(e.model.to_string()).or_default();
        v.training_episodes += 1;
        v.training_violations += e.realtime_violations;
    }
    for r in records {
        let v = out.entry(r.model.to_string()).or_default();
        v.evaluation_episodes += 1;
        v.evaluation_violations += r.realtime_violations;
    }
    out
}

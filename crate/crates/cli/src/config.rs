//! Config resolution: preset of the experiment kind, then the config file,
//! then command-line flags.

use std::fs;

use delan::experiments::{ExperimentConfig, ExperimentKind};
use serde_json::Value;

use crate::{CliError, Common};

/// Recursively overlays `patch` onto `base`; objects merge, everything else
/// replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn config_error(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn resolve(common: &Common, kind: Option<ExperimentKind>, allowed: &[ExperimentKind]) -> Result<ExperimentConfig, CliError> {
    let file = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let value: Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if !value.is_object() {
                return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
            }
            Some(value)
        }
        None => None,
    };
    let from_file = file
        .as_ref()
        .and_then(|v| v.get("kind"))
        .map(|k| serde_json::from_value::<ExperimentKind>(k.clone()))
        .transpose()
        .map_err(config_error)?;
    let kind = kind.or(from_file).unwrap_or(allowed[0]);
    if !allowed.contains(&kind) {
        let names: Vec<&str> = allowed.iter().map(|k| k.name()).collect();
        return Err(CliError::Config(format!("kind {kind} not available here; expected one of {}", names.join(", "))));
    }

    let mut value = serde_json::to_value(ExperimentConfig::preset(kind)).map_err(config_error)?;
    if let Some(file) = file {
        merge(&mut value, file);
    }
    value["kind"] = serde_json::to_value(kind).map_err(config_error)?;
    let mut cfg: ExperimentConfig = serde_json::from_value(value).map_err(config_error)?;

    if !common.seeds.is_empty() {
        cfg.seeds = common.seeds.clone();
    }
    if !common.models.is_empty() {
        cfg.models = common.models.clone();
    }
    if !common.velocity_scales.is_empty() {
        cfg.velocity_scales = common.velocity_scales.clone();
    }
    if !common.noise_sigmas.is_empty() {
        cfg.noise_sigmas = common.noise_sigmas.clone();
    }
    if !common.n_train.is_empty() {
        cfg.n_train = common.n_train.clone();
    }
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

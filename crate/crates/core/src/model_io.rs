//! JSON model documents shared by all model kinds.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{FfnnConfig, FfnnParams, SiModel};
use crate::network::{DelanConfig, DelanParams};
use crate::error::{Error, Result};
use crate::nn::Normalization;
use crate::tensor::{Activation, Matrix};

pub const FORMAT_VERSION: u32 = 1;

/// Serialized model. Weight arrays are the parameter tensors in canonical
/// order, each flattened row-major: `W` then `b` for every layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelDocument {
    Delan {
        format_version: u32,
        n: usize,
        /// Input width followed by the trunk widths.
        layer_sizes: Vec<usize>,
        activation: Activation,
        diag_activation: Activation,
        diag_offset: f64,
        weights: Vec<Vec<f64>>,
        normalization: Option<Normalization>,
    },
    Ffnn {
        format_version: u32,
        n: usize,
        /// Input width, hidden widths, output width.
        layer_sizes: Vec<usize>,
        activation: Activation,
        weights: Vec<Vec<f64>>,
        normalization: Option<Normalization>,
    },
    Si {
        format_version: u32,
        n: usize,
        beta: Vec<f64>,
        gravity: f64,
    },
}

fn flatten(tensors: Vec<&Matrix>) -> Vec<Vec<f64>> {
    tensors.into_iter().map(|t| t.as_slice().to_vec()).collect()
}

fn fill(tensors: Vec<&mut Matrix>, weights: &[Vec<f64>]) -> Result<()> {
    if tensors.len() != weights.len() {
        return Err(Error::Shape(format!("{} weight arrays for {} tensors", weights.len(), tensors.len())));
    }
    for (k, (t, w)) in tensors.into_iter().zip(weights).enumerate() {
        if t.len() != w.len() {
            return Err(Error::Shape(format!("weight array {k} has {} entries, expected {}", w.len(), t.len())));
        }
        *t = Matrix::from_vec(t.rows(), t.cols(), w.clone())?;
    }
    Ok(())
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Unsupported(format!("model format version {v}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

impl From<&DelanParams> for ModelDocument {
    fn from(p: &DelanParams) -> Self {
        let mut layer_sizes = vec![p.config.n];
        layer_sizes.extend(&p.config.hidden);
        ModelDocument::Delan {
            format_version: FORMAT_VERSION,
            n: p.config.n,
            layer_sizes,
            activation: p.config.activation,
            diag_activation: p.config.diag_activation,
            diag_offset: p.config.diag_offset,
            weights: flatten(p.tensors()),
            normalization: p.config.normalization.clone(),
        }
    }
}

impl From<&FfnnParams> for ModelDocument {
    fn from(p: &FfnnParams) -> Self {
        let mut layer_sizes = vec![p.config.input_dim()];
        layer_sizes.extend(&p.config.hidden);
        layer_sizes.push(p.config.n);
        ModelDocument::Ffnn {
            format_version: FORMAT_VERSION,
            n: p.config.n,
            layer_sizes,
            activation: p.config.activation,
            weights: flatten(p.tensors()),
            normalization: p.config.normalization.clone(),
        }
    }
}

impl From<&SiModel> for ModelDocument {
    fn from(m: &SiModel) -> Self {
        ModelDocument::Si {
            format_version: FORMAT_VERSION,
            n: 2,
            beta: m.beta.clone(),
            gravity: m.gravity,
        }
    }
}

impl ModelDocument {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelDocument::Delan { .. } => "delan",
            ModelDocument::Ffnn { .. } => "ffnn",
            ModelDocument::Si { .. } => "si",
        }
    }

    pub fn to_delan(&self) -> Result<DelanParams> {
        let ModelDocument::Delan {
            format_version,
            n,
            layer_sizes,
            activation,
            diag_activation,
            diag_offset,
            weights,
            normalization,
        } = self
        else {
            return Err(Error::InvalidArgument(format!("expected a delan model, found {}", self.kind())));
        };
        check_version(*format_version)?;
        if layer_sizes.first() != Some(n) {
            return Err(Error::Shape(format!("layer sizes {layer_sizes:?} must start with n = {n}")));
        }
        let config = DelanConfig {
            n: *n,
            hidden: layer_sizes[1..].to_vec(),
            activation: *activation,
            diag_activation: *diag_activation,
            diag_offset: *diag_offset,
            normalization: normalization.clone(),
        };
        let mut p = DelanParams::zeros(config)?;
        fill(p.tensors_mut(), weights)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_ffnn(&self) -> Result<FfnnParams> {
        let ModelDocument::Ffnn {
            format_version,
            n,
            layer_sizes,
            activation,
            weights,
            normalization,
        } = self
        else {
            return Err(Error::InvalidArgument(format!("expected an ffnn model, found {}", self.kind())));
        };
        check_version(*format_version)?;
        if layer_sizes.len() < 2 || layer_sizes[0] != 3 * n || layer_sizes[layer_sizes.len() - 1] != *n {
            return Err(Error::Shape(format!("layer sizes {layer_sizes:?} do not fit n = {n}")));
        }
        let config = FfnnConfig {
            n: *n,
            hidden: layer_sizes[1..layer_sizes.len() - 1].to_vec(),
            activation: *activation,
            normalization: normalization.clone(),
        };
        let mut p = FfnnParams::zeros(config)?;
        fill(p.tensors_mut(), weights)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_si(&self) -> Result<SiModel> {
        let ModelDocument::Si {
            format_version,
            n,
            beta,
            gravity,
        } = self
        else {
            return Err(Error::InvalidArgument(format!("expected an si model, found {}", self.kind())));
        };
        check_version(*format_version)?;
        if *n != 2 {
            return Err(Error::Unsupported(format!("si model for {n} dof")));
        }
        SiModel::new(beta.clone(), *gravity)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

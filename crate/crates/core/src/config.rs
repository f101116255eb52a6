//! Run configuration: one JSON file, every field defaulted, command-line
//! flags applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ScaleFit;
use crate::metric::BaseMetric;
use crate::phi::PhiAtom;
use crate::pipeline::{AlphaSource, CvOptions, Method, ModelSpec, PhiSpec, SplitMode};
use crate::swarm::PsoConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input CSV; usually given with `--data`.
    pub data: Option<PathBuf>,
    pub metric: BaseMetric,
    /// A modulus object or `"optimize"`.
    pub phi: PhiSpec,
    /// Atoms the swarm searches over.
    pub atoms: Vec<PhiAtom>,
    pub method: Method,
    /// Fixed blend weight; estimated from the data when absent.
    pub alpha: Option<f64>,
    pub alpha_source: AlphaSource,
    pub train_fraction: f64,
    pub repeats: usize,
    pub seed: u64,
    pub split: SplitMode,
    /// Min-max scale the features before anything else.
    pub scale: bool,
    pub scale_fit: ScaleFit,
    pub pso: PsoConfig,
    /// Output directory.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = ModelSpec::default();
        let cv = CvOptions::default();
        Self {
            data: None,
            metric: spec.metric,
            phi: spec.phi,
            atoms: spec.atoms,
            method: spec.method,
            alpha: spec.alpha,
            alpha_source: spec.alpha_source,
            train_fraction: cv.train_fraction,
            repeats: cv.repeats,
            seed: cv.seed,
            split: cv.split,
            scale: true,
            scale_fit: ScaleFit::AllRows,
            pso: spec.pso,
            out: PathBuf::from("lipext-out"),
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.repeats == 0 {
            return Err(ConfigError::Invalid("repeats must be at least 1".into()));
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(ConfigError::Invalid(format!("alpha {a} is outside [0, 1]")));
            }
        }
        if self.atoms.is_empty() {
            return Err(ConfigError::Invalid("atoms must not be empty".into()));
        }
        self.pso
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            method: self.method,
            metric: self.metric,
            phi: self.phi.clone(),
            atoms: self.atoms.clone(),
            pso: self.pso.clone(),
            alpha: self.alpha,
            alpha_source: self.alpha_source,
            train_fraction: self.train_fraction,
        }
    }

    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            repeats: self.repeats,
            seed: self.seed,
            train_fraction: self.train_fraction,
            split: self.split,
        }
    }
}

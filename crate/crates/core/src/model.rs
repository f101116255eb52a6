//! The model file written by `extend` and read back by `predict`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::IndexedSample;
use crate::dataset::{DataError, Scaling};
use crate::extension::{ExtensionError, FittedMethod};
use crate::metric::BaseMetric;
use crate::phi::PhiCombination;
use crate::pipeline::{Method, Predictor};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub method: Method,
    pub metric: BaseMetric,
    pub phi: Option<PhiCombination>,
    pub lipschitz: Option<f64>,
    pub alpha: Option<f64>,
    /// Training row the standard index is anchored at.
    pub anchor_id: Option<String>,
    /// Applied to raw features before prediction.
    pub scaling: Option<Scaling>,
    pub training_ids: Vec<String>,
    /// SHA-256 over training ids, features and values.
    pub training_hash: String,
    pub predictor: Predictor,
}

impl ModelFile {
    pub fn new(
        method: Method,
        metric: BaseMetric,
        scaling: Option<Scaling>,
        training_ids: Vec<String>,
        training: &IndexedSample,
        predictor: Predictor,
    ) -> Self {
        let (phi, lipschitz, alpha, anchor_id) = match &predictor {
            Predictor::Extension(m) => {
                let (alpha, anchor) = match m.method() {
                    FittedMethod::Blend { alpha } => (Some(alpha), None),
                    FittedMethod::Standard { anchor, .. } => (None, Some(anchor)),
                    _ => (None, None),
                };
                (
                    Some(m.metric().phi.clone()),
                    Some(m.lipschitz()),
                    alpha,
                    anchor.map(|a| training_ids[a].clone()),
                )
            }
            Predictor::Linear(_) => (None, None, None, None),
        };
        Self {
            version: MODEL_FORMAT_VERSION,
            method,
            metric,
            phi,
            lipschitz,
            alpha,
            anchor_id,
            scaling,
            training_hash: training_hash(&training_ids, training),
            training_ids,
            predictor,
        }
    }

    /// Scales raw features (when the model was fitted on scaled data) and
    /// predicts.
    pub fn predict_raw(&self, features: &[f64]) -> Result<f64, ModelError> {
        let x = match &self.scaling {
            Some(s) => s.apply(features)?,
            None => features.to_vec(),
        };
        Ok(self.predictor.predict(&x)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Extension(#[from] ExtensionError),
}

pub fn training_hash(ids: &[String], sample: &IndexedSample) -> String {
    let mut h = Sha256::new();
    for (id, (p, v)) in ids.iter().zip(sample.points().iter().zip(sample.values())) {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
        for x in p {
            h.update(x.to_le_bytes());
        }
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

//! Lipschitz extension of a partially known index.
//!
//! Given training rows `S` with values `f` and a constant `K` at least the
//! coherence constant of `f` under `d_φ`:
//!
//! * Whitney: `W(x) = min_{y∈S} f(y) + K·d_φ(x, y)` (largest `K`-Lipschitz extension)
//! * McShane: `M(x) = max_{y∈S} f(y) − K·d_φ(x, y)` (smallest)
//! * blend: `(1 − α)·W + α·M` for `α ∈ [0, 1]`
//! * standard index: `min f + K·d_φ(a₀, x)` where `a₀` attains `min f`
//!
//! Both extensions agree with `f` on `S`, and `M ≤ blend ≤ W` everywhere.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{coherence_constant, ConstantsError, IndexedSample};
use crate::metric::CompositionMetric;

const PARALLEL_MIN_QUERIES: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtensionError {
    #[error(transparent)]
    Sample(#[from] ConstantsError),
    #[error("index is not φ-coherent: rows {0} and {1} coincide but carry different values")]
    NotCoherent(usize, usize),
    #[error("Lipschitz constant must be finite and non-negative, got {0}")]
    BadConstant(f64),
    #[error("blend weight {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("query has dimension {found}, model expects {expected}")]
    Dimension { found: usize, expected: usize },
    #[error("optimal blend needs equal, non-empty value lists (got {0}, {1}, {2})")]
    AlphaInput(usize, usize, usize),
}

/// Which extension a model evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtensionKind {
    Mcshane,
    Whitney,
    Blend { alpha: f64 },
    Standard,
}

/// The fitted rule, including what was derived from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedMethod {
    Mcshane,
    Whitney,
    Blend {
        alpha: f64,
    },
    /// `anchor` is the training row attaining the minimum (lowest row on
    /// ties); `inf_value` the minimum itself, before shifting.
    Standard {
        anchor: usize,
        inf_value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionModel {
    training: IndexedSample,
    metric: CompositionMetric,
    lipschitz: f64,
    method: FittedMethod,
}

impl ExtensionModel {
    /// Fits with `K` set to the coherence constant of the training rows.
    pub fn fit(
        training: IndexedSample,
        metric: CompositionMetric,
        kind: ExtensionKind,
    ) -> Result<Self, ExtensionError> {
        let k = coherence_constant(&training, &metric)?;
        if let (false, Some((i, j))) = (k.is_finite(), k.pair) {
            return Err(ExtensionError::NotCoherent(i, j));
        }
        Self::with_constant(training, metric, k.value, kind)
    }

    /// Fits with a caller-chosen `K`. Interpolation and the sandwich
    /// ordering only hold when `K` is at least the coherence constant.
    pub fn with_constant(
        training: IndexedSample,
        metric: CompositionMetric,
        lipschitz: f64,
        kind: ExtensionKind,
    ) -> Result<Self, ExtensionError> {
        if !lipschitz.is_finite() || lipschitz < 0.0 {
            return Err(ExtensionError::BadConstant(lipschitz));
        }
        let method = match kind {
            ExtensionKind::Mcshane => FittedMethod::Mcshane,
            ExtensionKind::Whitney => FittedMethod::Whitney,
            ExtensionKind::Blend { alpha } => {
                check_alpha(alpha)?;
                FittedMethod::Blend { alpha }
            }
            ExtensionKind::Standard => FittedMethod::Standard {
                anchor: training.argmin(),
                inf_value: training.min_value(),
            },
        };
        Ok(Self {
            training,
            metric,
            lipschitz,
            method,
        })
    }

    pub fn training(&self) -> &IndexedSample {
        &self.training
    }

    pub fn metric(&self) -> &CompositionMetric {
        &self.metric
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn method(&self) -> FittedMethod {
        self.method
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ExtensionError> {
        if x.len() != self.training.dim() {
            return Err(ExtensionError::Dimension {
                found: x.len(),
                expected: self.training.dim(),
            });
        }
        Ok(())
    }

    fn terms<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = (f64, f64)> + 'a {
        let k = self.lipschitz;
        self.training
            .points()
            .iter()
            .zip(self.training.values())
            .map(move |(y, &f)| (f, k * self.metric.distance_unchecked(x, y)))
    }

    pub fn whitney(&self, x: &[f64]) -> Result<f64, ExtensionError> {
        self.check_dim(x)?;
        Ok(self
            .terms(x)
            .map(|(f, kd)| f + kd)
            .fold(f64::INFINITY, f64::min))
    }

    pub fn mcshane(&self, x: &[f64]) -> Result<f64, ExtensionError> {
        self.check_dim(x)?;
        Ok(self
            .terms(x)
            .map(|(f, kd)| f - kd)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// `(1 − α)·W(x) + α·M(x)`, for any `α ∈ [0, 1]` regardless of the fitted
    /// method.
    pub fn blend(&self, x: &[f64], alpha: f64) -> Result<f64, ExtensionError> {
        check_alpha(alpha)?;
        let (w, m) = self.whitney_mcshane(x)?;
        Ok(blend_value(w, m, alpha))
    }

    /// Both extensions from a single pass over the training rows.
    pub fn whitney_mcshane(&self, x: &[f64]) -> Result<(f64, f64), ExtensionError> {
        self.check_dim(x)?;
        Ok(self
            .terms(x)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(w, m), (f, kd)| {
                (w.min(f + kd), m.max(f - kd))
            }))
    }

    /// Standard-index value anchored at the training minimum. Available for
    /// every model; uses the model's `K`.
    pub fn standard(&self, x: &[f64]) -> Result<f64, ExtensionError> {
        self.check_dim(x)?;
        let anchor = self.training.argmin();
        let inf = self.training.values()[anchor];
        let d = self
            .metric
            .distance_unchecked(&self.training.points()[anchor], x);
        Ok(inf + self.lipschitz * d)
    }

    /// Evaluates the fitted method.
    pub fn predict(&self, x: &[f64]) -> Result<f64, ExtensionError> {
        match self.method {
            FittedMethod::Mcshane => self.mcshane(x),
            FittedMethod::Whitney => self.whitney(x),
            FittedMethod::Blend { alpha } => self.blend(x, alpha),
            FittedMethod::Standard { .. } => self.standard(x),
        }
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, ExtensionError> {
        if xs.len() >= PARALLEL_MIN_QUERIES {
            xs.par_iter().map(|x| self.predict(x)).collect()
        } else {
            xs.iter().map(|x| self.predict(x)).collect()
        }
    }

    /// Same model with a different method; keeps the training rows and `K`.
    pub fn with_kind(&self, kind: ExtensionKind) -> Result<Self, ExtensionError> {
        Self::with_constant(
            self.training.clone(),
            self.metric.clone(),
            self.lipschitz,
            kind,
        )
    }
}

/// Standard-index identification: shift the index to minimum zero, anchor
/// at the minimizing row `a₀` and predict `min I + K·d_φ(a₀, ·)`.
pub fn standard_index_fit(
    training: IndexedSample,
    metric: CompositionMetric,
) -> Result<ExtensionModel, ExtensionError> {
    if training.len() < 2 {
        return Err(ConstantsError::TooFewRows(training.len(), 2).into());
    }
    ExtensionModel::fit(training, metric, ExtensionKind::Standard)
}

fn check_alpha(alpha: f64) -> Result<(), ExtensionError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(ExtensionError::AlphaOutOfRange(alpha))
    }
}

#[inline]
pub fn blend_value(whitney: f64, mcshane: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * whitney + alpha * mcshane
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha: f64,
    /// Whitney and McShane agree everywhere; every weight is optimal and
    /// 0.5 is reported.
    pub degenerate: bool,
}

/// Least-squares blend weight
/// `α₀ = Σ(W − I)(W − M) / Σ(W − M)²`, clamped to `[0, 1]`.
///
/// The squared error is a convex quadratic in `α`, so clamping the
/// stationary point gives the minimizer over the interval.
pub fn optimal_alpha(
    truth: &[f64],
    whitney: &[f64],
    mcshane: &[f64],
) -> Result<AlphaFit, ExtensionError> {
    if truth.is_empty() || truth.len() != whitney.len() || truth.len() != mcshane.len() {
        return Err(ExtensionError::AlphaInput(
            truth.len(),
            whitney.len(),
            mcshane.len(),
        ));
    }
    let (num, den) =
        truth
            .iter()
            .zip(whitney)
            .zip(mcshane)
            .fold((0.0, 0.0), |(num, den), ((&i, &w), &m)| {
                let gap = w - m;
                (num + (w - i) * gap, den + gap * gap)
            });
    if den == 0.0 {
        return Ok(AlphaFit {
            alpha: 0.5,
            degenerate: true,
        });
    }
    Ok(AlphaFit {
        alpha: (num / den).clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// `Σ (I − ((1 − α)W + αM))²`.
pub fn blend_sse(truth: &[f64], whitney: &[f64], mcshane: &[f64], alpha: f64) -> f64 {
    truth
        .iter()
        .zip(whitney)
        .zip(mcshane)
        .map(|((&i, &w), &m)| {
            let r = i - blend_value(w, m, alpha);
            r * r
        })
        .sum()
}

//! Base metrics on feature vectors and their composition with a modulus.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phi::PhiCombination;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("unknown metric `{0}` (expected euclidean, manhattan or chebyshev)")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMetric {
    #[default]
    Euclidean,
    Manhattan,
    Chebyshev,
}

impl BaseMetric {
    pub const ALL: [BaseMetric; 3] = [
        BaseMetric::Euclidean,
        BaseMetric::Manhattan,
        BaseMetric::Chebyshev,
    ];

    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
        if a.len() != b.len() {
            return Err(MetricError::DimensionMismatch(a.len(), b.len()));
        }
        Ok(self.distance_unchecked(a, b))
    }

    /// Distance for vectors already known to share a dimension.
    #[inline]
    pub fn distance_unchecked(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            BaseMetric::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            BaseMetric::Manhattan => diffs.sum(),
            BaseMetric::Chebyshev => diffs.fold(0.0, f64::max),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseMetric::Euclidean => "euclidean",
            BaseMetric::Manhattan => "manhattan",
            BaseMetric::Chebyshev => "chebyshev",
        }
    }
}

impl fmt::Display for BaseMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaseMetric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaseMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| MetricError::Unknown(s.to_string()))
    }
}

/// `d_φ(a, b) = φ(d(a, b))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionMetric {
    pub base: BaseMetric,
    pub phi: PhiCombination,
}

impl CompositionMetric {
    pub fn new(base: BaseMetric, phi: PhiCombination) -> Self {
        Self { base, phi }
    }

    /// The base metric itself (`φ = identity`).
    pub fn plain(base: BaseMetric) -> Self {
        Self::new(base, PhiCombination::identity())
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
        self.base.distance(a, b).map(|d| self.phi.apply(d))
    }

    #[inline]
    pub fn distance_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        self.phi.apply(self.base.distance_unchecked(a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phi::PhiAtom;

    #[test]
    fn zero_distance_to_self() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(BaseMetric::Euclidean.distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn new_york_to_chicago() {
        let nyc = [88.0, 88.6, 69.3];
        let chicago = [77.2, 65.0, 72.2];
        let d = BaseMetric::Euclidean.distance(&nyc, &chicago).unwrap();
        // independent route: the squared components summed by hand
        let by_hand = (10.8f64.powi(2) + 23.6f64.powi(2) + 2.9f64.powi(2)).sqrt();
        assert!((by_hand - 682.01f64.sqrt()).abs() < 1e-9);
        assert!((d - by_hand).abs() < 1e-9);
        assert!((d - 26.1153).abs() < 1e-4);
    }

    #[test]
    fn manhattan_unit_square_diagonal() {
        assert_eq!(
            BaseMetric::Manhattan
                .distance(&[0.0, 0.0], &[1.0, 1.0])
                .unwrap(),
            2.0
        );
        assert_eq!(
            BaseMetric::Chebyshev
                .distance(&[0.0, 0.0], &[1.0, 3.0])
                .unwrap(),
            3.0
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert_eq!(
            BaseMetric::Euclidean.distance(&[0.0], &[0.0, 1.0]),
            Err(MetricError::DimensionMismatch(1, 2))
        );
        let cm = CompositionMetric::plain(BaseMetric::Manhattan);
        assert!(cm.distance(&[0.0], &[]).is_err());
    }

    #[test]
    fn log1p_composition_hits_one() {
        let cm = CompositionMetric::new(
            BaseMetric::Euclidean,
            PhiCombination::single(PhiAtom::Log1p),
        );
        let b = [std::f64::consts::E - 1.0];
        assert!((cm.distance(&[0.0], &b).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cm.distance(&b, &b).unwrap(), 0.0);
    }

    #[test]
    fn names_parse() {
        for m in BaseMetric::ALL {
            assert_eq!(m.name().parse::<BaseMetric>().unwrap(), m);
        }
        assert!("cosine".parse::<BaseMetric>().is_err());
        assert_eq!(
            serde_json::to_string(&BaseMetric::Chebyshev).unwrap(),
            "\"chebyshev\""
        );
    }
}

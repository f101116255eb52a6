//! Finite-sample index constants.
//!
//! For an index `I` on points `a₁..aₙ` and a composition metric `d_φ`:
//!
//! * coherence `K = max |I(aᵢ) − I(aⱼ)| / d_φ(aᵢ, aⱼ)`, the least Lipschitz
//!   constant of `I` with respect to `d_φ`;
//! * normalization `Q = max d_φ(aᵢ, aⱼ) / (|I(aᵢ)| + |I(aⱼ)|)`, the least `Q`
//!   making `I` a Katetov-type function;
//! * bound `C = max |I(aᵢ)|`.
//!
//! When `min I = 0`, the standard-index approximation and the Whitney
//! extension are both within `(K·Q − 1)·C` of `I`.
//!
//! Infinite constants are values, not errors: a swarm objective needs to see
//! them as `+∞` and move on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{BaseMetric, CompositionMetric};
use crate::phi::PhiCombination;

/// Rows per sample above which the pair scan is split across threads.
const PARALLEL_MIN_ROWS: usize = 96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstantsError {
    #[error("sample has {0} rows; at least {1} required")]
    TooFewRows(usize, usize),
    #[error("{points} points but {values} index values")]
    LengthMismatch { points: usize, values: usize },
    #[error("row {row} has dimension {found}, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("row {0} holds a non-finite value")]
    NonFinite(usize),
    #[error("error bound needs finite, non-negative K, Q and C (got K={k}, Q={q}, C={c})")]
    BadBoundInput { k: f64, q: f64, c: f64 },
}

/// Points with known index values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedSample {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl IndexedSample {
    /// Requires at least one row, a shared dimension and finite entries.
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self, ConstantsError> {
        if points.len() != values.len() {
            return Err(ConstantsError::LengthMismatch {
                points: points.len(),
                values: values.len(),
            });
        }
        if points.is_empty() {
            return Err(ConstantsError::TooFewRows(0, 1));
        }
        let dim = points[0].len();
        for (row, (p, v)) in points.iter().zip(&values).enumerate() {
            if p.len() != dim {
                return Err(ConstantsError::Ragged {
                    row,
                    found: p.len(),
                    expected: dim,
                });
            }
            if !v.is_finite() || p.iter().any(|x| !x.is_finite()) {
                return Err(ConstantsError::NonFinite(row));
            }
        }
        Ok(Self { points, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Row holding the smallest value; ties go to the lowest row.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Rows `idx` of this sample, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
        }
    }

    fn require(&self, min_rows: usize) -> Result<(), ConstantsError> {
        if self.len() < min_rows {
            Err(ConstantsError::TooFewRows(self.len(), min_rows))
        } else {
            Ok(())
        }
    }
}

/// A max-ratio constant and the row pair attaining it.
///
/// `value` may be `+∞`. `pair` is `None` only when every pair was skipped
/// (all points coincide with equal values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConstant {
    #[serde(with = "crate::serde_inf")]
    pub value: f64,
    pub pair: Option<(usize, usize)>,
}

impl PairConstant {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    fn better_than(&self, other: &Self) -> bool {
        match (self.pair, other.pair) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(a), Some(b)) => self.value > other.value || (self.value == other.value && a < b),
        }
    }
}

const EMPTY: PairConstant = PairConstant {
    value: 0.0,
    pair: None,
};

/// Max of `ratio(i, j)` over `i < j`, skipping pairs that yield `None`; ties
/// resolve to the lexicographically smallest pair, independent of how rows
/// are split across threads.
fn scan_pairs<R>(n: usize, ratio: R) -> PairConstant
where
    R: Fn(usize, usize) -> Option<f64> + Sync,
{
    let row = |i: usize| {
        let mut best = EMPTY;
        for j in (i + 1)..n {
            if let Some(value) = ratio(i, j) {
                let cand = PairConstant {
                    value,
                    pair: Some((i, j)),
                };
                if cand.better_than(&best) {
                    best = cand;
                }
            }
        }
        best
    };
    let pick = |a: PairConstant, b: PairConstant| if b.better_than(&a) { b } else { a };
    if n >= PARALLEL_MIN_ROWS {
        (0..n).into_par_iter().map(row).reduce(|| EMPTY, pick)
    } else {
        (0..n).map(row).fold(EMPTY, pick)
    }
}

fn coherence_term(vi: f64, vj: f64, d: f64) -> Option<f64> {
    let diff = (vi - vj).abs();
    if d > 0.0 {
        Some(diff / d)
    } else if diff > 0.0 {
        Some(f64::INFINITY)
    } else {
        None
    }
}

fn normalization_term(vi: f64, vj: f64, d: f64) -> Option<f64> {
    let denom = vi.abs() + vj.abs();
    if denom > 0.0 {
        Some(d / denom)
    } else if d > 0.0 {
        Some(f64::INFINITY)
    } else {
        None
    }
}

/// Coherence constant `K`; `+∞` when two coincident points carry different
/// values (the index is not φ-coherent).
pub fn coherence_constant(
    s: &IndexedSample,
    cm: &CompositionMetric,
) -> Result<PairConstant, ConstantsError> {
    s.require(2)?;
    let (p, v) = (s.points(), s.values());
    Ok(scan_pairs(s.len(), |i, j| {
        coherence_term(v[i], v[j], cm.distance_unchecked(&p[i], &p[j]))
    }))
}

/// Normalization constant `Q`; `+∞` when two distinct points both have
/// index zero.
pub fn normalization_constant(
    s: &IndexedSample,
    cm: &CompositionMetric,
) -> Result<PairConstant, ConstantsError> {
    s.require(2)?;
    let (p, v) = (s.points(), s.values());
    Ok(scan_pairs(s.len(), |i, j| {
        normalization_term(v[i], v[j], cm.distance_unchecked(&p[i], &p[j]))
    }))
}

/// `C = max |I|`.
pub fn bound_constant(s: &IndexedSample) -> f64 {
    s.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub value: f64,
    /// `K·Q < 1`: outside the regime the bound is derived for; value is 0.
    pub kq_below_one: bool,
}

/// `(K·Q − 1)·C`, clamped to zero (with a flag and a warning) when
/// `K·Q < 1`.
pub fn error_bound(k: f64, q: f64, c: f64) -> Result<ErrorBound, ConstantsError> {
    let ok = |x: f64| x.is_finite() && x >= 0.0;
    if !(ok(k) && ok(q) && ok(c)) {
        return Err(ConstantsError::BadBoundInput { k, q, c });
    }
    let kq = k * q;
    if kq < 1.0 {
        log::warn!("K*Q = {kq} < 1; error bound reported as 0");
        return Ok(ErrorBound {
            value: 0.0,
            kq_below_one: true,
        });
    }
    Ok(ErrorBound {
        value: (kq - 1.0) * c,
        kq_below_one: false,
    })
}

/// Subtracts `min I` from every value.
pub fn katetov_shift(s: &IndexedSample) -> IndexedSample {
    let min = s.min_value();
    IndexedSample {
        points: s.points.clone(),
        values: s.values.iter().map(|v| v - min).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub rows: usize,
    pub coherence: PairConstant,
    pub normalization: PairConstant,
    pub bound: f64,
    #[serde(with = "crate::serde_inf")]
    pub kq: f64,
    #[serde(with = "crate::serde_inf")]
    pub error_bound: f64,
    pub kq_below_one: bool,
    pub min_index: f64,
}

pub fn constants_report(
    s: &IndexedSample,
    cm: &CompositionMetric,
) -> Result<ConstantsReport, ConstantsError> {
    let coherence = coherence_constant(s, cm)?;
    let normalization = normalization_constant(s, cm)?;
    let bound = bound_constant(s);
    let (kq, error_bound, kq_below_one) = if coherence.is_finite() && normalization.is_finite() {
        let eb = error_bound(coherence.value, normalization.value, bound)?;
        (
            coherence.value * normalization.value,
            eb.value,
            eb.kq_below_one,
        )
    } else {
        (f64::INFINITY, f64::INFINITY, false)
    };
    Ok(ConstantsReport {
        rows: s.len(),
        coherence,
        normalization,
        bound,
        kq,
        error_bound,
        kq_below_one,
        min_index: s.min_value(),
    })
}

/// Base distances of a sample, computed once so that `K(φ)` and `Q(φ)` can be
/// re-evaluated cheaply for many moduli over the same points.
#[derive(Debug, Clone)]
pub struct PairwiseBase {
    n: usize,
    // row-major strict upper triangle
    dists: Vec<f64>,
}

impl PairwiseBase {
    pub fn new(points: &[Vec<f64>], base: BaseMetric) -> Self {
        let n = points.len();
        let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                dists.push(base.distance_unchecked(&points[i], &points[j]));
            }
        }
        Self { n, dists }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        // rows before i contribute (n-1) + (n-2) + ... + (n-i) entries
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dists[self.offset(i, j)]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(K, Q)` for `values` under `φ ∘ base`.
    pub fn constants(&self, phi: &PhiCombination, values: &[f64]) -> (PairConstant, PairConstant) {
        assert_eq!(values.len(), self.n);
        let k = scan_pairs(self.n, |i, j| {
            coherence_term(values[i], values[j], phi.apply(self.get(i, j)))
        });
        let q = scan_pairs(self.n, |i, j| {
            normalization_term(values[i], values[j], phi.apply(self.get(i, j)))
        });
        (k, q)
    }
}

//! Splitting, fitting, repeated cross-validation and ranking.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::constants::{katetov_shift, ConstantsError, IndexedSample};
use crate::dataset::DataError;
use crate::extension::{optimal_alpha, AlphaFit, ExtensionError, ExtensionKind, ExtensionModel};
use crate::linear::{linear_fit, LinearModel};
use crate::metric::{BaseMetric, CompositionMetric};
use crate::phi::{PhiAtom, PhiCombination, PhiError};
use crate::swarm::{optimize_phi, KqObjective, Objective, PsoConfig, SwarmError, SwarmResult};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Extension(#[from] ExtensionError),
    #[error(transparent)]
    Swarm(#[from] SwarmError),
    #[error(transparent)]
    Phi(#[from] PhiError),
    #[error("cannot split {n} rows with train fraction {fraction}: one side would be empty")]
    Split { n: usize, fraction: f64 },
    #[error("prediction and truth lengths differ or are empty ({0} vs {1})")]
    Lengths(usize, usize),
    #[error("every one of the {0} repeats failed (index not φ-coherent on the training split)")]
    AllRepeatsFailed(usize),
    #[error("repeats must be at least 1")]
    NoRepeats,
}

impl From<ConstantsError> for PipelineError {
    fn from(e: ConstantsError) -> Self {
        PipelineError::Extension(e.into())
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mcshane,
    Whitney,
    #[default]
    Blend,
    Standard,
    Linear,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mcshane => "mcshane",
            Method::Whitney => "whitney",
            Method::Blend => "blend",
            Method::Standard => "standard",
            Method::Linear => "linear",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fixed modulus, or `"optimize"` to choose coefficients with the swarm.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiSpec {
    Fixed(PhiCombination),
    Optimize,
}

impl Default for PhiSpec {
    fn default() -> Self {
        PhiSpec::Fixed(PhiCombination::identity())
    }
}

impl Serialize for PhiSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PhiSpec::Fixed(phi) => phi.serialize(s),
            PhiSpec::Optimize => s.serialize_str("optimize"),
        }
    }
}

impl<'de> Deserialize<'de> for PhiSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            Phi(PhiCombination),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "optimize" => Ok(PhiSpec::Optimize),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a modulus object or \"optimize\", got \"{w}\""
            ))),
            Raw::Phi(phi) => Ok(PhiSpec::Fixed(phi)),
        }
    }
}

impl FromStr for PhiSpec {
    type Err = serde_json::Error;

    /// Accepts `optimize` or a JSON modulus object.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "optimize" {
            return Ok(PhiSpec::Optimize);
        }
        serde_json::from_str(s)
    }
}

/// Where the blend weight is estimated when none is fixed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSource {
    /// On the evaluation split itself.
    #[default]
    Test,
    /// On an inner split of the training rows only.
    NestedTrain,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Seeded uniform shuffle.
    #[default]
    Random,
    /// The first rows in file order train, the rest test. With rows sorted by
    /// importance (e.g. population) this is the "top-k train" split.
    FileOrder,
}

/// Everything needed to fit a predictor on a sample of scaled features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub method: Method,
    pub metric: BaseMetric,
    pub phi: PhiSpec,
    /// Atoms searched when `phi` is `"optimize"`.
    pub atoms: Vec<PhiAtom>,
    pub pso: PsoConfig,
    /// Fixed blend weight; estimated when absent.
    pub alpha: Option<f64>,
    pub alpha_source: AlphaSource,
    /// Used for the internal split when a weight or a test-RMSE objective
    /// has to be estimated from a single sample.
    pub train_fraction: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            method: Method::Blend,
            metric: BaseMetric::Euclidean,
            phi: PhiSpec::default(),
            atoms: PhiAtom::PHI_BASIS.to_vec(),
            pso: PsoConfig::default(),
            alpha: None,
            alpha_source: AlphaSource::Test,
            train_fraction: 0.7,
        }
    }
}

/// Seeded split of `0..n` into sorted `(train, test)` with
/// `round(n · fraction)` training rows.
pub fn split_indices(
    n: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), PipelineError> {
    let k = train_size(n, fraction)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = perm[..k].to_vec();
    let mut test = perm[k..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn train_size(n: usize, fraction: f64) -> Result<usize, PipelineError> {
    let err = PipelineError::Split { n, fraction };
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(err);
    }
    let k = (n as f64 * fraction).round() as usize;
    if k == 0 || k >= n {
        return Err(err);
    }
    Ok(k)
}

pub fn split(
    n: usize,
    fraction: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<(Vec<usize>, Vec<usize>), PipelineError> {
    match mode {
        SplitMode::Random => split_indices(n, fraction, seed),
        SplitMode::FileOrder => {
            let k = train_size(n, fraction)?;
            Ok(((0..k).collect(), (k..n).collect()))
        }
    }
}

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<(), PipelineError> {
    if pred.is_empty() || pred.len() != truth.len() {
        Err(PipelineError::Lengths(pred.len(), truth.len()))
    } else {
        Ok(())
    }
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, PipelineError> {
    check_lengths(pred, truth)?;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, PipelineError> {
    check_lengths(pred, truth)?;
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / pred.len() as f64)
}

/// Symmetric MAPE as a fraction in `[0, 2]`; a `0/0` term counts as 0.
pub fn smape(pred: &[f64], truth: &[f64]) -> Result<f64, PipelineError> {
    check_lengths(pred, truth)?;
    let total: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let denom = p.abs() + t.abs();
            if denom == 0.0 {
                0.0
            } else {
                2.0 * (p - t).abs() / denom
            }
        })
        .sum();
    Ok(total / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Predictor {
    Extension(ExtensionModel),
    Linear(LinearModel),
}

impl Predictor {
    pub fn predict(&self, x: &[f64]) -> Result<f64, ExtensionError> {
        match self {
            Predictor::Extension(m) => m.predict(x),
            Predictor::Linear(m) => Ok(m.predict(x)),
        }
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, ExtensionError> {
        match self {
            Predictor::Extension(m) => m.predict_many(xs),
            Predictor::Linear(m) => Ok(xs.iter().map(|x| m.predict(x)).collect()),
        }
    }

    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Predictor::Extension(m) => Some(m.lipschitz()),
            Predictor::Linear(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub predictor: Predictor,
    /// Modulus in use (absent for the linear baseline).
    pub phi: Option<PhiCombination>,
    pub swarm: Option<SwarmResult>,
    pub alpha: Option<AlphaFit>,
}

fn whitney_mcshane_on(
    model: &ExtensionModel,
    sample: &IndexedSample,
) -> Result<(Vec<f64>, Vec<f64>), ExtensionError> {
    sample
        .points()
        .iter()
        .map(|x| model.whitney_mcshane(x))
        .collect::<Result<Vec<_>, _>>()
        .map(|pairs| pairs.into_iter().unzip())
}

/// Fits on `train` and returns the optimal blend weight measured on
/// `holdout`, or `None` when `K` is infinite.
fn blend_on_holdout(
    train: &IndexedSample,
    holdout: &IndexedSample,
    cm: CompositionMetric,
) -> Result<Option<(ExtensionModel, AlphaFit)>, ExtensionError> {
    let model = match ExtensionModel::fit(train.clone(), cm, ExtensionKind::Whitney) {
        Ok(m) => m,
        Err(ExtensionError::NotCoherent(..)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (w, m) = whitney_mcshane_on(&model, holdout)?;
    let fit = optimal_alpha(holdout.values(), &w, &m)?;
    Ok(Some((model, fit)))
}

/// `λ ↦` RMSE on `holdout` of the extension fitted on `train`, blended with
/// the weight that is optimal on `holdout`. `+∞` when `K` is infinite.
pub fn test_rmse_objective<'a>(
    train: &'a IndexedSample,
    holdout: &'a IndexedSample,
    base: BaseMetric,
    atoms: &'a [PhiAtom],
) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |lambda: &[f64]| {
        let Ok(phi) = PhiCombination::new(atoms.to_vec(), lambda.to_vec()) else {
            return f64::INFINITY;
        };
        let cm = CompositionMetric::new(base, phi);
        let Ok(Some((model, fit))) = blend_on_holdout(train, holdout, cm) else {
            return f64::INFINITY;
        };
        let pred: Result<Vec<f64>, _> = holdout
            .points()
            .iter()
            .map(|x| model.blend(x, fit.alpha))
            .collect();
        match pred {
            Ok(p) => rmse(&p, holdout.values()).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    }
}

fn inner_split(
    train: &IndexedSample,
    fraction: f64,
    seed: u64,
) -> Option<(IndexedSample, IndexedSample)> {
    if train.len() < 3 {
        return None;
    }
    let (a, b) = split_indices(train.len(), fraction, seed).ok()?;
    if a.len() < 2 {
        return None;
    }
    Some((train.select(&a), train.select(&b)))
}

/// Resolves the modulus for `train`: either the fixed one, or the swarm's
/// choice under the configured objective.
pub fn resolve_phi(
    train: &IndexedSample,
    holdout: Option<&IndexedSample>,
    spec: &ModelSpec,
    seed: u64,
) -> Result<(PhiCombination, Option<SwarmResult>), PipelineError> {
    let PhiSpec::Fixed(phi) = &spec.phi else {
        let cfg = PsoConfig {
            seed: spec.pso.seed.wrapping_add(seed),
            ..spec.pso.clone()
        };
        let (phi, result) = match cfg.objective {
            Objective::KqBound => {
                let obj = KqObjective::new(&katetov_shift(train), spec.metric, &spec.atoms);
                optimize_phi(&|l: &[f64]| obj.evaluate(l), &spec.atoms, &cfg)?
            }
            Objective::TestRmse => {
                let (inner_train, inner_test);
                let (fit_on, score_on) = match holdout {
                    Some(h) => (train, h),
                    None => {
                        (inner_train, inner_test) = inner_split(train, spec.train_fraction, seed)
                            .ok_or(PipelineError::Split {
                            n: train.len(),
                            fraction: spec.train_fraction,
                        })?;
                        (&inner_train, &inner_test)
                    }
                };
                let obj = test_rmse_objective(fit_on, score_on, spec.metric, &spec.atoms);
                optimize_phi(&obj, &spec.atoms, &cfg)?
            }
        };
        return Ok((phi, Some(result)));
    };
    Ok((phi.clone(), None))
}

/// Fits the configured predictor on `train`.
///
/// `holdout` is the evaluation split when called from cross-validation; it
/// is used for the blend weight (with [`AlphaSource::Test`]) and for the
/// test-RMSE swarm objective. Without it those are estimated on an inner
/// split of `train`.
pub fn fit_predictor(
    train: &IndexedSample,
    holdout: Option<&IndexedSample>,
    spec: &ModelSpec,
    seed: u64,
) -> Result<Fitted, PipelineError> {
    if spec.method == Method::Linear {
        return Ok(Fitted {
            predictor: Predictor::Linear(linear_fit(train)),
            phi: None,
            swarm: None,
            alpha: None,
        });
    }
    let (phi, swarm) = resolve_phi(train, holdout, spec, seed)?;
    let cm = CompositionMetric::new(spec.metric, phi.clone());
    let mut alpha = None;
    let kind = match spec.method {
        Method::Mcshane => ExtensionKind::Mcshane,
        Method::Whitney => ExtensionKind::Whitney,
        Method::Standard => ExtensionKind::Standard,
        Method::Blend => {
            let fit = match (spec.alpha, spec.alpha_source, holdout) {
                (Some(a), _, _) => AlphaFit {
                    alpha: a,
                    degenerate: false,
                },
                (None, AlphaSource::Test, Some(h)) => blend_on_holdout(train, h, cm.clone())?
                    .map(|(_, f)| f)
                    .ok_or_else(|| not_coherent(train, &cm))?,
                (None, _, _) => match inner_split(train, spec.train_fraction, seed) {
                    Some((a, b)) => blend_on_holdout(&a, &b, cm.clone())?
                        .map(|(_, f)| f)
                        .ok_or_else(|| not_coherent(&a, &cm))?,
                    None => {
                        log::warn!(
                            "{} training rows are too few to estimate the blend weight; using 0.5",
                            train.len()
                        );
                        AlphaFit {
                            alpha: 0.5,
                            degenerate: true,
                        }
                    }
                },
            };
            alpha = Some(fit);
            ExtensionKind::Blend { alpha: fit.alpha }
        }
        Method::Linear => unreachable!(),
    };
    let model = ExtensionModel::fit(train.clone(), cm, kind)?;
    Ok(Fitted {
        predictor: Predictor::Extension(model),
        phi: Some(phi),
        swarm,
        alpha,
    })
}

fn not_coherent(s: &IndexedSample, cm: &CompositionMetric) -> PipelineError {
    match ExtensionModel::fit(s.clone(), cm.clone(), ExtensionKind::Whitney) {
        Err(e) => e.into(),
        Ok(_) => ExtensionError::BadConstant(f64::INFINITY).into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub repeats: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub split: SplitMode,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            repeats: 20,
            seed: 0,
            train_fraction: 0.7,
            split: SplitMode::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    /// `None` when the repeat failed.
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub smape: Option<f64>,
    pub alpha: Option<f64>,
    pub lipschitz: Option<f64>,
    pub phi: Option<PhiCombination>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    pub repeats: usize,
    pub failed_repeats: usize,
    /// RMSE of each successful repeat, in repeat order.
    pub per_repeat_rmse: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (`n − 1` denominator; 0 for one repeat).
    pub std_dev: f64,
    /// Wall time of the whole run divided by the number of repeats.
    pub seconds_per_iteration: f64,
    pub records: Vec<RepeatRecord>,
}

/// `(mean, median, sample standard deviation)`.
pub fn summary_stats(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let std = if n > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, median, std)
}

/// Repeated train/test evaluation on the indexed rows of `sample`.
///
/// Repeat `r` splits with seed `seed + r`, fits on the training part and
/// scores RMSE on the test part. Repeats whose training split is not
/// φ-coherent (infinite `K`) are recorded as failed and left out of the
/// statistics.
pub fn cross_validate(
    sample: &IndexedSample,
    spec: &ModelSpec,
    opts: &CvOptions,
) -> Result<CvReport, PipelineError> {
    if opts.repeats == 0 {
        return Err(PipelineError::NoRepeats);
    }
    let start = Instant::now();
    let records = (0..opts.repeats)
        .into_par_iter()
        .map(|r| run_repeat(sample, spec, opts, r))
        .collect::<Result<Vec<_>, _>>()?;
    let elapsed = start.elapsed().as_secs_f64();

    let per_repeat_rmse: Vec<f64> = records.iter().filter_map(|r| r.rmse).collect();
    let failed_repeats = records.len() - per_repeat_rmse.len();
    if per_repeat_rmse.is_empty() {
        return Err(PipelineError::AllRepeatsFailed(opts.repeats));
    }
    if failed_repeats > 0 {
        log::warn!("{failed_repeats} of {} repeats failed", opts.repeats);
    }
    let (mean, median, std_dev) = summary_stats(&per_repeat_rmse);
    Ok(CvReport {
        method: spec.method,
        repeats: opts.repeats,
        failed_repeats,
        per_repeat_rmse,
        mean,
        median,
        std_dev,
        seconds_per_iteration: elapsed / opts.repeats as f64,
        records,
    })
}

fn run_repeat(
    sample: &IndexedSample,
    spec: &ModelSpec,
    opts: &CvOptions,
    r: usize,
) -> Result<RepeatRecord, PipelineError> {
    let seed = opts.seed.wrapping_add(r as u64);
    let (tr, te) = split(sample.len(), opts.train_fraction, seed, opts.split)?;
    let train = sample.select(&tr);
    let test = sample.select(&te);
    let mut record = RepeatRecord {
        repeat: r,
        seed,
        train_size: tr.len(),
        test_size: te.len(),
        rmse: None,
        mae: None,
        smape: None,
        alpha: None,
        lipschitz: None,
        phi: None,
        failure: None,
    };
    let fitted = match fit_predictor(&train, Some(&test), spec, seed) {
        Ok(f) => f,
        Err(PipelineError::Extension(e @ ExtensionError::NotCoherent(..))) => {
            record.failure = Some(e.to_string());
            return Ok(record);
        }
        Err(e) => return Err(e),
    };
    let pred = fitted.predictor.predict_many(test.points())?;
    record.rmse = Some(rmse(&pred, test.values())?);
    record.mae = Some(mae(&pred, test.values())?);
    record.smape = Some(smape(&pred, test.values())?);
    record.alpha = fitted.alpha.map(|a| a.alpha);
    record.lipschitz = fitted.predictor.lipschitz();
    record.phi = fitted.phi;
    Ok(record)
}

/// One row per repeat; columns
/// `repeat,seed,train_size,test_size,status,rmse,mae,smape,alpha,lipschitz`.
pub fn write_repeats_csv<W: std::io::Write>(report: &CvReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "repeat",
        "seed",
        "train_size",
        "test_size",
        "status",
        "rmse",
        "mae",
        "smape",
        "alpha",
        "lipschitz",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.records {
        w.write_record([
            r.repeat.to_string(),
            r.seed.to_string(),
            r.train_size.to_string(),
            r.test_size.to_string(),
            if r.rmse.is_some() { "ok" } else { "failed" }.to_string(),
            opt(r.rmse),
            opt(r.mae),
            opt(r.smape),
            opt(r.alpha),
            opt(r.lipschitz),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub rank: usize,
    pub id: String,
    pub value: f64,
}

/// Orders by predicted value, highest first; equal values by ascending id.
pub fn rank(ids: &[String], predictions: &[f64]) -> Vec<RankedRow> {
    let mut rows: Vec<(&String, f64)> = ids.iter().zip(predictions.iter().copied()).collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    rows.into_iter()
        .enumerate()
        .map(|(i, (id, value))| RankedRow {
            rank: i + 1,
            id: id.clone(),
            value,
        })
        .collect()
}

//! Command-line front end.
//!
//! Every command reads a CSV (`--data`), an optional JSON config
//! (`--config`) and flag overrides, writes its files into `--out`, and
//! returns a JSON summary for stdout.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::constants::{
    coherence_constant, constants_report, katetov_shift, ConstantsReport, IndexedSample,
};
use crate::dataset::{DataError, Dataset};
use crate::extension::ExtensionError;
use crate::metric::{BaseMetric, CompositionMetric};
use crate::model::ModelFile;
use crate::phi::{PhiAtom, PhiCombination};
use crate::pipeline::{
    cross_validate, fit_predictor, rank, resolve_phi, split_indices, test_rmse_objective,
    write_repeats_csv, Fitted, Method, PhiSpec, PipelineError, RankedRow,
};
use crate::swarm::{optimize_phi, KqObjective, Objective, PsoConfig, SwarmResult};

#[derive(Debug, Parser)]
#[command(
    name = "lipext",
    version,
    about = "Lipschitz index extension over composition metrics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coherence, normalization and bound constants of the indexed rows.
    Constants,
    /// Fit on all indexed rows and predict the unindexed ones.
    Extend,
    /// Repeated train/test evaluation.
    Cv,
    /// Choose modulus coefficients with the particle swarm.
    Optimize,
    /// Extend, then rank the unindexed rows by predicted value.
    Rank,
    /// Predict every row of `--data` with a saved model.
    Predict {
        /// Model file written by `extend`.
        #[arg(long)]
        model: PathBuf,
    },
}

/// Flags that override the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Input CSV: `id`, feature columns, `index` (empty when unknown).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<Method>,
    /// A JSON modulus object, or `optimize`.
    #[arg(long, global = true)]
    pub phi: Option<String>,
    /// Base metric: euclidean, manhattan or chebyshev.
    #[arg(long, global = true)]
    pub metric: Option<BaseMetric>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of train/test repeats for `cv`.
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub objective: Option<Objective>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Unfittable(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Parse(_) => "parse",
            CliError::Data(_) => "data",
            CliError::Unfittable(_) => "unfittable",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Data(_) => 5,
            CliError::Unfittable(_) => 6,
            CliError::Io(_) => 7,
        }
    }

    /// `error[<category>]: <message>` on a single line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.category(), msg)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Parse { .. } => CliError::Parse(e.to_string()),
            DataError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Data(d) => d.into(),
            PipelineError::Extension(ExtensionError::NotCoherent(..))
            | PipelineError::AllRepeatsFailed(_) => CliError::Unfittable(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ExtensionError> for CliError {
    fn from(e: ExtensionError) -> Self {
        PipelineError::from(e).into()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// JSON summary for stdout.
    pub stdout: String,
    pub files: Vec<PathBuf>,
}

/// Loads the config file (if any) and applies flag overrides.
pub fn resolve_config(o: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match &o.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &o.data {
        cfg.data = Some(d.clone());
    }
    if let Some(m) = o.method {
        cfg.method = m;
    }
    if let Some(p) = &o.phi {
        cfg.phi = p
            .parse::<PhiSpec>()
            .map_err(|e| ConfigError::Invalid(format!("--phi: {e}")))?;
    }
    if let Some(m) = o.metric {
        cfg.metric = m;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(r) = o.repeats {
        cfg.repeats = r;
    }
    if let Some(f) = o.train_fraction {
        cfg.train_fraction = f;
    }
    if let Some(out) = &o.out {
        cfg.out = out.clone();
    }
    if let Some(obj) = o.objective {
        cfg.pso.objective = obj;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = resolve_config(&cli.overrides)?;
    match &cli.command {
        Command::Constants => cmd_constants(&cfg),
        Command::Extend => cmd_extend(&cfg),
        Command::Cv => cmd_cv(&cfg),
        Command::Optimize => cmd_optimize(&cfg),
        Command::Rank => cmd_rank(&cfg),
        Command::Predict { model } => cmd_predict(&cfg, model),
    }
}

/// Reads `cfg.data` and scales it when configured.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("no input data; pass --data <csv>".into()))?;
    let ds = Dataset::from_csv_path(path)?;
    if cfg.scale {
        Ok(ds.minmax_scale(cfg.scale_fit)?)
    } else {
        Ok(ds)
    }
}

fn indexed(ds: &Dataset, min_rows: usize) -> Result<IndexedSample, CliError> {
    let s = ds.indexed_sample()?;
    if s.len() < min_rows {
        return Err(DataError::TooFewRows {
            needed: min_rows,
            found: s.len(),
        }
        .into());
    }
    Ok(s)
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(|e| io_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, to_json(value).as_bytes())
}

#[derive(Debug, Serialize)]
struct ConstantsOutput<'a> {
    metric: BaseMetric,
    phi: &'a PhiCombination,
    coherence_ids: Option<(&'a str, &'a str)>,
    normalization_ids: Option<(&'a str, &'a str)>,
    #[serde(flatten)]
    report: &'a ConstantsReport,
}

pub fn cmd_constants(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ds = load_dataset(cfg)?;
    let sample = indexed(&ds, 2)?;
    let ids = ds.indexed_ids();
    let (phi, _) = resolve_phi(&sample, None, &cfg.model_spec(), cfg.seed)?;
    let cm = CompositionMetric::new(cfg.metric, phi);
    let report = constants_report(&sample, &cm).map_err(ExtensionError::from)?;
    let pair_ids = |p: Option<(usize, usize)>| p.map(|(i, j)| (ids[i].as_str(), ids[j].as_str()));
    let out = ConstantsOutput {
        metric: cfg.metric,
        phi: &cm.phi,
        coherence_ids: pair_ids(report.coherence.pair),
        normalization_ids: pair_ids(report.normalization.pair),
        report: &report,
    };
    let path = cfg.out.join("constants.json");
    write_json(&path, &out)?;
    Ok(Outcome {
        stdout: to_json(&out),
        files: vec![path],
    })
}

/// Fit on every indexed row; infinite `K` is reported with the offending ids.
fn fit_all(
    cfg: &RunConfig,
    ds: &Dataset,
) -> Result<(IndexedSample, Vec<String>, Fitted), CliError> {
    let sample = indexed(ds, 2)?;
    let ids = ds.indexed_ids();
    match fit_predictor(&sample, None, &cfg.model_spec(), cfg.seed) {
        Ok(f) => Ok((sample, ids, f)),
        Err(PipelineError::Extension(ExtensionError::NotCoherent(..))) => {
            let k = coherence_constant(&sample, &CompositionMetric::plain(cfg.metric))
                .map_err(ExtensionError::from)?;
            let detail = k
                .pair
                .map(|(i, j)| {
                    format!(
                        ": rows `{}` and `{}` share features but not index values",
                        ids[i], ids[j]
                    )
                })
                .unwrap_or_default();
            Err(CliError::Unfittable(format!(
                "index is not φ-coherent (infinite K){detail}"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn predict_unindexed(ds: &Dataset, fitted: &Fitted) -> Result<(Vec<String>, Vec<f64>), CliError> {
    let rows = ds.unindexed_rows();
    if rows.is_empty() {
        log::warn!("no unindexed rows; nothing to predict");
    }
    let ids = rows.iter().map(|&i| ds.ids[i].clone()).collect();
    let points: Vec<Vec<f64>> = rows.iter().map(|&i| ds.features[i].clone()).collect();
    Ok((ids, fitted.predictor.predict_many(&points)?))
}

fn predictions_csv(ids: &[String], values: &[f64]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["id", "predicted_index"]).map_err(csv_err)?;
    for (id, v) in ids.iter().zip(values) {
        w.write_record([id.clone(), v.to_string()])
            .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

#[derive(Debug, Serialize)]
struct ExtendSummary<'a> {
    method: Method,
    phi: Option<&'a PhiCombination>,
    lipschitz: Option<f64>,
    alpha: Option<f64>,
    predicted_rows: usize,
    files: &'a [PathBuf],
}

pub fn cmd_extend(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ds = load_dataset(cfg)?;
    let (sample, train_ids, fitted) = fit_all(cfg, &ds)?;
    let (ids, values) = predict_unindexed(&ds, &fitted)?;
    let model = ModelFile::new(
        cfg.method,
        cfg.metric,
        ds.scaling.clone(),
        train_ids,
        &sample,
        fitted.predictor.clone(),
    );
    let pred_path = cfg.out.join("predictions.csv");
    let model_path = cfg.out.join("model.json");
    write_atomic(&pred_path, &predictions_csv(&ids, &values)?)?;
    write_json(&model_path, &model)?;
    let files = vec![pred_path, model_path];
    let summary = ExtendSummary {
        method: cfg.method,
        phi: fitted.phi.as_ref(),
        lipschitz: fitted.predictor.lipschitz(),
        alpha: fitted.alpha.map(|a| a.alpha),
        predicted_rows: ids.len(),
        files: &files,
    };
    Ok(Outcome {
        stdout: to_json(&summary),
        files,
    })
}

#[derive(Debug, Serialize)]
struct CvSummary {
    method: Method,
    repeats: usize,
    failed_repeats: usize,
    mean: f64,
    median: f64,
    std_dev: f64,
    seconds_per_iteration: f64,
}

pub fn cmd_cv(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ds = load_dataset(cfg)?;
    let sample = indexed(&ds, 3)?;
    let report = cross_validate(&sample, &cfg.model_spec(), &cfg.cv_options())?;
    let json_path = cfg.out.join("cv_report.json");
    let csv_path = cfg.out.join("cv_repeats.csv");
    write_json(&json_path, &report)?;
    let mut buf = Vec::new();
    write_repeats_csv(&report, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&csv_path, &buf)?;
    let summary = CvSummary {
        method: report.method,
        repeats: report.repeats,
        failed_repeats: report.failed_repeats,
        mean: report.mean,
        median: report.median,
        std_dev: report.std_dev,
        seconds_per_iteration: report.seconds_per_iteration,
    };
    Ok(Outcome {
        stdout: to_json(&summary),
        files: vec![json_path, csv_path],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct OptimizeOutput {
    pub objective: Objective,
    pub metric: BaseMetric,
    pub phi: PhiCombination,
    #[serde(with = "crate::serde_inf")]
    pub best_objective: f64,
    /// Objective at the identity modulus.
    #[serde(with = "crate::serde_inf")]
    pub identity_objective: f64,
    /// Objective at the swarm's seeded particle `(1, 0, ..., 0)`.
    #[serde(with = "crate::serde_inf")]
    pub seed_objective: f64,
    pub swarm: SwarmResult,
}

pub fn cmd_optimize(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ds = load_dataset(cfg)?;
    let sample = indexed(&ds, 2)?;
    let pso = PsoConfig {
        seed: cfg.pso.seed.wrapping_add(cfg.seed),
        ..cfg.pso.clone()
    };
    let mut seeded = vec![0.0; cfg.atoms.len()];
    seeded[0] = 1.0f64.min(pso.lambda_max);

    let (phi, swarm, identity_objective, seed_objective) = match pso.objective {
        Objective::KqBound => {
            let shifted = katetov_shift(&sample);
            let obj = KqObjective::new(&shifted, cfg.metric, &cfg.atoms);
            let identity = KqObjective::new(&shifted, cfg.metric, &[PhiAtom::Identity]);
            let (phi, swarm) = optimize_phi(&|l: &[f64]| obj.evaluate(l), &cfg.atoms, &pso)
                .map_err(PipelineError::from)?;
            (phi, swarm, identity.evaluate(&[1.0]), obj.evaluate(&seeded))
        }
        Objective::TestRmse => {
            let (tr, te) = split_indices(sample.len(), cfg.train_fraction, cfg.seed)?;
            let (train, test) = (sample.select(&tr), sample.select(&te));
            let obj = test_rmse_objective(&train, &test, cfg.metric, &cfg.atoms);
            let identity_atoms = [PhiAtom::Identity];
            let identity = test_rmse_objective(&train, &test, cfg.metric, &identity_atoms);
            let (phi, swarm) = optimize_phi(&obj, &cfg.atoms, &pso).map_err(PipelineError::from)?;
            (phi, swarm, identity(&[1.0]), obj(&seeded))
        }
    };
    let out = OptimizeOutput {
        objective: pso.objective,
        metric: cfg.metric,
        best_objective: swarm.best_objective,
        phi,
        identity_objective,
        seed_objective,
        swarm,
    };
    let phi_path = cfg.out.join("phi.json");
    let swarm_path = cfg.out.join("optimize.json");
    write_json(&phi_path, &out.phi)?;
    write_json(&swarm_path, &out)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        objective: Objective,
        phi: &'a PhiCombination,
        #[serde(with = "crate::serde_inf")]
        best_objective: f64,
        #[serde(with = "crate::serde_inf")]
        identity_objective: f64,
    }
    Ok(Outcome {
        stdout: to_json(&Summary {
            objective: out.objective,
            phi: &out.phi,
            best_objective: out.best_objective,
            identity_objective: out.identity_objective,
        }),
        files: vec![phi_path, swarm_path],
    })
}

pub fn ranking_csv(rows: &[RankedRow], method: Method) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["rank", "id", "predicted_index", "method"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.id.clone(),
            r.value.to_string(),
            method.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn cmd_rank(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ds = load_dataset(cfg)?;
    let (_, _, fitted) = fit_all(cfg, &ds)?;
    let (ids, values) = predict_unindexed(&ds, &fitted)?;
    let ranking = rank(&ids, &values);
    let path = cfg.out.join("ranking.csv");
    write_atomic(&path, &ranking_csv(&ranking, cfg.method)?)?;
    Ok(Outcome {
        stdout: to_json(&ranking),
        files: vec![path],
    })
}

pub fn cmd_predict(cfg: &RunConfig, model_path: &Path) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(model_path).map_err(|e| io_err(model_path, e))?;
    let model: ModelFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", model_path.display())))?;
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("no input data; pass --data <csv>".into()))?;
    // raw features: the model carries its own scaling
    let ds = Dataset::from_csv_path(path)?;
    let values = ds
        .features
        .iter()
        .map(|x| model.predict_raw(x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Data(e.to_string()))?;
    let out_path = cfg.out.join("predict.csv");
    write_atomic(&out_path, &predictions_csv(&ds.ids, &values)?)?;
    Ok(Outcome {
        stdout: to_json(&serde_json::json!({ "predicted_rows": values.len() })),
        files: vec![out_path],
    })
}

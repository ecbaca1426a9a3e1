//! End-to-end experiments: a frozen-tanh baseline against the spline
//! network, with repeated random splits, optional cross-validated grid
//! search over the regularization strengths, result tables and spline
//! export.
//!
//! # Output files
//!
//! [`write_outputs`] fills a directory with:
//!
//! | file | contents |
//! |------|----------|
//! | `config.json` | the [`ExperimentConfig`] that produced the results |
//! | `results.csv` | one [`RunRecord`] per (model, run) |
//! | `summary.csv` | one [`Aggregate`] row per model, columns `scenario,dataset,nonlinearity,runs,train_nrmse_mean,train_nrmse_std,test_nrmse_mean,test_nrmse_std,lambda_w_mean,lambda_q_mean` |
//! | `table.txt` | the summary as an aligned text table |
//! | `normalization/run_NN.json` | the [`Normalizer`] fitted for run `NN` |
//! | `traces/<model>_run_NN.csv` | the optimizer trace |
//! | `splines/<model>_run_NN_<layer><i>.csv` | `s,phi,dphi` samples (with `--export-splines`) |
//! | `splines/<model>_run_NN_<layer><i>_ordinates.csv` | `k,x,q` control points |

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    fold_train_indices, kfold, load_csv, nrmse, resolve_path, split, synthetic, Dataset, FoldSpec, Normalizer,
    SplitSpec,
};
use crate::error::{Error, Result};
use crate::network::{InitConfig, Layer, NetworkShape, ParamLayout, SafNetwork};
use crate::objective::Objective;
use crate::optim::{minimize_adam, minimize_ncg, AdamConfig, NcgConfig, OptTrace};
use crate::spline::{knots_for_range, KnotGrid, SplineBasis};

/// Environment variable naming the directory relative dataset paths are resolved against.
pub const DATA_DIR_ENV: &str = "SAF_DATA_DIR";

pub const MISSING_DATASET_HINT: &str = "\
California Housing: download cal_housing.tgz from https://www.dcc.fc.up.pt/~ltorgo/Regression/cal_housing.html, \
extract CaliforniaHousing/cal_housing.data and pass it with --dataset cal_housing.data --target-col 8 \
(or export sklearn.datasets.fetch_california_housing to CSV with the target as the last column). \
Chemical: in MATLAB run [x,t] = chemical_dataset; csvwrite('chemical.csv', [x' t']) and use --target-col 8. \
Relative paths are resolved against $SAF_DATA_DIR. Use --dataset synthetic to run without external data.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Frozen tanh-sampled grids, weights only.
    Standard,
    Saf,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Standard => "standard",
            ModelKind::Saf => "saf",
        }
    }

    /// Label used in result tables.
    pub fn nonlinearity(self) -> &'static str {
        match self {
            ModelKind::Standard => "tanh",
            ModelKind::Saf => "SAF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Ncg,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Fixed, strong weight decay.
    One,
    /// Cross-validated grid search over the regularization strengths.
    Two,
}

impl Scenario {
    pub fn number(self) -> u8 {
        match self {
            Scenario::One => 1,
            Scenario::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    Csv { path: PathBuf, target_columns: Vec<usize> },
    Synthetic { samples: usize, seed: u64 },
}

impl DatasetSource {
    pub fn label(&self) -> String {
        match self {
            DatasetSource::Csv { path, .. } => path
                .file_stem()
                .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()),
            DatasetSource::Synthetic { .. } => "synthetic".into(),
        }
    }
}

/// `2^j` for `j` in `lo..=hi`.
pub fn pow2_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|j| 2f64.powi(j)).collect()
}

/// The full exponential grid searched in scenario 2.
pub fn default_grid() -> Vec<f64> {
    pow2_grid(-10, 5)
}

/// A cheaper subset of [`default_grid`].
pub fn reduced_grid() -> Vec<f64> {
    [-10, -7, -4, -1, 2, 5].iter().map(|&j| 2f64.powi(j)).collect()
}

/// `10^j` for `j` in `-5..=1`.
pub fn decadic_grid() -> Vec<f64> {
    (-5..=1).map(|j| 10f64.powi(j)).collect()
}

/// Parses a regularization setting: a number, a comma-separated list, or
/// one of `grid`, `reduced`, `decadic`.
pub fn parse_lambda(s: &str) -> Result<Vec<f64>> {
    let values = match s.trim() {
        "grid" | "pow2" => default_grid(),
        "reduced" => reduced_grid(),
        "decadic" => decadic_grid(),
        list => list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("cannot parse lambda value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("lambda setting {s:?} must be non-negative and finite")));
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub dataset: DatasetSource,
    pub models: Vec<ModelKind>,
    pub hidden: usize,
    pub delta_x: f64,
    /// Knots cover `[-knot_range, knot_range]`.
    pub knot_range: f64,
    /// A single value for scenario 1, the search grid for scenario 2.
    pub lambda_w: Vec<f64>,
    /// As `lambda_w`; ignored by the standard model.
    pub lambda_q: Vec<f64>,
    pub optimizer: OptimizerKind,
    /// NCG line searches, or ADAM epochs.
    pub max_iter: usize,
    pub adam_batch: usize,
    pub runs: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub folds: usize,
    /// Fit the min/max scaling on the whole dataset instead of the training split.
    pub normalize_on_all_data: bool,
    pub init: InitConfig,
}

impl ExperimentConfig {
    pub fn scenario1(dataset: DatasetSource) -> Self {
        Self {
            scenario: Scenario::One,
            dataset,
            models: vec![ModelKind::Standard, ModelKind::Saf],
            hidden: 5,
            delta_x: 0.2,
            knot_range: 2.0,
            lambda_w: vec![1.0],
            lambda_q: vec![1e-5],
            optimizer: OptimizerKind::Ncg,
            max_iter: 1500,
            adam_batch: 32,
            runs: 15,
            seed: 0,
            test_fraction: 0.3,
            folds: 3,
            normalize_on_all_data: false,
            init: InitConfig::default(),
        }
    }

    pub fn scenario2(dataset: DatasetSource) -> Self {
        Self {
            scenario: Scenario::Two,
            lambda_w: default_grid(),
            lambda_q: default_grid(),
            ..Self::scenario1(dataset)
        }
    }

    pub fn num_knots(&self) -> Result<usize> {
        knots_for_range(self.knot_range, self.delta_x)
    }

    pub fn shape_for(&self, ds: &Dataset) -> Result<NetworkShape> {
        Ok(NetworkShape {
            inputs: ds.num_features(),
            hidden: self.hidden,
            outputs: ds.num_targets(),
            delta_x: self.delta_x,
            num_knots: self.num_knots()?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.num_knots()?;
        if self.models.is_empty() || self.runs == 0 || self.hidden == 0 || self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "models, runs, hidden and max_iter must all be non-empty/positive".into(),
            ));
        }
        if self.lambda_w.is_empty() || self.lambda_q.is_empty() {
            return Err(Error::InvalidArgument("lambda grids must be non-empty".into()));
        }
        if self.scenario == Scenario::One && (self.lambda_w.len() != 1 || self.lambda_q.len() != 1) {
            return Err(Error::InvalidArgument("scenario 1 takes a single lambda_w and lambda_q".into()));
        }
        if self.adam_batch == 0 {
            return Err(Error::InvalidArgument("ADAM batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Loads the configured dataset, resolving relative paths against [`DATA_DIR_ENV`].
pub fn load_dataset(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::Synthetic { samples, seed } => Ok(synthetic(*samples, *seed)),
        DatasetSource::Csv { path, target_columns } => {
            let dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
            let resolved = resolve_path(path, dir.as_deref());
            if !resolved.is_file() {
                return Err(Error::MissingDataset {
                    path: resolved,
                    hint: MISSING_DATASET_HINT.into(),
                });
            }
            let report = load_csv(&resolved, target_columns)?;
            if !report.skipped.is_empty() {
                log::warn!("{}: skipped {} malformed rows", resolved.display(), report.skipped.len());
            }
            Ok(report.dataset)
        }
    }
}

/// A trained network together with how it got there.
#[derive(Debug, Clone)]
pub struct Trained {
    pub network: SafNetwork,
    pub trace: OptTrace,
    /// Fraction of training-set activations that fell outside the knot range.
    pub clamped_fraction: f64,
}

/// Initial network for a model kind: Glorot weights, and either clean tanh
/// grids (standard) or perturbed ones (SAF).
pub fn initial_network(model: ModelKind, shape: NetworkShape, init: InitConfig, seed: u64) -> Result<SafNetwork> {
    let net = SafNetwork::init_glorot_with(shape, seed, init)?;
    match model {
        ModelKind::Standard => net.with_tanh_grids(),
        ModelKind::Saf => Ok(net),
    }
}

pub fn layout_for(model: ModelKind, shape: NetworkShape) -> ParamLayout {
    match model {
        ModelKind::Standard => ParamLayout::weights_only(shape),
        ModelKind::Saf => ParamLayout::full(shape),
    }
}

/// Trains one model on `train` starting from `start`.
pub fn train_from(
    model: ModelKind,
    start: SafNetwork,
    train: &Dataset,
    lambda_w: f64,
    lambda_q: f64,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Trained> {
    let shape = start.shape();
    let lambda_q = if model == ModelKind::Standard { 0.0 } else { lambda_q };
    let objective = Objective::new(
        start,
        layout_for(model, shape),
        train.inputs.clone(),
        train.targets.clone(),
        lambda_w,
        lambda_q,
        SafNetwork::tanh_anchor(shape)?,
    )?;
    let x0 = objective.initial_params();
    let result = match cfg.optimizer {
        OptimizerKind::Ncg => minimize_ncg(&objective, &x0, &NcgConfig::default().with_max_iterations(cfg.max_iter))?,
        OptimizerKind::Adam => minimize_adam(
            &objective,
            &x0,
            &AdamConfig {
                batch_size: cfg.adam_batch.min(train.len()),
                epochs: cfg.max_iter,
                seed,
                ..AdamConfig::default()
            },
        )?,
    };
    let network = objective.network_at(&result.params)?;
    let (_, cache) = network.forward(train.inputs.view())?;
    let clamped_fraction = cache.clamped_fraction();
    log::debug!(
        "{} trained: J = {:.6e} after {} iterations ({:?}), clamped activations {:.2}%",
        model.name(),
        result.value,
        result.trace.iterations(),
        result.trace.termination,
        100.0 * clamped_fraction
    );
    Ok(Trained {
        network,
        trace: result.trace,
        clamped_fraction,
    })
}

/// [`train_from`] with the model's standard initialization.
pub fn train_model(
    model: ModelKind,
    cfg: &ExperimentConfig,
    train: &Dataset,
    lambda_w: f64,
    lambda_q: f64,
    seed: u64,
) -> Result<Trained> {
    let start = initial_network(model, cfg.shape_for(train)?, cfg.init, seed)?;
    train_from(model, start, train, lambda_w, lambda_q, cfg, seed)
}

pub fn score(net: &SafNetwork, ds: &Dataset) -> Result<f64> {
    let pred = net.predict(ds.inputs.view())?;
    nrmse(pred.view(), ds.targets.view())
}

/// Normalized train/test data for one run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub train: Dataset,
    pub test: Dataset,
    pub normalizer: Normalizer,
}

pub fn prepare_run(ds: &Dataset, cfg: &ExperimentConfig, run: usize) -> Result<RunData> {
    let parts = split(
        ds.len(),
        &SplitSpec {
            test_fraction: cfg.test_fraction,
            seed: cfg.seed,
            run: run as u64,
        },
    )?;
    let train = ds.select(&parts.train);
    let test = ds.select(&parts.test);
    let normalizer = if cfg.normalize_on_all_data {
        Normalizer::fit(ds)
    } else {
        Normalizer::fit(&train)
    };
    Ok(RunData {
        train: normalizer.apply(&train)?,
        test: normalizer.apply(&test)?,
        normalizer,
    })
}

/// Seed for everything random inside one run other than the split.
pub fn run_seed(master: u64, run: usize) -> u64 {
    master ^ (run as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: u8,
    pub dataset: String,
    pub model: ModelKind,
    pub run: usize,
    pub lambda_w: f64,
    pub lambda_q: Option<f64>,
    pub cv_nrmse: Option<f64>,
    pub train_nrmse: f64,
    pub test_nrmse: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: String,
    pub clamped_fraction: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub record: RunRecord,
    pub network: SafNetwork,
    pub trace: OptTrace,
    pub normalizer: Normalizer,
}

impl RunResult {
    /// Final ordinates of every grid, layer by layer.
    pub fn grids(&self) -> Vec<Vec<f64>> {
        self.network
            .hidden()
            .iter()
            .chain(self.network.output())
            .map(|n| n.grid.ordinates().to_vec())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

/// Summary of all runs of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub scenario: u8,
    pub dataset: String,
    pub model: ModelKind,
    pub runs: usize,
    pub train: MeanStd,
    pub test: MeanStd,
    pub lambda_w: MeanStd,
    pub lambda_q: Option<MeanStd>,
}

pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut models: Vec<ModelKind> = records.iter().map(|r| r.model).collect();
    models.sort_unstable();
    models.dedup();
    models
        .into_iter()
        .map(|model| {
            let rows: Vec<&RunRecord> = records.iter().filter(|r| r.model == model).collect();
            let col = |f: &dyn Fn(&RunRecord) -> f64| mean_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            let lq: Vec<f64> = rows.iter().filter_map(|r| r.lambda_q).collect();
            Aggregate {
                scenario: rows[0].scenario,
                dataset: rows[0].dataset.clone(),
                model,
                runs: rows.len(),
                train: col(&|r| r.train_nrmse),
                test: col(&|r| r.test_nrmse),
                lambda_w: col(&|r| r.lambda_w),
                lambda_q: (lq.len() == rows.len()).then(|| mean_std(&lq)),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
}

impl ScenarioResult {
    pub fn records(&self) -> Vec<RunRecord> {
        self.runs.iter().map(|r| r.record.clone()).collect()
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        aggregate(&self.records())
    }

    pub fn aggregate_for(&self, model: ModelKind) -> Option<Aggregate> {
        self.aggregates().into_iter().find(|a| a.model == model)
    }
}

/// Dispatches on `cfg.scenario`.
pub fn run(cfg: &ExperimentConfig, ds: &Dataset) -> Result<ScenarioResult> {
    match cfg.scenario {
        Scenario::One => run_scenario1(cfg, ds),
        Scenario::Two => run_scenario2(cfg, ds),
    }
}

fn jobs(cfg: &ExperimentConfig) -> Vec<(usize, ModelKind)> {
    (0..cfg.runs)
        .flat_map(|r| cfg.models.iter().map(move |&m| (r, m)))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn finish_run(
    cfg: &ExperimentConfig,
    data: &RunData,
    model: ModelKind,
    run: usize,
    lambda_w: f64,
    lambda_q: f64,
    cv_nrmse: Option<f64>,
    started: Instant,
) -> Result<RunResult> {
    let trained = train_model(model, cfg, &data.train, lambda_w, lambda_q, run_seed(cfg.seed, run))?;
    let record = RunRecord {
        scenario: cfg.scenario.number(),
        dataset: cfg.dataset.label(),
        model,
        run,
        lambda_w,
        lambda_q: (model == ModelKind::Saf).then_some(lambda_q),
        cv_nrmse,
        train_nrmse: score(&trained.network, &data.train)?,
        test_nrmse: score(&trained.network, &data.test)?,
        iterations: trained.trace.iterations(),
        evaluations: trained.trace.evaluations,
        termination: format!("{:?}", trained.trace.termination),
        clamped_fraction: trained.clamped_fraction,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    log::info!(
        "scenario {} run {run} {}: train {:.4} test {:.4} ({} iterations, {:.1}% clamped, {:.1}s)",
        record.scenario,
        model.name(),
        record.train_nrmse,
        record.test_nrmse,
        record.iterations,
        100.0 * record.clamped_fraction,
        record.wall_time_s
    );
    Ok(RunResult {
        record,
        network: trained.network,
        trace: trained.trace,
        normalizer: data.normalizer.clone(),
    })
}

fn collect_sorted(mut runs: Vec<RunResult>) -> Vec<RunResult> {
    runs.sort_by_key(|r| (r.record.model, r.record.run));
    runs
}

/// Every model with the configured single `lambda_w` (and `lambda_q` for the
/// SAF model) over `cfg.runs` random splits.
pub fn run_scenario1(cfg: &ExperimentConfig, ds: &Dataset) -> Result<ScenarioResult> {
    cfg.validate()?;
    let (lw, lq) = (cfg.lambda_w[0], cfg.lambda_q[0]);
    let runs = jobs(cfg)
        .into_par_iter()
        .map(|(run, model)| {
            let started = Instant::now();
            let data = prepare_run(ds, cfg, run)?;
            finish_run(cfg, &data, model, run, lw, lq, None, started)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioResult {
        config: cfg.clone(),
        runs: collect_sorted(runs),
    })
}

/// One cell of a grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub lambda_w: f64,
    pub lambda_q: f64,
    pub score: f64,
}

/// The cell with the lowest score; ties go to the larger `lambda_w`, then
/// the larger `lambda_q`.
pub fn select_cell(cells: &[GridCell]) -> Option<GridCell> {
    cells.iter().copied().fold(None, |best: Option<GridCell>, c| match best {
        None => Some(c),
        Some(b) => {
            let better = c.score < b.score
                || (c.score == b.score && (c.lambda_w, c.lambda_q) > (b.lambda_w, b.lambda_q))
                || (b.score.is_nan() && !c.score.is_nan());
            Some(if better { c } else { b })
        }
    })
}

/// Mean held-out NRMSE of `model` over the folds of `train`.
pub fn cross_validate(
    model: ModelKind,
    cfg: &ExperimentConfig,
    train: &Dataset,
    folds: &[Vec<usize>],
    lambda_w: f64,
    lambda_q: f64,
    seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    for (k, held_out) in folds.iter().enumerate() {
        let fit = train.select(&fold_train_indices(folds, k));
        let val = train.select(held_out);
        let trained = train_model(model, cfg, &fit, lambda_w, lambda_q, seed)?;
        total += score(&trained.network, &val)?;
    }
    Ok(total / folds.len() as f64)
}

/// Grid search over `lambda_w` (and `lambda_q` for the SAF model) using
/// k-fold cross-validation on each training split, then retraining with
/// the winners and testing.
pub fn run_scenario2(cfg: &ExperimentConfig, ds: &Dataset) -> Result<ScenarioResult> {
    cfg.validate()?;
    let runs = jobs(cfg)
        .into_par_iter()
        .map(|(run, model)| {
            let started = Instant::now();
            let data = prepare_run(ds, cfg, run)?;
            let seed = run_seed(cfg.seed, run);
            let folds = kfold(data.train.len(), &FoldSpec { k: cfg.folds, seed })?;
            let q_grid: Vec<f64> = match model {
                ModelKind::Standard => vec![0.0],
                ModelKind::Saf => cfg.lambda_q.clone(),
            };
            let pairs: Vec<(f64, f64)> = cfg
                .lambda_w
                .iter()
                .flat_map(|&w| q_grid.iter().map(move |&q| (w, q)))
                .collect();
            let cells: Vec<GridCell> = pairs
                .into_par_iter()
                .map(|(lambda_w, lambda_q)| {
                    let score = cross_validate(model, cfg, &data.train, &folds, lambda_w, lambda_q, seed)
                        .unwrap_or_else(|e| {
                            log::warn!("cell lambda_w={lambda_w:e} lambda_q={lambda_q:e} failed: {e}");
                            f64::INFINITY
                        });
                    GridCell {
                        lambda_w,
                        lambda_q,
                        score,
                    }
                })
                .collect();
            let best = select_cell(&cells).expect("grids are non-empty");
            log::info!(
                "run {run} {}: selected lambda_w={:e} lambda_q={:e} (CV NRMSE {:.4})",
                model.name(),
                best.lambda_w,
                best.lambda_q,
                best.score
            );
            finish_run(cfg, &data, model, run, best.lambda_w, best.lambda_q, Some(best.score), started)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioResult {
        config: cfg.clone(),
        runs: collect_sorted(runs),
    })
}

pub const SUMMARY_HEADER: &str = "scenario,dataset,nonlinearity,runs,train_nrmse_mean,train_nrmse_std,\
test_nrmse_mean,test_nrmse_std,lambda_w_mean,lambda_q_mean";

pub fn summary_csv(aggregates: &[Aggregate]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for a in aggregates {
        let lq = a.lambda_q.map_or(String::new(), |m| format!("{:e}", m.mean));
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:e},{}",
            a.scenario,
            a.dataset,
            a.model.nonlinearity(),
            a.runs,
            a.train.mean,
            a.train.std,
            a.test.mean,
            a.test.std,
            a.lambda_w.mean,
            lq
        );
    }
    out
}

/// Aligned text table, one row per model. Scenario 2 tables also list the
/// selected regularization strengths averaged over the runs.
pub fn render_table(aggregates: &[Aggregate]) -> String {
    let with_lambdas = aggregates.iter().any(|a| a.scenario == 2);
    let pm = |m: MeanStd| format!("{:.3} ± {:.3}", m.mean, m.std);
    let mut rows = vec![vec![
        "Dataset".to_string(),
        "Nonlinearity".into(),
        "Train NRMSE".into(),
        "Test NRMSE".into(),
    ]];
    if with_lambdas {
        rows[0].extend(["lambda_w".to_string(), "lambda_q".into()]);
    }
    for a in aggregates {
        let mut row = vec![a.dataset.clone(), a.model.nonlinearity().into(), pm(a.train), pm(a.test)];
        if with_lambdas {
            row.push(format!("{:.3e}", a.lambda_w.mean));
            row.push(a.lambda_q.map_or("-".into(), |m| format!("{:.3e}", m.mean)));
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Per-run CSV, summary CSV and text table.
pub fn report(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&results)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&results, e))?;
    let aggregates = aggregate(records);
    let summary = dir.join("summary.csv");
    write_file(&summary, summary_csv(&aggregates).as_bytes())?;
    let table = dir.join("table.txt");
    write_file(&table, render_table(&aggregates).as_bytes())?;
    Ok(vec![results, summary, table])
}

/// `(s, phi(s), phi'(s))` over the knot range plus one span on each side.
pub fn spline_samples(grid: &KnotGrid, basis: &SplineBasis, samples_per_span: usize) -> Result<Vec<[f64; 3]>> {
    if samples_per_span == 0 {
        return Err(Error::InvalidArgument("samples_per_span must be positive".into()));
    }
    let dx = grid.delta_x();
    let lo = -grid.range() - dx;
    let spans = grid.len() + 1;
    let count = spans * samples_per_span;
    (0..=count)
        .map(|i| {
            let s = lo + i as f64 * dx / samples_per_span as f64;
            let e = grid.evaluate(s, basis)?;
            Ok([s, e.value, e.derivative])
        })
        .collect()
}

/// Writes `<prefix><layer><i>.csv` (`s,phi,dphi`) and
/// `<prefix><layer><i>_ordinates.csv` (`k,x,q`) for every neuron, returning
/// the curve files.
pub fn export_splines(net: &SafNetwork, samples_per_span: usize, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for layer in [Layer::Hidden, Layer::Output] {
        let tag = match layer {
            Layer::Hidden => "hidden",
            Layer::Output => "output",
        };
        for (i, neuron) in net.neurons(layer).iter().enumerate() {
            let mut curve = String::from("s,phi,dphi\n");
            for [s, phi, dphi] in spline_samples(&neuron.grid, net.basis(), samples_per_span)? {
                let _ = writeln!(curve, "{s},{phi},{dphi}");
            }
            let path = dir.join(format!("{prefix}{tag}{i}.csv"));
            write_file(&path, curve.as_bytes())?;
            written.push(path);

            let mut knots = String::from("k,x,q\n");
            for (k, q) in neuron.grid.ordinates().iter().enumerate() {
                let _ = writeln!(knots, "{k},{},{q}", neuron.grid.abscissa(k));
            }
            write_file(&dir.join(format!("{prefix}{tag}{i}_ordinates.csv")), knots.as_bytes())?;
        }
    }
    Ok(written)
}

/// Largest `|phi(s) - tanh(s)|` over the knot range, over all neurons.
pub fn max_tanh_deviation(net: &SafNetwork, samples_per_span: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for n in net.hidden().iter().chain(net.output()) {
        let range = n.grid.range();
        for [s, phi, _] in spline_samples(&n.grid, net.basis(), samples_per_span)? {
            if s.abs() <= range + 1e-12 {
                worst = worst.max((phi - s.tanh()).abs());
            }
        }
    }
    Ok(worst)
}

/// Everything [`write_outputs`] produced.
#[derive(Debug, Clone, Default)]
pub struct OutputFiles {
    pub tables: Vec<PathBuf>,
    pub traces: Vec<PathBuf>,
    pub splines: Vec<PathBuf>,
}

/// Writes the file set described in the module documentation.
pub fn write_outputs(result: &ScenarioResult, dir: &Path, splines: bool) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config = dir.join("config.json");
    let mut f = std::fs::File::create(&config).map_err(|e| Error::io(&config, e))?;
    serde_json::to_writer_pretty(&mut f, &result.config)?;
    writeln!(f).map_err(|e| Error::io(&config, e))?;

    let mut files = OutputFiles {
        tables: report(&result.records(), dir)?,
        ..OutputFiles::default()
    };
    files.tables.push(config);
    for r in &result.runs {
        let stem = format!("{}_run_{:02}", r.record.model.name(), r.record.run);
        let norm = dir.join("normalization").join(format!("run_{:02}.json", r.record.run));
        if !norm.exists() {
            write_file(&norm, serde_json::to_string_pretty(&r.normalizer)?.as_bytes())?;
        }
        let trace = dir.join("traces").join(format!("{stem}.csv"));
        if let Some(d) = trace.parent() {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        r.trace.save_csv(&trace)?;
        files.traces.push(trace);
        if splines {
            files
                .splines
                .extend(export_splines(&r.network, 20, &dir.join("splines"), &format!("{stem}_"))?);
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(model: ModelKind, run: usize, train: f64, test: f64) -> RunRecord {
        RunRecord {
            scenario: 1,
            dataset: "toy".into(),
            model,
            run,
            lambda_w: 1.0,
            lambda_q: (model == ModelKind::Saf).then_some(1e-5),
            cv_nrmse: None,
            train_nrmse: train,
            test_nrmse: test,
            iterations: 10,
            evaluations: 30,
            termination: "MaxIterations".into(),
            clamped_fraction: 0.0,
            wall_time_s: 0.5,
        }
    }

    #[test]
    fn mean_std_closed_forms() {
        let c = mean_std(&[0.7; 15]);
        assert!((c.mean - 0.7).abs() < 1e-15);
        assert!(c.std.abs() < 1e-15);
        let two = mean_std(&[0.3, 0.5]);
        assert!((two.mean - 0.4).abs() < 1e-15);
        assert!((two.std - 0.1414213562373095).abs() < 1e-12);
        assert_eq!(mean_std(&[2.0]).std, 0.0);
    }

    #[test]
    fn aggregates_count_every_run() {
        let records: Vec<RunRecord> = (0..15)
            .flat_map(|r| [record(ModelKind::Standard, r, 1.0, 1.01), record(ModelKind::Saf, r, 0.5, 0.57)])
            .collect();
        let agg = aggregate(&records);
        assert_eq!(agg.len(), 2);
        assert!(agg.iter().all(|a| a.runs == 15));
        assert_eq!(agg[0].model, ModelKind::Standard);
        assert!(agg[0].lambda_q.is_none());
        assert!((agg[1].test.mean - 0.57).abs() < 1e-12);
    }

    #[test]
    fn golden_summary_and_table() {
        let records = vec![
            record(ModelKind::Standard, 0, 1.0, 1.0),
            record(ModelKind::Standard, 1, 1.0, 1.02),
            record(ModelKind::Saf, 0, 0.3, 0.4),
            record(ModelKind::Saf, 1, 0.5, 0.6),
        ];
        let agg = aggregate(&records);
        assert_eq!(
            summary_csv(&agg),
            "scenario,dataset,nonlinearity,runs,train_nrmse_mean,train_nrmse_std,test_nrmse_mean,test_nrmse_std,lambda_w_mean,lambda_q_mean\n\
             1,toy,tanh,2,1.000000,0.000000,1.010000,0.014142,1e0,\n\
             1,toy,SAF,2,0.400000,0.141421,0.500000,0.141421,1e0,1e-5\n"
        );
        assert_eq!(
            render_table(&agg),
            "Dataset  Nonlinearity  Train NRMSE    Test NRMSE\n\
             toy      tanh          1.000 ± 0.000  1.010 ± 0.014\n\
             toy      SAF           0.400 ± 0.141  0.500 ± 0.141\n"
        );
    }

    #[test]
    fn scenario2_table_lists_lambdas() {
        let mut r = record(ModelKind::Standard, 0, 1.0, 1.0);
        r.scenario = 2;
        let table = render_table(&aggregate(&[r]));
        assert!(table.starts_with("Dataset  Nonlinearity  Train NRMSE    Test NRMSE     lambda_w  lambda_q\n"));
        assert!(table.contains("1.000e0   -"));
    }

    #[test]
    fn results_csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        report(&[record(ModelKind::Saf, 3, 0.5, 0.6)], dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scenario,dataset,model,run,lambda_w,lambda_q,cv_nrmse,train_nrmse,test_nrmse,iterations,\
             evaluations,termination,clamped_fraction,wall_time_s"
        );
        assert_eq!(lines.next().unwrap(), "1,toy,saf,3,1.0,0.00001,,0.5,0.6,10,30,MaxIterations,0.0,0.5");
    }

    #[test]
    fn grid_selection_breaks_ties_toward_regularization() {
        let cells = [
            GridCell { lambda_w: 0.1, lambda_q: 0.1, score: 0.5 },
            GridCell { lambda_w: 1.0, lambda_q: 0.01, score: 0.5 },
            GridCell { lambda_w: 1.0, lambda_q: 0.1, score: 0.5 },
            GridCell { lambda_w: 8.0, lambda_q: 0.1, score: 0.6 },
            GridCell { lambda_w: 0.01, lambda_q: 1.0, score: f64::NAN },
        ];
        let best = select_cell(&cells).unwrap();
        assert_eq!((best.lambda_w, best.lambda_q), (1.0, 0.1));
        assert!(select_cell(&[]).is_none());
    }

    #[test]
    fn lambda_parsing() {
        assert_eq!(parse_lambda("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_lambda("1e-2, 1").unwrap(), vec![0.01, 1.0]);
        assert_eq!(parse_lambda("grid").unwrap().len(), 16);
        assert_eq!(parse_lambda("reduced").unwrap(), vec![2f64.powi(-10), 2f64.powi(-7), 0.0625, 0.5, 4.0, 32.0]);
        assert_eq!(parse_lambda("decadic").unwrap()[0], 1e-5);
        assert!(parse_lambda("-1").is_err());
        assert!(parse_lambda("abc").is_err());
    }

    #[test]
    fn samples_cover_one_extra_span_each_side() {
        let grid = KnotGrid::from_function(|x| x, 0.2, 21).unwrap();
        let samples = spline_samples(&grid, &SplineBasis::catmull_rom(), 4).unwrap();
        assert!((samples[0][0] + 2.2).abs() < 1e-12);
        assert!((samples.last().unwrap()[0] - 2.2).abs() < 1e-12);
        for [s, phi, dphi] in samples {
            assert!((phi - s).abs() < 1e-12);
            assert!((dphi - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_dataset_is_actionable() {
        let err = load_dataset(&DatasetSource::Csv {
            path: "/definitely/not/here/cal_housing.data".into(),
            target_columns: vec![8],
        })
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cal_housing"), "{msg}");
        assert!(msg.contains(DATA_DIR_ENV));
    }

    #[test]
    fn config_validation() {
        let src = DatasetSource::Synthetic { samples: 50, seed: 0 };
        assert!(ExperimentConfig::scenario1(src.clone()).validate().is_ok());
        assert!(ExperimentConfig::scenario2(src.clone()).validate().is_ok());
        let mut bad = ExperimentConfig::scenario1(src.clone());
        bad.lambda_w = vec![1.0, 2.0];
        assert!(bad.validate().is_err());
        let mut bad = ExperimentConfig::scenario1(src);
        bad.knot_range = 2.1;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tiny_scenarios_are_reproducible() {
        let src = DatasetSource::Synthetic { samples: 60, seed: 1 };
        let ds = load_dataset(&src).unwrap();
        let mut cfg = ExperimentConfig::scenario1(src.clone());
        cfg.runs = 2;
        cfg.max_iter = 15;
        cfg.hidden = 3;
        let a = run_scenario1(&cfg, &ds).unwrap();
        let b = run_scenario1(&cfg, &ds).unwrap();
        assert_eq!(a.runs.len(), 4);
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.record.test_nrmse, y.record.test_nrmse);
            assert_eq!(x.grids(), y.grids());
        }
        let std = a.aggregate_for(ModelKind::Standard).unwrap();
        assert_eq!(std.runs, 2);

        let mut cfg2 = ExperimentConfig::scenario2(src);
        cfg2.runs = 1;
        cfg2.max_iter = 5;
        cfg2.hidden = 2;
        cfg2.lambda_w = vec![0.01, 1.0];
        cfg2.lambda_q = vec![1e-3];
        let r = run_scenario2(&cfg2, &ds).unwrap();
        assert_eq!(r.runs.len(), 2);
        assert!(r.runs.iter().all(|x| x.record.cv_nrmse.is_some()));
        assert!(r.runs.iter().all(|x| cfg2.lambda_w.contains(&x.record.lambda_w)));
    }

    #[test]
    fn standard_model_keeps_tanh_grids() {
        let src = DatasetSource::Synthetic { samples: 40, seed: 2 };
        let ds = load_dataset(&src).unwrap();
        let mut cfg = ExperimentConfig::scenario1(src);
        cfg.max_iter = 10;
        let t = train_model(ModelKind::Standard, &cfg, &ds, 1e-3, 0.0, 4).unwrap();
        let tanh = KnotGrid::from_function(f64::tanh, 0.2, 21).unwrap();
        assert!(t.network.hidden().iter().chain(t.network.output()).all(|n| n.grid == tanh));
        assert!(t.trace.is_monotone());
    }
}

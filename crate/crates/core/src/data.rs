//! Regression datasets: CSV ingestion, min/max scaling, random splits,
//! k-fold partitions and the NRMSE metric.

use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

/// A row that was dropped during ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowDiagnostic {
    /// 1-based line number in the file.
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub dataset: Dataset,
    pub skipped: Vec<RowDiagnostic>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() == 0 || inputs.nrows() != targets.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows vs {} target rows",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains non-finite values".into()));
        }
        let feature_names = (0..inputs.ncols()).map(|i| format!("x{i}")).collect();
        let target_names = (0..targets.ncols()).map(|i| format!("y{i}")).collect();
        Ok(Self {
            inputs,
            targets,
            feature_names,
            target_names,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn num_targets(&self) -> usize {
        self.targets.ncols()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), indices),
            targets: self.targets.select(Axis(0), indices),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
        }
    }
}

/// Reads a numeric CSV. The first row is treated as a header when any of its
/// fields fails to parse as a number. Rows with missing or non-numeric
/// fields are skipped and reported.
pub fn load_csv(path: &Path, target_columns: &[usize]) -> Result<LoadReport> {
    if target_columns.is_empty() {
        return Err(Error::InvalidArgument("at least one target column is required".into()));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut header: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut skipped = Vec::new();
    let mut bad_target_rows = 0usize;

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        if i == 0 && parsed.iter().any(Option::is_none) {
            header = Some(record.iter().map(str::to_owned).collect());
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if let Some(&t) = target_columns.iter().find(|&&t| t >= expected) {
            return Err(Error::InvalidArgument(format!(
                "target column {t} out of range for {expected} columns in {}",
                path.display()
            )));
        }
        if record.len() != expected {
            skipped.push(RowDiagnostic {
                line,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
            continue;
        }
        if let Some(col) = parsed.iter().position(Option::is_none) {
            if target_columns.contains(&col) {
                bad_target_rows += 1;
            }
            skipped.push(RowDiagnostic {
                line,
                message: format!("field {col} is missing or not numeric: {:?}", &record[col]),
            });
            continue;
        }
        rows.push(parsed.into_iter().map(Option::unwrap).collect());
    }

    for d in &skipped {
        log::warn!("{}:{}: skipped row: {}", path.display(), d.line, d.message);
    }
    if rows.is_empty() {
        if bad_target_rows > 0 {
            return Err(Error::NonNumericTarget {
                path: path.to_path_buf(),
                column: target_columns[0],
            });
        }
        return Err(Error::NoRows(path.to_path_buf()));
    }

    let ncols = rows[0].len();
    let feature_cols: Vec<usize> = (0..ncols).filter(|c| !target_columns.contains(c)).collect();
    if feature_cols.is_empty() {
        return Err(Error::InvalidArgument("no input columns left after removing targets".into()));
    }
    let n = rows.len();
    let inputs = Array2::from_shape_fn((n, feature_cols.len()), |(r, c)| rows[r][feature_cols[c]]);
    let targets = Array2::from_shape_fn((n, target_columns.len()), |(r, c)| rows[r][target_columns[c]]);
    let name = |c: usize| {
        header
            .as_ref()
            .and_then(|h| h.get(c).cloned())
            .unwrap_or_else(|| format!("col{c}"))
    };
    Ok(LoadReport {
        dataset: Dataset {
            inputs,
            targets,
            feature_names: feature_cols.iter().map(|&c| name(c)).collect(),
            target_names: target_columns.iter().map(|&c| name(c)).collect(),
        },
        skipped,
    })
}

/// Affine map of one column from its observed `[min, max]` onto `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub min: f64,
    pub max: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ColumnScale {
    fn degenerate(&self) -> bool {
        !(self.max > self.min)
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.degenerate() {
            0.5 * (self.lo + self.hi)
        } else {
            self.lo + (v - self.min) * (self.hi - self.lo) / (self.max - self.min)
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        if self.degenerate() {
            self.min
        } else {
            self.min + (v - self.lo) * (self.max - self.min) / (self.hi - self.lo)
        }
    }
}

/// Per-column scaling fitted on one dataset and applicable to others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub inputs: Vec<ColumnScale>,
    pub targets: Vec<ColumnScale>,
}

pub const INPUT_RANGE: (f64, f64) = (-1.0, 1.0);
pub const TARGET_RANGE: (f64, f64) = (-0.5, 0.5);

fn fit_columns(data: ArrayView2<'_, f64>, (lo, hi): (f64, f64), what: &str) -> Vec<ColumnScale> {
    data.axis_iter(Axis(1))
        .enumerate()
        .map(|(c, col)| {
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(max > min) {
                log::warn!("{what} column {c} is constant; mapping it to the range midpoint");
            }
            ColumnScale { min, max, lo, hi }
        })
        .collect()
}

fn map_columns(data: ArrayView2<'_, f64>, scales: &[ColumnScale], f: impl Fn(&ColumnScale, f64) -> f64) -> Array2<f64> {
    Array2::from_shape_fn(data.dim(), |(r, c)| f(&scales[c], data[[r, c]]))
}

impl Normalizer {
    pub fn fit(ds: &Dataset) -> Self {
        Self::fit_with(ds, INPUT_RANGE, TARGET_RANGE)
    }

    pub fn fit_with(ds: &Dataset, input_range: (f64, f64), target_range: (f64, f64)) -> Self {
        Self {
            inputs: fit_columns(ds.inputs.view(), input_range, "input"),
            targets: fit_columns(ds.targets.view(), target_range, "target"),
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.num_features() != self.inputs.len() || ds.num_targets() != self.targets.len() {
            return Err(Error::DimensionMismatch("normalizer fitted on a different layout".into()));
        }
        Ok(Dataset {
            inputs: map_columns(ds.inputs.view(), &self.inputs, ColumnScale::apply),
            targets: map_columns(ds.targets.view(), &self.targets, ColumnScale::apply),
            feature_names: ds.feature_names.clone(),
            target_names: ds.target_names.clone(),
        })
    }

    pub fn invert(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.num_features() != self.inputs.len() || ds.num_targets() != self.targets.len() {
            return Err(Error::DimensionMismatch("normalizer fitted on a different layout".into()));
        }
        Ok(Dataset {
            inputs: map_columns(ds.inputs.view(), &self.inputs, ColumnScale::invert),
            targets: map_columns(ds.targets.view(), &self.targets, ColumnScale::invert),
            feature_names: ds.feature_names.clone(),
            target_names: ds.target_names.clone(),
        })
    }
}

/// Fits min/max scaling on `ds` and applies it.
pub fn normalize(ds: &Dataset) -> (Dataset, Normalizer) {
    let norm = Normalizer::fit(ds);
    let out = norm.apply(ds).expect("normalizer fitted on the same dataset");
    (out, norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub run: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Random train/test partition of `0..n`; the test part has
/// `round(fraction * n)` elements.
pub fn split(n: usize, spec: &SplitSpec) -> Result<Split> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {} must be in (0, 1)",
            spec.test_fraction
        )));
    }
    let test_len = (spec.test_fraction * n as f64).round() as usize;
    if test_len == 0 || test_len >= n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} samples with test fraction {}",
            spec.test_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut run_rng(spec.seed, spec.run));
    let train = idx.split_off(test_len);
    Ok(Split { train, test: idx })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub k: usize,
    pub seed: u64,
}

/// Disjoint, exhaustive folds of `0..n` whose sizes differ by at most one.
pub fn kfold(n: usize, spec: &FoldSpec) -> Result<Vec<Vec<usize>>> {
    if spec.k < 2 || spec.k > n {
        return Err(Error::InvalidArgument(format!(
            "{} folds requested for {n} samples",
            spec.k
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let base = n / spec.k;
    let extra = n % spec.k;
    let mut folds = Vec::with_capacity(spec.k);
    let mut start = 0;
    for f in 0..spec.k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// The complement of fold `held_out`.
pub fn fold_train_indices(folds: &[Vec<usize>], held_out: usize) -> Vec<usize> {
    folds
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != held_out)
        .flat_map(|(_, f)| f.iter().copied())
        .collect()
}

/// RMSE divided by the (population) standard deviation of the targets,
/// computed per output column and averaged.
pub fn nrmse(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let (n, o) = target.dim();
    if n < 2 || o == 0 {
        return Err(Error::InvalidArgument("NRMSE needs at least two samples".into()));
    }
    let mut total = 0.0;
    for j in 0..o {
        let t = target.column(j);
        let p = pred.column(j);
        let mean = t.sum() / n as f64;
        let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if !(var > 0.0) {
            return Err(Error::Domain(format!("target column {j} has zero variance")));
        }
        let mse = p.iter().zip(t.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
        total += (mse / var).sqrt();
    }
    Ok(total / o as f64)
}

/// Description of the built-in synthetic benchmark.
pub const SYNTHETIC_DESCRIPTION: &str = "8 inputs uniform on [-1, 1]; \
y = sin(3 x0) + x1 x2 + exp(-4 x3^2) + 0.5 |x4| - 0.3 x5 + N(0, 0.05^2); x6, x7 are distractors";

/// A nonlinear regression problem used when no real dataset is supplied:
/// see [`SYNTHETIC_DESCRIPTION`].
pub fn synthetic(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = rand_distr::Normal::new(0.0, 0.05).expect("valid sigma");
    let inputs: Array2<f64> = Array2::from_shape_fn((n, 8), |_| rng.random_range(-1.0..=1.0));
    let targets = Array2::from_shape_fn((n, 1), |(r, _)| {
        let x = inputs.row(r);
        (3.0 * x[0]).sin() + x[1] * x[2] + (-4.0 * x[3] * x[3]).exp() + 0.5 * x[4].abs() - 0.3 * x[5]
            + rand_distr::Distribution::sample(&noise, &mut rng)
    });
    let mut ds = Dataset::new(inputs, targets).expect("finite synthetic data");
    ds.target_names = vec!["y".into()];
    ds
}

/// Resolves a dataset argument against a default data directory.
pub fn resolve_path(arg: &Path, data_dir: Option<&Path>) -> PathBuf {
    if arg.is_absolute() || arg.exists() {
        return arg.to_path_buf();
    }
    match data_dir {
        Some(dir) => dir.join(arg),
        None => arg.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_csv_with_header() {
        let f = write_tmp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let r = load_csv(f.path(), &[2]).unwrap();
        assert_eq!(r.dataset.len(), 3);
        assert_eq!(r.dataset.num_features(), 2);
        assert_eq!(r.dataset.num_targets(), 1);
        assert_eq!(r.dataset.feature_names, vec!["a", "b"]);
        assert_eq!(r.dataset.targets, array![[3.0], [6.0], [9.0]]);
        assert!(r.skipped.is_empty());
    }

    #[test]
    fn loads_headerless_csv_and_skips_bad_rows() {
        let f = write_tmp("1,2,3\n4,oops,6\n7,8\n10,11,12\n");
        let r = load_csv(f.path(), &[0]).unwrap();
        assert_eq!(r.dataset.len(), 2);
        assert_eq!(r.skipped.len(), 2);
        assert_eq!(r.skipped[0].line, 2);
        assert_eq!(r.dataset.inputs, array![[2.0, 3.0], [11.0, 12.0]]);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            load_csv(Path::new("/nonexistent/file.csv"), &[0]),
            Err(Error::Io { .. })
        ));
        let f = write_tmp("a,b\n");
        assert!(matches!(load_csv(f.path(), &[1]), Err(Error::NoRows(_))));
        let f = write_tmp("a,b\n1,x\n2,y\n");
        assert!(matches!(load_csv(f.path(), &[1]), Err(Error::NonNumericTarget { column: 1, .. })));
        let f = write_tmp("1,2\n");
        assert!(load_csv(f.path(), &[5]).is_err());
    }

    #[test]
    fn normalization_maps_endpoints() {
        let ds = Dataset::new(array![[0.0, 3.0], [5.0, 3.0], [10.0, 3.0]], array![[2.0], [3.0], [4.0]]).unwrap();
        let (n, norm) = normalize(&ds);
        assert_eq!(n.inputs.column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(n.inputs.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(n.targets.column(0).to_vec(), vec![-0.5, 0.0, 0.5]);
        let back = norm.invert(&n).unwrap();
        assert_eq!(back.inputs.column(0), ds.inputs.column(0));
        let json = serde_json::to_string(&norm).unwrap();
        assert_eq!(serde_json::from_str::<Normalizer>(&json).unwrap(), norm);
    }

    #[test]
    fn splits_and_folds() {
        let s = split(10, &SplitSpec { test_fraction: 0.3, seed: 1, run: 0 }).unwrap();
        assert_eq!(s.test.len(), 3);
        assert_eq!(s.train.len(), 7);
        assert_eq!(s, split(10, &SplitSpec { test_fraction: 0.3, seed: 1, run: 0 }).unwrap());
        assert_ne!(s, split(10, &SplitSpec { test_fraction: 0.3, seed: 1, run: 1 }).unwrap());
        assert!(split(10, &SplitSpec { test_fraction: 1.0, seed: 1, run: 0 }).is_err());

        let folds = kfold(9, &FoldSpec { k: 3, seed: 4 }).unwrap();
        assert_eq!(folds.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3]);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
        assert_eq!(fold_train_indices(&folds, 1).len(), 6);
        assert!(kfold(2, &FoldSpec { k: 3, seed: 0 }).is_err());
        assert!(kfold(5, &FoldSpec { k: 1, seed: 0 }).is_err());
    }

    #[test]
    fn nrmse_reference_points() {
        let t = array![[1.0], [2.0], [3.0], [6.0]];
        assert_eq!(nrmse(t.view(), t.view()).unwrap(), 0.0);
        let mean = Array2::from_elem((4, 1), 3.0);
        assert!((nrmse(mean.view(), t.view()).unwrap() - 1.0).abs() < 1e-12);
        let flat = Array2::from_elem((4, 1), 1.0);
        assert!(nrmse(flat.view(), flat.view()).is_err());
        assert!(nrmse(t.view(), mean.slice(ndarray::s![..3, ..])).is_err());
    }

    #[test]
    fn zero_predictor_on_centered_targets() {
        // A network stuck at zero output scores ~1 on zero-mean targets.
        let ds = synthetic(2000, 3);
        let (n, _) = normalize(&ds);
        let mean = n.targets.mean().unwrap();
        let centered = n.targets.mapv(|v| v - mean);
        let zeros = Array2::zeros(centered.dim());
        assert!((nrmse(zeros.view(), centered.view()).unwrap() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn normalization_round_trip(vals in proptest::collection::vec(-1e3f64..1e3, 3..30)) {
            let n = vals.len();
            let x = Array2::from_shape_vec((n, 1), vals.clone()).unwrap();
            let y = Array2::from_shape_fn((n, 1), |(r, _)| vals[(r + 1) % n] * 2.0);
            let ds = Dataset::new(x, y).unwrap();
            let (scaled, norm) = normalize(&ds);
            let back = norm.invert(&scaled).unwrap();
            let degenerate = norm.inputs[0].min == norm.inputs[0].max;
            if !degenerate {
                for (a, b) in back.inputs.iter().zip(ds.inputs.iter()) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }

        #[test]
        fn nrmse_affine_invariance(seed in 0u64..500, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = Array2::from_shape_fn((20, 2), |_| rng.random_range(-1.0..1.0));
            let p = Array2::from_shape_fn((20, 2), |_| rng.random_range(-1.0..1.0));
            let a = nrmse(p.view(), t.view()).unwrap();
            let b = nrmse(p.mapv(|v| scale * v + shift).view(), t.mapv(|v| scale * v + shift).view()).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}

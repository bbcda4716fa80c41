//! In-memory datasets, synthetic generators and CSV ingestion.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::substream;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("shape mismatch: expected {expected} rows of labels, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("dataset must have at least one feature column")]
    EmptyFeatures,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("label column '{0}' not found")]
    MissingColumn(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dataset has no labels")]
    NoLabels,
    #[error("labels are not integer classes")]
    NotClassLabels,
    #[error("duplicate row id {0}")]
    DuplicateRowId(usize),
    #[error("feature ids differ between datasets")]
    FeatureMismatch,
}

/// Target values attached to a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// Integer class labels.
    Class(Vec<i64>),
    /// Real-valued regression targets.
    Real(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class(v) => v.len(),
            Labels::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Label `i` as a real number.
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Labels::Class(v) => v[i] as f64,
            Labels::Real(v) => v[i],
        }
    }

    pub fn as_classes(&self) -> Option<&[i64]> {
        match self {
            Labels::Class(v) => Some(v),
            Labels::Real(_) => None,
        }
    }

    fn select(&self, rows: &[usize]) -> Labels {
        match self {
            Labels::Class(v) => Labels::Class(rows.iter().map(|&r| v[r]).collect()),
            Labels::Real(v) => Labels::Real(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// Distinct classes of a labeled dataset with their sample counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSummary {
    pub classes: Vec<i64>,
    pub counts: Vec<usize>,
}

impl LabelSummary {
    pub fn count_of(&self, class: i64) -> usize {
        self.classes
            .binary_search(&class)
            .map(|i| self.counts[i])
            .unwrap_or(0)
    }
}

/// Dense feature matrix with optional labels and provenance ids.
///
/// `row_ids` and `feature_ids` record each row's and column's index in the
/// dataset this one was carved out of, so every partition can be traced back
/// to the centralized source. Datasets are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Option<Labels>,
    row_ids: Vec<usize>,
    feature_ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from raw arrays, numbering rows and columns from zero.
    pub fn from_arrays(features: Array2<f64>, labels: Option<Labels>) -> Result<Self, DatasetError> {
        let (n_samples, n_features) = features.dim();
        if n_features == 0 {
            return Err(DatasetError::EmptyFeatures);
        }
        if let Some(l) = &labels {
            if l.len() != n_samples {
                return Err(DatasetError::ShapeMismatch {
                    expected: n_samples,
                    found: l.len(),
                });
            }
        }
        Ok(Self {
            features,
            labels,
            row_ids: (0..n_samples).collect(),
            feature_ids: (0..n_features).collect(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples() == 0
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn feature_ids(&self) -> &[usize] {
        &self.feature_ids
    }

    /// Rows at the given local positions, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: self.labels.as_ref().map(|l| l.select(rows)),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
            feature_ids: self.feature_ids.clone(),
        }
    }

    /// Columns at the given local positions, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Dataset, DatasetError> {
        if columns.is_empty() {
            return Err(DatasetError::EmptyFeatures);
        }
        Ok(Dataset {
            features: self.features.select(Axis(1), columns),
            labels: self.labels.clone(),
            row_ids: self.row_ids.clone(),
            feature_ids: columns.iter().map(|&c| self.feature_ids[c]).collect(),
        })
    }

    pub fn without_labels(&self) -> Dataset {
        Dataset {
            labels: None,
            ..self.clone()
        }
    }

    /// Same rows and columns with replaced labels.
    pub fn with_labels(&self, labels: Labels) -> Result<Dataset, DatasetError> {
        if labels.len() != self.n_samples() {
            return Err(DatasetError::ShapeMismatch {
                expected: self.n_samples(),
                found: labels.len(),
            });
        }
        Ok(Dataset {
            labels: Some(labels),
            ..self.clone()
        })
    }

    /// Stacks datasets over the same feature columns.
    ///
    /// Row ids must stay unique across the inputs, and either all or none of
    /// the inputs carry labels of the same kind.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset, DatasetError> {
        let first = parts
            .first()
            .ok_or_else(|| DatasetError::InvalidArgument("nothing to concatenate".into()))?;
        let feature_ids = first.feature_ids.clone();
        let mut seen = HashSet::new();
        let mut row_ids = Vec::new();
        for p in parts {
            if p.feature_ids != feature_ids {
                return Err(DatasetError::FeatureMismatch);
            }
            for &r in &p.row_ids {
                if !seen.insert(r) {
                    return Err(DatasetError::DuplicateRowId(r));
                }
                row_ids.push(r);
            }
        }
        let views: Vec<_> = parts.iter().map(|p| p.features.view()).collect();
        let features = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| DatasetError::InvalidArgument(e.to_string()))?;
        let labels = match &first.labels {
            None => {
                if parts.iter().any(|p| p.labels.is_some()) {
                    return Err(DatasetError::NoLabels);
                }
                None
            }
            Some(Labels::Class(_)) => {
                let mut all = Vec::with_capacity(row_ids.len());
                for p in parts {
                    match &p.labels {
                        Some(Labels::Class(v)) => all.extend_from_slice(v),
                        _ => return Err(DatasetError::NotClassLabels),
                    }
                }
                Some(Labels::Class(all))
            }
            Some(Labels::Real(_)) => {
                let mut all = Vec::with_capacity(row_ids.len());
                for p in parts {
                    match &p.labels {
                        Some(Labels::Real(v)) => all.extend_from_slice(v),
                        _ => return Err(DatasetError::NoLabels),
                    }
                }
                Some(Labels::Real(all))
            }
        };
        Ok(Dataset {
            features,
            labels,
            row_ids,
            feature_ids,
        })
    }
}

/// Sorted distinct classes and their counts.
pub fn summarize_labels(d: &Dataset) -> Result<LabelSummary, DatasetError> {
    let labels = d.labels().ok_or(DatasetError::NoLabels)?;
    let classes = labels.as_classes().ok_or(DatasetError::NotClassLabels)?;
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &c in classes {
        *counts.entry(c).or_default() += 1;
    }
    Ok(LabelSummary {
        classes: counts.keys().copied().collect(),
        counts: counts.values().copied().collect(),
    })
}

/// Isotropic Gaussian clusters, one per class, with unit variance.
///
/// Class centers sit on a regular polygon in the first two coordinates (a
/// line when `n_features == 1`) whose adjacent vertices are exactly
/// `class_separation` apart. Class sizes differ by at most one and rows are
/// shuffled, all from `seed`.
pub fn generate_blobs(
    n_samples: usize,
    n_features: usize,
    n_classes: usize,
    class_separation: f64,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if n_classes < 2 {
        return Err(DatasetError::InvalidArgument("n_classes must be at least 2".into()));
    }
    if n_samples < n_classes {
        return Err(DatasetError::InvalidArgument(
            "n_samples must be at least n_classes".into(),
        ));
    }
    if n_features == 0 {
        return Err(DatasetError::EmptyFeatures);
    }
    if !(class_separation > 0.0 && class_separation.is_finite()) {
        return Err(DatasetError::InvalidArgument(
            "class_separation must be positive".into(),
        ));
    }

    let centers = blob_centers(n_features, n_classes, class_separation);

    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut substream(seed, 0));

    let mut noise = substream(seed, 1);
    let mut features = Array2::<f64>::zeros((n_samples, n_features));
    let mut labels = vec![0i64; n_samples];
    // Sample k (in generation order) belongs to class k % n_classes and lands at row order[k].
    for (k, &row) in order.iter().enumerate() {
        let class = k % n_classes;
        labels[row] = class as i64;
        for j in 0..n_features {
            let z: f64 = noise.sample(StandardNormal);
            features[[row, j]] = centers[[class, j]] + z;
        }
    }
    Dataset::from_arrays(features, Some(Labels::Class(labels)))
}

fn blob_centers(n_features: usize, n_classes: usize, separation: f64) -> Array2<f64> {
    let mut centers = Array2::<f64>::zeros((n_classes, n_features));
    if n_features == 1 {
        for c in 0..n_classes {
            centers[[c, 0]] = separation * (c as f64 - (n_classes as f64 - 1.0) / 2.0);
        }
        return centers;
    }
    let step = std::f64::consts::TAU / n_classes as f64;
    let radius = separation / (2.0 * (step / 2.0).sin());
    for c in 0..n_classes {
        let angle = step * c as f64;
        centers[[c, 0]] = radius * angle.cos();
        centers[[c, 1]] = radius * angle.sin();
    }
    centers
}

/// Holds out `round(test_fraction * n)` rows, chosen by a shuffle keyed on
/// `seed`, and returns `(train, test)`. Both halves keep source row order.
pub fn train_test_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(DatasetError::InvalidArgument("test_fraction must lie in [0, 1)".into()));
    }
    let n = d.n_samples();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, TEST_SPLIT_STREAM));
    let (test, train) = order.split_at_mut(n_test);
    test.sort_unstable();
    train.sort_unstable();
    Ok((d.select_rows(train), d.select_rows(test)))
}

// Kept clear of the small stream numbers the partitioner uses.
const TEST_SPLIT_STREAM: u64 = u64::MAX;

/// Reads a numeric CSV file.
///
/// `label_column` names the target column; without a header row columns are
/// named by their zero-based index (`"0"`, `"1"`, ...). Labels are class
/// labels when every label cell is an integer literal, regression targets
/// otherwise. Empty cells are parse errors. Reported row numbers count data
/// records from 1, excluding the header.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<&str>,
    has_header: bool,
) -> Result<Dataset, DatasetError> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut names: Option<Vec<String>> = if has_header {
        Some(
            reader
                .headers()
                .map_err(csv_error)?
                .iter()
                .map(str::to_owned)
                .collect(),
        )
    } else {
        None
    };

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => DatasetError::Parse {
                row: i + 1,
                column: String::new(),
                message: "wrong number of fields".into(),
            },
            _ => csv_error(e),
        })?;
        records.push(rec);
    }

    let names = names.get_or_insert_with(|| {
        let width = records.first().map_or(0, |r| r.len());
        (0..width).map(|i| i.to_string()).collect()
    });

    let label_idx = match label_column {
        Some(name) => Some(
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| DatasetError::MissingColumn(name.to_owned()))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..names.len()).filter(|&c| Some(c) != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(DatasetError::EmptyFeatures);
    }

    let n = records.len();
    let mut features = Array2::<f64>::zeros((n, feature_cols.len()));
    let mut raw_labels = Vec::with_capacity(if label_idx.is_some() { n } else { 0 });
    for (i, rec) in records.iter().enumerate() {
        for (j, &c) in feature_cols.iter().enumerate() {
            features[[i, j]] = parse_real(&rec[c], i + 1, &names[c])?;
        }
        if let Some(l) = label_idx {
            raw_labels.push(&rec[l]);
        }
    }

    let labels = match label_idx {
        None => None,
        Some(l) => {
            let ints: Option<Vec<i64>> = raw_labels.iter().map(|s| s.parse::<i64>().ok()).collect();
            match ints {
                Some(v) => Some(Labels::Class(v)),
                None => {
                    let mut reals = Vec::with_capacity(n);
                    for (i, s) in raw_labels.iter().enumerate() {
                        reals.push(parse_real(s, i + 1, &names[l])?);
                    }
                    Some(Labels::Real(reals))
                }
            }
        }
    };
    Dataset::from_arrays(features, labels)
}

fn parse_real(cell: &str, row: usize, column: &str) -> Result<f64, DatasetError> {
    let parse_err = |message: String| DatasetError::Parse {
        row,
        column: column.to_owned(),
        message,
    };
    if cell.is_empty() {
        return Err(parse_err("missing value".into()));
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| parse_err(format!("'{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(format!("'{cell}' is not finite")));
    }
    Ok(v)
}

fn csv_error(e: csv::Error) -> DatasetError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::Io(io),
        other => DatasetError::InvalidArgument(format!("{other:?}")),
    }
}

/// Writes `d` as CSV with a header (`f<feature_id>` columns, then `label`).
///
/// Reals use Rust's shortest round-trip formatting, so [`load_csv`] reads the
/// values back bit for bit.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut out = io::BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = d.feature_ids().iter().map(|f| format!("f{f}")).collect();
    if d.labels().is_some() {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..d.n_samples() {
        let mut cells: Vec<String> = d.row(i).iter().map(|v| format!("{v:?}")).collect();
        match d.labels() {
            Some(Labels::Class(v)) => cells.push(v[i].to_string()),
            Some(Labels::Real(v)) => cells.push(format!("{:?}", v[i])),
            None => {}
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn split_is_seeded_and_exhaustive() {
        let d = generate_blobs(50, 2, 2, 3.0, 0).unwrap();
        let (train, test) = train_test_split(&d, 0.2, 7).unwrap();
        assert_eq!((train.n_samples(), test.n_samples()), (40, 10));
        let mut all: Vec<usize> = train.row_ids().iter().chain(test.row_ids()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, d.row_ids());
        assert_eq!(train_test_split(&d, 0.2, 7).unwrap().1, test);
        assert_ne!(train_test_split(&d, 0.2, 8).unwrap().1, test);
        assert_eq!(train_test_split(&d, 0.0, 7).unwrap().0, d);
        assert!(train_test_split(&d, 1.0, 7).is_err());
    }

    #[test]
    fn from_arrays_numbers_rows_and_columns() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]];
        let d = Dataset::from_arrays(x, Some(Labels::Class(vec![0, 1, 0, 1]))).unwrap();
        assert_eq!(d.row_ids(), &[0, 1, 2, 3]);
        assert_eq!(d.feature_ids(), &[0, 1]);
    }

    #[test]
    fn from_arrays_rejects_label_length() {
        let x = Array2::zeros((3, 2));
        let err = Dataset::from_arrays(x, Some(Labels::Class(vec![0, 1]))).unwrap_err();
        assert!(matches!(err, DatasetError::ShapeMismatch { expected: 3, found: 2 }));
    }

    #[test]
    fn from_arrays_empty_rows_and_columns() {
        let d = Dataset::from_arrays(Array2::zeros((0, 5)), None).unwrap();
        assert_eq!(d.n_samples(), 0);
        assert_eq!(d.n_features(), 5);
        assert!(matches!(
            Dataset::from_arrays(Array2::zeros((3, 0)), None),
            Err(DatasetError::EmptyFeatures)
        ));
    }

    #[test]
    fn summarize_counts_classes() {
        let d = Dataset::from_arrays(Array2::zeros((4, 1)), Some(Labels::Class(vec![1, 0, 1, 1])))
            .unwrap();
        let s = summarize_labels(&d).unwrap();
        assert_eq!(s.classes, vec![0, 1]);
        assert_eq!(s.counts, vec![1, 3]);

        let single =
            Dataset::from_arrays(Array2::zeros((1, 1)), Some(Labels::Class(vec![7]))).unwrap();
        let s = summarize_labels(&single).unwrap();
        assert_eq!((s.classes, s.counts), (vec![7], vec![1]));

        let unlabeled = Dataset::from_arrays(Array2::zeros((2, 1)), None).unwrap();
        assert!(matches!(summarize_labels(&unlabeled), Err(DatasetError::NoLabels)));
    }

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let a = generate_blobs(1000, 2, 10, 5.0, 0).unwrap();
        let s = summarize_labels(&a).unwrap();
        assert_eq!(s.classes, (0..10).collect::<Vec<_>>());
        assert!(s.counts.iter().all(|&c| c == 100));
        let b = generate_blobs(1000, 2, 10, 5.0, 0).unwrap();
        assert_eq!(a, b);
        let c = generate_blobs(1000, 2, 10, 5.0, 1).unwrap();
        assert_ne!(a.features(), c.features());
    }

    #[test]
    fn blobs_uneven_counts_within_one() {
        let d = generate_blobs(103, 3, 4, 2.0, 9).unwrap();
        let s = summarize_labels(&d).unwrap();
        let (lo, hi) = (s.counts.iter().min().unwrap(), s.counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
        assert_eq!(s.counts.iter().sum::<usize>(), 103);
    }

    #[test]
    fn blob_centers_are_separated() {
        for k in 2..8 {
            let c = blob_centers(3, k, 4.0);
            let mut min = f64::INFINITY;
            for i in 0..k {
                for j in i + 1..k {
                    let d = (&c.row(i) - &c.row(j)).mapv(|v| v * v).sum().sqrt();
                    min = min.min(d);
                }
            }
            assert!((min - 4.0).abs() < 1e-9, "k={k} min={min}");
        }
    }

    #[test]
    fn blobs_reject_bad_arguments() {
        assert!(generate_blobs(10, 2, 1, 1.0, 0).is_err());
        assert!(generate_blobs(3, 2, 4, 1.0, 0).is_err());
        assert!(generate_blobs(10, 2, 2, 0.0, 0).is_err());
    }

    #[test]
    fn row_and_column_selection_keep_ids() {
        let d = generate_blobs(20, 4, 2, 3.0, 1).unwrap();
        let rows = d.select_rows(&[3, 7, 11]);
        assert_eq!(rows.row_ids(), &[3, 7, 11]);
        let cols = rows.select_columns(&[2, 0]).unwrap();
        assert_eq!(cols.feature_ids(), &[2, 0]);
        assert_eq!(cols.features()[[1, 0]], d.features()[[7, 2]]);
        let again = cols.select_rows(&[1]);
        assert_eq!(again.row_ids(), &[7]);
    }

    #[test]
    fn concat_rejects_duplicate_rows() {
        let d = generate_blobs(10, 2, 2, 3.0, 1).unwrap();
        let a = d.select_rows(&[0, 1]);
        let b = d.select_rows(&[1, 2]);
        assert!(matches!(Dataset::concat(&[&a, &b]), Err(DatasetError::DuplicateRowId(1))));
        let c = d.select_rows(&[2, 3]);
        let joined = Dataset::concat(&[&a, &c]).unwrap();
        assert_eq!(joined, d.select_rows(&[0, 1, 2, 3]));
    }
}

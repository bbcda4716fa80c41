//! Reference learners: linear and logistic regression trained with seeded
//! mini-batch SGD on a flat parameter vector `[w_1, ..., w_d, bias]`.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::rng::substream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("BadLabels: {0}")]
    BadLabels(String),
    #[error("NoLabels: dataset has no labels")]
    NoLabels,
    #[error("EmptyDataset: cannot train or evaluate on zero samples")]
    EmptyDataset,
    #[error("parameter vector must be nonempty and finite")]
    NonFinite,
    #[error("invalid learner spec: {0}")]
    InvalidSpec(String),
}

/// Flat parameter vector exchanged between actors.
///
/// `shape_tag` names the layout; vectors are combinable only when their tags
/// match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    shape_tag: String,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, shape_tag: impl Into<String>) -> Result<Self, LearnerError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::NonFinite);
        }
        Ok(Self {
            values,
            shape_tag: shape_tag.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape_tag(&self) -> &str {
        &self.shape_tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_combinable(&self, other: &ParamVector) -> bool {
        self.shape_tag == other.shape_tag && self.values.len() == other.values.len()
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, LearnerError> {
        if values.len() != self.values.len() {
            return Err(LearnerError::ShapeMismatch(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Self::new(values, self.shape_tag.clone())
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    LinearRegression,
    LogisticRegression,
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::LinearRegression => "linear_regression",
            LearnerKind::LogisticRegression => "logistic_regression",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub n_features: usize,
    /// Strength of the `(l2 / 2) * ||w||^2` penalty; the bias is not penalized.
    #[serde(default)]
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds batch shuffling only; parameters always start at zero.
    #[serde(default)]
    pub seed: u64,
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.batch_size == 0 {
            return Err(LearnerError::InvalidSpec("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(LearnerError::InvalidSpec("lr must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(LearnerError::InvalidSpec("l2 must be nonnegative".into()));
        }
        if self.n_features == 0 {
            return Err(LearnerError::InvalidSpec("n_features must be at least 1".into()));
        }
        Ok(())
    }

    pub fn shape_tag(&self) -> String {
        format!("{}:{}+1", self.kind, self.n_features)
    }
}

/// Evaluation result. `accuracy` is set for logistic regression only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Mean squared error (linear) or mean cross-entropy (logistic), without the L2 term.
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// Zero weights and bias.
pub fn init_params(spec: &LearnerSpec) -> ParamVector {
    ParamVector {
        values: vec![0.0; spec.n_features + 1],
        shape_tag: spec.shape_tag(),
    }
}

fn check_inputs(spec: &LearnerSpec, p: &ParamVector, d: &Dataset) -> Result<(), LearnerError> {
    if p.shape_tag() != spec.shape_tag() || p.len() != spec.n_features + 1 {
        return Err(LearnerError::ShapeMismatch(format!(
            "parameters '{}' of length {} do not fit '{}'",
            p.shape_tag(),
            p.len(),
            spec.shape_tag()
        )));
    }
    if d.n_features() != spec.n_features {
        return Err(LearnerError::ShapeMismatch(format!(
            "dataset has {} features, learner expects {}",
            d.n_features(),
            spec.n_features
        )));
    }
    let labels = d.labels().ok_or(LearnerError::NoLabels)?;
    if spec.kind == LearnerKind::LogisticRegression {
        if let Some(i) = (0..labels.len()).find(|&i| {
            let y = labels.value(i);
            y != 0.0 && y != 1.0
        }) {
            return Err(LearnerError::BadLabels(format!(
                "logistic regression needs 0/1 labels, row {i} has {}",
                labels.value(i)
            )));
        }
    }
    Ok(())
}

fn linear_score(w: &[f64], d: &Dataset, row: usize) -> f64 {
    let (bias, weights) = w.split_last().expect("nonempty params");
    d.row(row)
        .iter()
        .zip(weights)
        .fold(*bias, |acc, (x, wj)| acc + x * wj)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Data loss and its gradient summed over `rows`, divided by the row count.
fn batch_objective(kind: LearnerKind, w: &[f64], d: &Dataset, rows: &[usize]) -> (f64, Vec<f64>) {
    let labels = d.labels().expect("checked");
    let n_features = w.len() - 1;
    let mut loss = 0.0;
    let mut grad = vec![0.0; w.len()];
    for &r in rows {
        let z = linear_score(w, d, r);
        let y = labels.value(r);
        let residual = match kind {
            LearnerKind::LinearRegression => {
                let e = z - y;
                loss += e * e;
                2.0 * e
            }
            LearnerKind::LogisticRegression => {
                loss += softplus(z) - y * z;
                sigmoid(z) - y
            }
        };
        for (g, x) in grad[..n_features].iter_mut().zip(d.row(r)) {
            *g += residual * x;
        }
        grad[n_features] += residual;
    }
    let m = rows.len() as f64;
    loss /= m;
    grad.iter_mut().for_each(|g| *g /= m);
    (loss, grad)
}

fn add_l2(l2: f64, w: &[f64], loss: &mut f64, grad: &mut [f64]) {
    if l2 == 0.0 {
        return;
    }
    let n_features = w.len() - 1;
    let sq: f64 = w[..n_features].iter().map(|v| v * v).sum();
    *loss += 0.5 * l2 * sq;
    for (g, v) in grad[..n_features].iter_mut().zip(&w[..n_features]) {
        *g += l2 * v;
    }
}

/// Mean loss over `d` (plus the L2 penalty) and its exact gradient.
pub fn loss_and_gradient(
    spec: &LearnerSpec,
    p: &ParamVector,
    d: &Dataset,
) -> Result<(f64, ParamVector), LearnerError> {
    check_inputs(spec, p, d)?;
    if d.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    let rows: Vec<usize> = (0..d.n_samples()).collect();
    let (mut loss, mut grad) = batch_objective(spec.kind, p.values(), d, &rows);
    add_l2(spec.l2, p.values(), &mut loss, &mut grad);
    Ok((
        loss,
        ParamVector {
            values: grad,
            shape_tag: p.shape_tag.clone(),
        },
    ))
}

/// Mini-batch SGD starting from `p`.
///
/// Each epoch visits the rows in an order shuffled by a generator keyed on
/// `(spec.seed, epoch)` and steps once per batch of `batch_size` rows (the
/// last batch may be short). When a batch covers the whole dataset the rows
/// are visited in their stored order, so a single full-batch epoch is
/// exactly one gradient step.
pub fn train(spec: &LearnerSpec, p: &ParamVector, d: &Dataset) -> Result<ParamVector, LearnerError> {
    spec.validate()?;
    check_inputs(spec, p, d)?;
    if spec.epochs == 0 {
        return Ok(p.clone());
    }
    let n = d.n_samples();
    if n == 0 {
        return Err(LearnerError::EmptyDataset);
    }
    let mut w = p.values.clone();
    for epoch in 0..spec.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        if spec.batch_size < n {
            order.shuffle(&mut substream(spec.seed, epoch as u64));
        }
        for batch in order.chunks(spec.batch_size) {
            let (mut loss, mut grad) = batch_objective(spec.kind, &w, d, batch);
            add_l2(spec.l2, &w, &mut loss, &mut grad);
            for (v, g) in w.iter_mut().zip(&grad) {
                *v -= spec.lr * g;
            }
        }
    }
    ParamVector::new(w, p.shape_tag.clone())
}

/// Loss (and accuracy for logistic regression) of `p` on `d`.
///
/// Predictions use class 1 when the sigmoid score is at least 0.5.
pub fn evaluate(spec: &LearnerSpec, p: &ParamVector, d: &Dataset) -> Result<Metrics, LearnerError> {
    check_inputs(spec, p, d)?;
    if d.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    let rows: Vec<usize> = (0..d.n_samples()).collect();
    let (loss, _) = batch_objective(spec.kind, p.values(), d, &rows);
    let accuracy = match spec.kind {
        LearnerKind::LinearRegression => None,
        LearnerKind::LogisticRegression => {
            let labels = d.labels().expect("checked");
            let correct = rows
                .iter()
                .filter(|&&r| {
                    let predicted = if sigmoid(linear_score(p.values(), d, r)) >= 0.5 { 1.0 } else { 0.0 };
                    predicted == labels.value(r)
                })
                .count();
            Some(correct as f64 / rows.len() as f64)
        }
    };
    Ok(Metrics { loss, accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_blobs, Labels};
    use ndarray::array;

    fn spec(kind: LearnerKind, n_features: usize) -> LearnerSpec {
        LearnerSpec {
            kind,
            n_features,
            l2: 0.0,
            lr: 0.1,
            epochs: 1,
            batch_size: 1,
            seed: 0,
        }
    }

    #[test]
    fn init_is_zero_with_bias() {
        let lin = init_params(&spec(LearnerKind::LinearRegression, 3));
        assert_eq!(lin.values(), &[0.0; 4]);
        let log = init_params(&spec(LearnerKind::LogisticRegression, 1));
        assert_eq!(log.len(), 2);
        let lin1 = init_params(&spec(LearnerKind::LinearRegression, 1));
        assert!(!lin1.is_combinable(&log));
    }

    #[test]
    fn linear_zero_loss_at_exact_minimum() {
        let s = spec(LearnerKind::LinearRegression, 2);
        let d = Dataset::from_arrays(array![[1.0, 2.0], [3.0, -1.0]], Some(Labels::Real(vec![0.0, 0.0])))
            .unwrap();
        let (loss, g) = loss_and_gradient(&s, &init_params(&s), &d).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn logistic_zero_params_loss_is_ln2() {
        let s = spec(LearnerKind::LogisticRegression, 2);
        let d = generate_blobs(30, 2, 2, 3.0, 1).unwrap();
        let (loss, _) = loss_and_gradient(&s, &init_params(&s), &d).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let mut s = spec(LearnerKind::LogisticRegression, 2);
        s.epochs = 0;
        let d = generate_blobs(30, 2, 2, 3.0, 1).unwrap();
        let p = ParamVector::new(vec![0.3, -0.2, 1.0], s.shape_tag()).unwrap();
        assert_eq!(train(&s, &p, &d).unwrap(), p);
    }

    #[test]
    fn full_batch_epoch_is_one_gradient_step() {
        let mut s = spec(LearnerKind::LinearRegression, 2);
        s.batch_size = 100;
        s.lr = 0.05;
        s.l2 = 0.3;
        let d = generate_blobs(40, 2, 2, 3.0, 2).unwrap();
        let p = ParamVector::new(vec![0.5, -1.0, 0.25], s.shape_tag()).unwrap();
        let (_, g) = loss_and_gradient(&s, &p, &d).unwrap();
        let expected: Vec<f64> = p.values().iter().zip(g.values()).map(|(a, b)| a - s.lr * b).collect();
        assert_eq!(train(&s, &p, &d).unwrap().values(), expected.as_slice());
    }

    #[test]
    fn logistic_separates_blobs() {
        let s = LearnerSpec {
            kind: LearnerKind::LogisticRegression,
            n_features: 2,
            l2: 0.0,
            lr: 0.1,
            epochs: 20,
            batch_size: 32,
            seed: 0,
        };
        let d = generate_blobs(1000, 2, 2, 10.0, 0).unwrap();
        let p = train(&s, &init_params(&s), &d).unwrap();
        let m = evaluate(&s, &p, &d).unwrap();
        assert!(m.accuracy.unwrap() >= 0.95, "{m:?}");
        assert_eq!(train(&s, &init_params(&s), &d).unwrap(), p);
    }

    #[test]
    fn zero_params_tie_predicts_class_one() {
        let s = spec(LearnerKind::LogisticRegression, 1);
        let d = Dataset::from_arrays(array![[1.0], [2.0], [3.0], [4.0]], Some(Labels::Class(vec![0, 1, 0, 1])))
            .unwrap();
        let m = evaluate(&s, &init_params(&s), &d).unwrap();
        assert_eq!(m.accuracy, Some(0.5));
    }

    #[test]
    fn hand_separator_scores_perfectly() {
        // Points left of x = 0 are class 0, right are class 1.
        let s = spec(LearnerKind::LogisticRegression, 2);
        let d = Dataset::from_arrays(
            array![[-2.0, 1.0], [-1.0, -1.0], [1.0, 1.0], [2.0, -1.0]],
            Some(Labels::Class(vec![0, 0, 1, 1])),
        )
        .unwrap();
        let p = ParamVector::new(vec![3.0, 0.0, 0.0], s.shape_tag()).unwrap();
        assert_eq!(evaluate(&s, &p, &d).unwrap().accuracy, Some(1.0));
    }

    #[test]
    fn linear_exact_fit_has_zero_mse() {
        let s = spec(LearnerKind::LinearRegression, 1);
        let d = Dataset::from_arrays(array![[0.0], [1.0], [2.0]], Some(Labels::Real(vec![1.0, 3.0, 5.0])))
            .unwrap();
        let p = ParamVector::new(vec![2.0, 1.0], s.shape_tag()).unwrap();
        let m = evaluate(&s, &p, &d).unwrap();
        assert_eq!(m.loss, 0.0);
        assert_eq!(m.accuracy, None);
    }

    #[test]
    fn error_paths() {
        let s = spec(LearnerKind::LogisticRegression, 2);
        let p = init_params(&s);
        let three = generate_blobs(30, 3, 2, 3.0, 1).unwrap();
        assert!(matches!(loss_and_gradient(&s, &p, &three), Err(LearnerError::ShapeMismatch(_))));
        let multi = generate_blobs(30, 2, 3, 3.0, 1).unwrap();
        assert!(matches!(loss_and_gradient(&s, &p, &multi), Err(LearnerError::BadLabels(_))));
        let unlabeled = multi.without_labels();
        assert!(matches!(evaluate(&s, &p, &unlabeled), Err(LearnerError::NoLabels)));
        let empty = multi.select_rows(&[]);
        let empty = empty.with_labels(Labels::Class(vec![])).unwrap();
        assert!(matches!(train(&s, &p, &empty), Err(LearnerError::EmptyDataset)));
        let other = init_params(&spec(LearnerKind::LinearRegression, 2));
        assert!(matches!(train(&s, &other, &multi), Err(LearnerError::ShapeMismatch(_))));
        assert!(ParamVector::new(vec![], "x").is_err());
        assert!(ParamVector::new(vec![f64::NAN], "x").is_err());
    }
}

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest-remainder allocation computed one unit at a time: start from the
/// floors and give each remaining unit to the entry furthest below its exact
/// share, lowest index first on ties.
pub fn greedy_apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum.max(1.0)).collect();
    let mut q: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let target = shares.iter().sum::<f64>().round() as usize;
    while q.iter().sum::<usize>() < target {
        let mut best = 0;
        for i in 1..q.len() {
            if shares[i] - q[i] as f64 > shares[best] - q[best] as f64 {
                best = i;
            }
        }
        q[best] += 1;
    }
    q
}

/// Uniform(0.4, 0.6) proportions per (node, class), each class column
/// normalized to sum to one.
pub fn class_skew_alphas(n_nodes: usize, n_classes: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<Vec<f64>> = (0..n_nodes)
        .map(|_| (0..n_classes).map(|_| rng.random_range(0.4..0.6)).collect())
        .collect();
    let sums: Vec<f64> = (0..n_classes).map(|c| raw.iter().map(|r| r[c]).sum()).collect();
    raw.into_iter()
        .map(|r| r.iter().zip(&sums).map(|(v, s)| v / s).collect())
        .collect()
}

pub fn toml_matrix(m: &[Vec<f64>]) -> String {
    let rows: Vec<String> = m
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", rows.join(",\n  "))
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// Ten clients on separable blobs, `rounds` rounds of logistic regression.
pub fn blobs_run_config(rounds: usize, aggregator: &str, extra: &str) -> String {
    format!(
        r#"
[dataset]
kind = "blobs"
n_samples = 1000
n_features = 3
n_classes = 2
class_separation = 6.0
seed = 4

[partition]
seed = 11
n_nodes = 10

[learner]
kind = "logistic_regression"
lr = 0.1
epochs = 1
batch_size = 16
seed = 2

[aggregator]
kind = "{aggregator}"

[run]
rounds = {rounds}
clients_per_round = 6
round_seed = 5
test_fraction = 0.25
{extra}
"#
    )
}

pub fn vertical_config() -> String {
    r#"
[dataset]
kind = "blobs"
n_samples = 30000
n_features = 23
n_classes = 2
class_separation = 3.0
seed = 0

[partition]
seed = 0
n_nodes = 2
node_ids = ["Node A", "Node B"]
replacement = true
weights = [0.75, 0.75]
features_per_node = [5, 5]
keep_labels = [true, false]
"#
    .to_string()
}

pub fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect()
}

//! Federated splits of a centralized dataset.
//!
//! Rows are assigned to nodes by per-node fractions (`weights`), per-node and
//! per-class fractions (`weights_per_class`) or an equal share, with or
//! without replacement. Columns are optionally split into disjoint
//! per-node blocks (`features_per_node`), and labels can be withheld from
//! individual nodes (`keep_labels`). Horizontal, vertical and transfer
//! settings are all combinations of these options.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::ActorId;
use crate::dataset::{summarize_labels, Dataset, DatasetError, Labels};
use crate::rng::{substream, SimRng};

const SUM_TOLERANCE: f64 = 1e-9;

const FEATURE_STREAM: u64 = 0;
const ROW_STREAM: u64 = 1;
const CLASS_STREAM_BASE: u64 = 2;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("ConflictingOptions: weights and weights_per_class are mutually exclusive")]
    ConflictingOptions,
    #[error("ClassCountMismatch: weights_per_class has {found} columns but the dataset has {expected} classes")]
    ClassCountMismatch { expected: usize, found: usize },
    #[error("FeatureBudgetExceeded: features_per_node requests {requested} features but the dataset has {available}")]
    FeatureBudgetExceeded { requested: usize, available: usize },
    #[error("LabelsRequired: weights_per_class needs a dataset with integer class labels")]
    LabelsRequired,
    #[error("BadLength: {field} has length {found}, expected {expected}")]
    BadLength {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("DuplicateNodeId: '{0}' appears more than once in node_ids")]
    DuplicateNodeId(String),
    #[error("InvalidWeights: {0}")]
    InvalidWeights(String),
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Declarative description of a federated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedDatasetConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub n_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_ids: Option<Vec<String>>,
    #[serde(default)]
    pub replacement: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Row `i`, column `c`: fraction of class `c` (ascending label order) given to node `i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_per_class: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_per_node: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_labels: Option<Vec<bool>>,
}

fn one() -> usize {
    1
}

impl Default for FedDatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_nodes: 1,
            node_ids: None,
            replacement: false,
            weights: None,
            weights_per_class: None,
            features_per_node: None,
            keep_labels: None,
        }
    }
}

impl FedDatasetConfig {
    pub fn new(seed: u64, n_nodes: usize) -> Self {
        Self {
            seed,
            n_nodes,
            ..Self::default()
        }
    }

    /// Configured node ids, or `"0"..n_nodes-1` when none were given.
    pub fn resolved_node_ids(&self) -> Vec<ActorId> {
        match &self.node_ids {
            Some(ids) => ids.iter().map(|s| ActorId::from(s.as_str())).collect(),
            None => (0..self.n_nodes).map(|i| ActorId::from(i.to_string())).collect(),
        }
    }

    fn keeps_labels(&self, node: usize) -> bool {
        self.keep_labels.as_ref().is_none_or(|k| k[node])
    }

    /// Checks the configuration against the dataset it will split.
    pub fn validate(&self, source: &Dataset) -> Result<(), PartitionError> {
        let n = self.n_nodes;
        if n == 0 {
            return Err(PartitionError::InvalidArgument("n_nodes must be at least 1".into()));
        }
        if self.weights.is_some() && self.weights_per_class.is_some() {
            return Err(PartitionError::ConflictingOptions);
        }
        if let Some(ids) = &self.node_ids {
            check_len("node_ids", n, ids.len())?;
            let mut seen = HashSet::new();
            for id in ids {
                if !seen.insert(id) {
                    return Err(PartitionError::DuplicateNodeId(id.clone()));
                }
            }
        }
        if let Some(k) = &self.keep_labels {
            check_len("keep_labels", n, k.len())?;
        }
        if let Some(w) = &self.weights {
            check_len("weights", n, w.len())?;
            if let Some(bad) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(PartitionError::InvalidWeights(format!(
                    "weight {bad} is outside [0, 1]"
                )));
            }
            let sum: f64 = w.iter().sum();
            if !self.replacement && sum > 1.0 + SUM_TOLERANCE {
                return Err(PartitionError::InvalidWeights(format!(
                    "weights sum to {sum} > 1 without replacement"
                )));
            }
        }
        if let Some(wpc) = &self.weights_per_class {
            let classes = match source.labels() {
                Some(Labels::Class(_)) => summarize_labels(source)?.classes,
                _ => return Err(PartitionError::LabelsRequired),
            };
            check_len("weights_per_class", n, wpc.len())?;
            for row in wpc {
                if row.len() != classes.len() {
                    return Err(PartitionError::ClassCountMismatch {
                        expected: classes.len(),
                        found: row.len(),
                    });
                }
                if let Some(bad) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(PartitionError::InvalidWeights(format!(
                        "per-class weight {bad} is not a nonnegative real"
                    )));
                }
            }
            if !self.replacement {
                for c in 0..classes.len() {
                    let sum: f64 = wpc.iter().map(|row| row[c]).sum();
                    if sum > 1.0 + SUM_TOLERANCE {
                        return Err(PartitionError::InvalidWeights(format!(
                            "class column {c} sums to {sum} > 1 without replacement"
                        )));
                    }
                }
            }
        }
        if let Some(f) = &self.features_per_node {
            check_len("features_per_node", n, f.len())?;
            if f.contains(&0) {
                return Err(PartitionError::InvalidArgument(
                    "features_per_node entries must be at least 1".into(),
                ));
            }
            let requested: usize = f.iter().sum();
            if requested > source.n_features() {
                return Err(PartitionError::FeatureBudgetExceeded {
                    requested,
                    available: source.n_features(),
                });
            }
        }
        Ok(())
    }
}

fn check_len(field: &'static str, expected: usize, found: usize) -> Result<(), PartitionError> {
    if expected == found {
        Ok(())
    } else {
        Err(PartitionError::BadLength {
            field,
            expected,
            found,
        })
    }
}

/// Node id → that node's share of the source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FedDataset {
    nodes: BTreeMap<ActorId, Dataset>,
}

impl FedDataset {
    pub fn new(nodes: BTreeMap<ActorId, Dataset>) -> Self {
        Self { nodes }
    }

    pub fn get(&self, id: &str) -> Option<&Dataset> {
        self.nodes.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ActorId, &Dataset)> {
        self.nodes.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ActorId> {
        self.nodes.keys()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn into_inner(self) -> BTreeMap<ActorId, Dataset> {
        self.nodes
    }
}

impl IntoIterator for FedDataset {
    type Item = (ActorId, Dataset);
    type IntoIter = std::collections::btree_map::IntoIter<ActorId, Dataset>;

    fn into_iter(self) -> Self::IntoIter {
        self.nodes.into_iter()
    }
}

/// Integer split of `total` proportional to `weights` (largest remainder).
///
/// Shares are `total * w_i / max(sum(w), 1)`: weights summing to at most one
/// are absolute fractions of `total`, larger sums are normalized. Each entry
/// gets the floor of its share, and the `round(sum of shares) - sum of
/// floors` leftover units go to the largest fractional remainders, lower
/// index first on ties.
pub fn apportion(total: usize, weights: &[f64]) -> Result<Vec<usize>, PartitionError> {
    if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(PartitionError::InvalidWeights(format!(
            "weight {bad} is not a nonnegative real"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(PartitionError::InvalidArgument("weights are all zero".into()));
    }
    let scale = total as f64 / sum.max(1.0);
    let shares: Vec<f64> = weights.iter().map(|w| w * scale).collect();
    let mut quotas: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let target = (shares.iter().sum::<f64>().round() as usize).min(total);
    let assigned: usize = quotas.iter().sum();
    let leftover = target.saturating_sub(assigned);

    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Stable sort keeps lower indices first among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra)
    });
    for &i in order.iter().take(leftover) {
        quotas[i] += 1;
    }
    Ok(quotas)
}

fn quotas_or_zero(total: usize, weights: &[f64]) -> Result<Vec<usize>, PartitionError> {
    if weights.iter().all(|w| *w == 0.0) {
        Ok(vec![0; weights.len()])
    } else {
        apportion(total, weights)
    }
}

/// Hands out `pool` according to `quotas`.
///
/// Without replacement nodes receive consecutive disjoint slices of the
/// already shuffled `pool`; with replacement each node draws its quota of
/// distinct members independently.
fn assign(
    pool: &[usize],
    quotas: &[usize],
    replacement: bool,
    rng: &mut SimRng,
    out: &mut [Vec<usize>],
) {
    if replacement {
        for (node, &q) in quotas.iter().enumerate() {
            let q = q.min(pool.len());
            out[node].extend(index::sample(rng, pool.len(), q).into_iter().map(|i| pool[i]));
        }
    } else {
        let mut start = 0;
        for (node, &q) in quotas.iter().enumerate() {
            out[node].extend_from_slice(&pool[start..start + q]);
            start += q;
        }
    }
}

/// Splits `source` into one dataset per node as described by `config`.
pub fn from_config(source: &Dataset, config: &FedDatasetConfig) -> Result<FedDataset, PartitionError> {
    config.validate(source)?;
    let n_nodes = config.n_nodes;
    let n = source.n_samples();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];

    if let Some(wpc) = &config.weights_per_class {
        let labels = source
            .labels()
            .and_then(Labels::as_classes)
            .ok_or(PartitionError::LabelsRequired)?;
        let summary = summarize_labels(source)?;
        for (ci, &class) in summary.classes.iter().enumerate() {
            let mut members: Vec<usize> = (0..n).filter(|&r| labels[r] == class).collect();
            let mut rng = substream(config.seed, CLASS_STREAM_BASE + ci as u64);
            members.shuffle(&mut rng);
            let column: Vec<f64> = wpc.iter().map(|row| row[ci]).collect();
            let quotas = quotas_or_zero(members.len(), &column)?;
            assign(&members, &quotas, config.replacement, &mut rng, &mut rows);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        let mut rng = substream(config.seed, ROW_STREAM);
        all.shuffle(&mut rng);
        let quotas = match &config.weights {
            Some(w) if config.replacement => w.iter().map(|f| (f * n as f64).round() as usize).collect(),
            Some(w) => quotas_or_zero(n, w)?,
            None => apportion(n, &vec![1.0 / n_nodes as f64; n_nodes])?,
        };
        assign(&all, &quotas, config.replacement, &mut rng, &mut rows);
    }

    let column_blocks: Option<Vec<Vec<usize>>> = config.features_per_node.as_ref().map(|sizes| {
        let mut perm: Vec<usize> = (0..source.n_features()).collect();
        perm.shuffle(&mut substream(config.seed, FEATURE_STREAM));
        let mut start = 0;
        sizes
            .iter()
            .map(|&k| {
                let mut block = perm[start..start + k].to_vec();
                block.sort_unstable();
                start += k;
                block
            })
            .collect()
    });

    let mut nodes = BTreeMap::new();
    for (i, (id, mut node_rows)) in config.resolved_node_ids().into_iter().zip(rows).enumerate() {
        node_rows.sort_unstable();
        let mut part = source.select_rows(&node_rows);
        if let Some(blocks) = &column_blocks {
            part = part.select_columns(&blocks[i])?;
        }
        if !config.keeps_labels(i) {
            part = part.without_labels();
        }
        nodes.insert(id, part);
    }
    Ok(FedDataset::new(nodes))
}

/// Per-class weight matrix where every node draws `classes_per_node` classes.
///
/// Each row starts with `classes_per_node` equal nonzero entries at uniformly
/// chosen classes; columns are then normalized to sum to one, and columns no
/// node picked stay zero.
pub fn classes_to_weights(
    n_nodes: usize,
    n_classes: usize,
    classes_per_node: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, PartitionError> {
    if classes_per_node == 0 || classes_per_node > n_classes {
        return Err(PartitionError::InvalidArgument(format!(
            "classes_per_node must be in 1..={n_classes}"
        )));
    }
    let mut rng = substream(seed, 0);
    let mut matrix = vec![vec![0.0; n_classes]; n_nodes];
    for row in matrix.iter_mut() {
        for c in index::sample(&mut rng, n_classes, classes_per_node) {
            row[c] = 1.0;
        }
    }
    for c in 0..n_classes {
        let total: f64 = matrix.iter().map(|r| r[c]).sum();
        if total > 0.0 {
            for row in matrix.iter_mut() {
                row[c] /= total;
            }
        }
    }
    Ok(matrix)
}

//! Aggregation rules over collected parameter vectors.
//!
//! Every rule works coordinate by coordinate on values sorted first, so the
//! result does not depend on the order in which clients were collected.
//! Means are taken as `min + mean(x - min)` and clamped to `[min, max]`,
//! which keeps them exact when all inputs agree.

use crate::learners::ParamVector;

use super::FlowError;

fn check_shapes(vs: &[ParamVector]) -> Result<&ParamVector, FlowError> {
    let first = vs.first().ok_or(FlowError::EmptyCollection)?;
    if let Some(bad) = vs.iter().find(|v| !v.is_combinable(first)) {
        return Err(FlowError::ShapeMismatch(format!(
            "cannot combine '{}' ({} values) with '{}' ({} values)",
            first.shape_tag(),
            first.len(),
            bad.shape_tag(),
            bad.len()
        )));
    }
    Ok(first)
}

fn coordinate(vs: &[ParamVector], j: usize) -> Vec<f64> {
    let mut col: Vec<f64> = vs.iter().map(|v| v.values()[j]).collect();
    col.sort_by(f64::total_cmp);
    col
}

/// Mean of values already sorted ascending.
fn sorted_mean(sorted: &[f64]) -> f64 {
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let excess: f64 = sorted.iter().map(|v| v - lo).sum();
    (lo + excess / sorted.len() as f64).clamp(lo, hi)
}

fn build(template: &ParamVector, values: Vec<f64>) -> Result<ParamVector, FlowError> {
    template.with_values(values).map_err(FlowError::Learner)
}

/// Unweighted coordinate-wise mean.
pub fn fed_avg(vs: &[ParamVector]) -> Result<ParamVector, FlowError> {
    let first = check_shapes(vs)?;
    let values = (0..first.len()).map(|j| sorted_mean(&coordinate(vs, j))).collect();
    build(first, values)
}

/// `sum(w_i * p_i) / sum(w_i)` with nonnegative weights.
pub fn weighted_avg(vs: &[ParamVector], weights: &[f64]) -> Result<ParamVector, FlowError> {
    let first = check_shapes(vs)?;
    if weights.len() != vs.len() {
        return Err(FlowError::InvalidAggregator(format!(
            "{} weights for {} collected vectors",
            weights.len(),
            vs.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(FlowError::InvalidAggregator("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(FlowError::InvalidAggregator("weights sum to zero".into()));
    }
    let mut values = Vec::with_capacity(first.len());
    for j in 0..first.len() {
        let mut pairs: Vec<(f64, f64)> = vs.iter().zip(weights).map(|(v, &w)| (v.values()[j], w)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let lo = pairs[0].0;
        let hi = pairs[pairs.len() - 1].0;
        let excess: f64 = pairs.iter().map(|(v, w)| w * (v - lo)).sum();
        let weight_sum: f64 = pairs.iter().map(|(_, w)| w).sum();
        values.push((lo + excess / weight_sum).clamp(lo, hi));
    }
    build(first, values)
}

/// Moves `current` by the mean of the client updates `p_i - current`, each
/// rescaled to an L2 norm of at most `clip_norm`.
pub fn clipped_avg(current: &ParamVector, vs: &[ParamVector], clip_norm: f64) -> Result<ParamVector, FlowError> {
    let first = check_shapes(vs)?;
    if !current.is_combinable(first) {
        return Err(FlowError::ShapeMismatch(format!(
            "server parameters '{}' do not match collected '{}'",
            current.shape_tag(),
            first.shape_tag()
        )));
    }
    let updates: Vec<Vec<f64>> = vs
        .iter()
        .map(|v| {
            let delta: Vec<f64> = v.values().iter().zip(current.values()).map(|(p, c)| p - c).collect();
            let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            let factor = if norm > clip_norm { clip_norm / norm } else { 1.0 };
            delta.into_iter().map(|d| d * factor).collect()
        })
        .collect();
    let values = (0..first.len())
        .map(|j| {
            let mut col: Vec<f64> = updates.iter().map(|u| u[j]).collect();
            col.sort_by(f64::total_cmp);
            current.values()[j] + sorted_mean(&col)
        })
        .collect();
    build(first, values)
}

/// Coordinate-wise median; the mean of the two middle values for even counts.
pub fn coord_median(vs: &[ParamVector]) -> Result<ParamVector, FlowError> {
    let first = check_shapes(vs)?;
    let k = vs.len();
    let values = (0..first.len())
        .map(|j| {
            let col = coordinate(vs, j);
            if k % 2 == 1 {
                col[k / 2]
            } else {
                sorted_mean(&col[k / 2 - 1..=k / 2])
            }
        })
        .collect();
    build(first, values)
}

/// Coordinate-wise mean after dropping the `floor(trim_fraction * k)` lowest
/// and highest values.
pub fn trimmed_mean(vs: &[ParamVector], trim_fraction: f64) -> Result<ParamVector, FlowError> {
    let first = check_shapes(vs)?;
    let k = vs.len();
    let trimmed = (trim_fraction * k as f64).floor() as usize;
    if 2 * trimmed >= k {
        return Err(FlowError::AllTrimmed { trimmed, count: k });
    }
    let values = (0..first.len())
        .map(|j| sorted_mean(&coordinate(vs, j)[trimmed..k - trimmed]))
        .collect();
    build(first, values)
}

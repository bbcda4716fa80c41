//! Data- and model-poisoning attacks.
//!
//! Attackers are a fixed set of clients, active in every round. Label flipping
//! rewrites their training labels once before the run; sign flipping and
//! Gaussian noise rewrite their parameters between local training and
//! collection, so the server cannot tell them from honest clients.

use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::ActorId;
use crate::dataset::Labels;
use crate::flows::RoundConfig;
use crate::learners::ParamVector;
use crate::pool::FlexPool;
use crate::rng::{stable_hash, substream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("attack needs at least one attacker")]
    EmptyAttackers,
    #[error("UnknownAttacker: '{0}' is not a client of the pool")]
    UnknownAttacker(ActorId),
    #[error("NoLabels: attacker '{0}' has no class-labeled dataset")]
    NoLabels(ActorId),
    #[error("invalid flip map: {0}")]
    InvalidFlipMap(String),
    #[error("ShapeMismatch: parameters '{before}' and '{after}' differ in layout")]
    ShapeMismatch { before: String, after: String },
    #[error("attack kind '{0}' does not apply here")]
    WrongKind(&'static str),
    #[error("attack scale must be a nonnegative real")]
    InvalidScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind {
    /// Remaps attacker labels; classes absent from the map are kept.
    LabelFlip {
        #[serde(with = "flip_pairs")]
        flip_map: BTreeMap<i64, i64>,
    },
    /// Submits `before - scale * (after - before)`.
    SignFlip { scale: f64 },
    /// Adds Normal(0, scale^2) noise to every coordinate.
    GaussianNoise {
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::LabelFlip { .. } => "label_flip",
            AttackKind::SignFlip { .. } => "sign_flip",
            AttackKind::GaussianNoise { .. } => "gaussian_noise",
        }
    }

    pub fn is_model_poisoning(&self) -> bool {
        !matches!(self, AttackKind::LabelFlip { .. })
    }
}

/// The flip map is written as a list of `[from, to]` pairs.
mod flip_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<i64, i64>, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[i64; 2]> = map.iter().map(|(k, v)| [*k, *v]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<i64, i64>, D::Error> {
        let pairs = Vec::<[i64; 2]>::deserialize(d)?;
        let mut map = BTreeMap::new();
        for [from, to] in pairs {
            if map.insert(from, to).is_some() {
                return Err(serde::de::Error::custom(format!("class {from} is flipped twice")));
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub attacker_ids: Vec<ActorId>,
    #[serde(flatten)]
    pub kind: AttackKind,
}

impl AttackSpec {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.attacker_ids.is_empty() {
            return Err(AttackError::EmptyAttackers);
        }
        match &self.kind {
            AttackKind::SignFlip { scale } | AttackKind::GaussianNoise { scale, .. } => {
                if !(scale.is_finite() && *scale >= 0.0) {
                    return Err(AttackError::InvalidScale);
                }
            }
            AttackKind::LabelFlip { .. } => {}
        }
        Ok(())
    }

    /// Checks that every attacker is a client of `pool`.
    pub fn check_attackers(&self, pool: &FlexPool) -> Result<(), AttackError> {
        self.validate()?;
        for id in &self.attacker_ids {
            match pool.roles(id.as_str()) {
                Some(r) if r.is_client() => {}
                _ => return Err(AttackError::UnknownAttacker(id.clone())),
            }
        }
        Ok(())
    }
}

/// Applies a label-flip attack to the attackers' datasets in `pool`.
///
/// Every class in the flip map must occur somewhere in the pool's data.
pub fn poison_data(pool: &mut FlexPool, atk: &AttackSpec) -> Result<(), AttackError> {
    let AttackKind::LabelFlip { flip_map } = &atk.kind else {
        return Err(AttackError::WrongKind(atk.kind.name()));
    };
    atk.check_attackers(pool)?;

    let known: BTreeSet<i64> = pool
        .ids()
        .filter_map(|id| pool.data(id.as_str()))
        .filter_map(|d| d.labels().and_then(Labels::as_classes))
        .flat_map(|c| c.iter().copied())
        .collect();
    if let Some(bad) = flip_map.iter().flat_map(|(k, v)| [k, v]).find(|c| !known.contains(c)) {
        return Err(AttackError::InvalidFlipMap(format!("class {bad} does not occur in the pool")));
    }

    for id in &atk.attacker_ids {
        let data = pool
            .data(id.as_str())
            .ok_or_else(|| AttackError::NoLabels(id.clone()))?;
        let classes = data
            .labels()
            .and_then(Labels::as_classes)
            .ok_or_else(|| AttackError::NoLabels(id.clone()))?;
        let flipped = classes.iter().map(|c| *flip_map.get(c).unwrap_or(c)).collect();
        let poisoned = data
            .with_labels(Labels::Class(flipped))
            .expect("same row count");
        pool.replace_data(id.as_str(), poisoned)
            .map_err(|_| AttackError::UnknownAttacker(id.clone()))?;
    }
    Ok(())
}

/// Rewrites one attacker's locally trained parameters.
///
/// Gaussian noise is drawn from a stream keyed on `(seed, attacker id)`.
pub fn poison_update(
    before: &ParamVector,
    after: &ParamVector,
    atk: &AttackSpec,
    attacker: &str,
) -> Result<ParamVector, AttackError> {
    if !before.is_combinable(after) {
        return Err(AttackError::ShapeMismatch {
            before: before.shape_tag().to_owned(),
            after: after.shape_tag().to_owned(),
        });
    }
    atk.validate()?;
    let values: Vec<f64> = match &atk.kind {
        AttackKind::SignFlip { scale } => before
            .values()
            .iter()
            .zip(after.values())
            .map(|(b, a)| b - scale * (a - b))
            .collect(),
        AttackKind::GaussianNoise { scale, seed } => {
            let normal = Normal::new(0.0, *scale).map_err(|_| AttackError::InvalidScale)?;
            let mut rng = substream(*seed, stable_hash(attacker.as_bytes()));
            after.values().iter().map(|a| a + normal.sample(&mut rng)).collect()
        }
        AttackKind::LabelFlip { .. } => return Err(AttackError::WrongKind(atk.kind.name())),
    };
    after.with_values(values).map_err(|_| AttackError::InvalidScale)
}

/// Activates `atk` for subsequent runs of `run`.
///
/// Label flipping is applied to `pool` immediately; model poisoning is
/// recorded in the returned configuration and applied by `run_rounds`.
pub fn attach_attack(pool: &mut FlexPool, mut run: RoundConfig, atk: AttackSpec) -> Result<RoundConfig, AttackError> {
    atk.check_attackers(pool)?;
    if !atk.kind.is_model_poisoning() {
        poison_data(pool, &atk)?;
    }
    run.attack = Some(atk);
    Ok(run)
}

//! Key-value model stores and pools of actors.
//!
//! A [`FlexPool`] joins actors, their datasets and their [`FlexModel`]s.
//! Pools returned by the `select` family are views: they hold handles to the
//! same model storage as their parent, so a mutation through any view is
//! visible through all of them. Iteration is always in ascending actor-id
//! order.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use parking_lot::{RwLock, RwLockReadGuard};
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::{can_initiate, ActorId, FlexActors, RoleSet};
use crate::dataset::Dataset;
use crate::learners::ParamVector;
use crate::partition::FedDataset;
use crate::rng::{substream, SimRng};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PoolError {
    #[error("UnknownActor: '{0}' is not part of the pool")]
    UnknownActor(ActorId),
    #[error("SelectionTooLarge: requested {requested} actors from a pool of {available}")]
    SelectionTooLarge { requested: usize, available: usize },
    #[error("PermissionDenied: '{src}' may not initiate communication with '{dst}'")]
    PermissionDenied { src: ActorId, dst: ActorId },
}

/// Failure of a map: either rejected up front or raised by the mapped function.
#[derive(Debug, Clone, PartialEq)]
pub enum MapError<E> {
    Pool(PoolError),
    Actor { actor: ActorId, source: E },
}

impl<E: fmt::Display> fmt::Display for MapError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapError::Pool(e) => e.fmt(f),
            MapError::Actor { actor, source } => write!(f, "at actor '{actor}': {source}"),
        }
    }
}

impl<E: std::error::Error + 'static> std::error::Error for MapError<E> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            MapError::Pool(e) => Some(e),
            MapError::Actor { source, .. } => Some(source),
        }
    }
}

impl<E> From<PoolError> for MapError<E> {
    fn from(e: PoolError) -> Self {
        MapError::Pool(e)
    }
}

/// Tagged value stored in a [`FlexModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Payload {
    Params(ParamVector),
    Real(f64),
    Int(i64),
    Text(String),
    ParamsList(Vec<ParamVector>),
    TextList(Vec<String>),
    IntList(Vec<i64>),
    Bytes(Vec<u8>),
}

/// Key-value store owned by one actor.
#[derive(Debug, Clone, PartialEq)]
pub struct FlexModel {
    owner_id: ActorId,
    entries: BTreeMap<String, Payload>,
}

impl FlexModel {
    pub fn new(owner_id: ActorId) -> Self {
        Self {
            owner_id,
            entries: BTreeMap::new(),
        }
    }

    pub fn owner_id(&self) -> &ActorId {
        &self.owner_id
    }

    pub fn get(&self, key: &str) -> Option<&Payload> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: Payload) -> Option<Payload> {
        self.entries.insert(key.into(), value)
    }

    pub fn remove(&mut self, key: &str) -> Option<Payload> {
        self.entries.remove(key)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn params(&self, key: &str) -> Option<&ParamVector> {
        match self.entries.get(key) {
            Some(Payload::Params(p)) => Some(p),
            _ => None,
        }
    }

    pub fn params_list(&self, key: &str) -> Option<&[ParamVector]> {
        match self.entries.get(key) {
            Some(Payload::ParamsList(p)) => Some(p),
            _ => None,
        }
    }

    pub fn int(&self, key: &str) -> Option<i64> {
        match self.entries.get(key) {
            Some(Payload::Int(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn real(&self, key: &str) -> Option<f64> {
        match self.entries.get(key) {
            Some(Payload::Real(v)) => Some(*v),
            _ => None,
        }
    }
}

type SharedModel = Arc<RwLock<FlexModel>>;

/// Actors, their data and their models, indexed by actor id.
#[derive(Clone)]
pub struct FlexPool {
    actors: FlexActors,
    data: BTreeMap<ActorId, Arc<Dataset>>,
    models: BTreeMap<ActorId, SharedModel>,
}

impl fmt::Debug for FlexPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlexPool")
            .field("actors", &self.actors)
            .field("data", &self.data.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl FlexPool {
    /// Builds a pool with one model per actor, filled by `init`.
    ///
    /// Every node of `fed` must be an actor; actors without data (such as a
    /// server) are allowed.
    pub fn new<F, I>(fed: FedDataset, actors: FlexActors, mut init: F) -> Result<Self, PoolError>
    where
        F: FnMut(&ActorId, RoleSet) -> I,
        I: IntoIterator<Item = (String, Payload)>,
    {
        let mut data = BTreeMap::new();
        for (id, d) in fed {
            if !actors.contains(id.as_str()) {
                return Err(PoolError::UnknownActor(id));
            }
            data.insert(id, Arc::new(d));
        }
        let models = actors
            .iter()
            .map(|(id, roles)| {
                let mut model = FlexModel::new(id.clone());
                for (k, v) in init(id, roles) {
                    model.insert(k, v);
                }
                (id.clone(), Arc::new(RwLock::new(model)))
            })
            .collect();
        Ok(Self {
            actors,
            data,
            models,
        })
    }

    pub fn actors(&self) -> &FlexActors {
        &self.actors
    }

    pub fn ids(&self) -> impl Iterator<Item = &ActorId> {
        self.actors.ids()
    }

    pub fn len(&self) -> usize {
        self.actors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actors.is_empty()
    }

    pub fn roles(&self, id: &str) -> Option<RoleSet> {
        self.actors.roles(id)
    }

    pub fn data(&self, id: &str) -> Option<&Dataset> {
        self.data.get(id).map(Arc::as_ref)
    }

    /// Read access to a model; the guard must be dropped before mapping over it.
    pub fn model(&self, id: &str) -> Option<RwLockReadGuard<'_, FlexModel>> {
        self.models.get(id).map(|m| m.read())
    }

    /// Copy of a model's current state.
    pub fn snapshot(&self, id: &str) -> Option<FlexModel> {
        self.models.get(id).map(|m| m.read().clone())
    }

    /// Replaces the dataset held by `id` in this pool.
    ///
    /// Views selected earlier keep the dataset they were created with.
    pub fn replace_data(&mut self, id: &str, d: Dataset) -> Result<(), PoolError> {
        if !self.actors.contains(id) {
            return Err(PoolError::UnknownActor(id.into()));
        }
        self.data.insert(id.into(), Arc::new(d));
        Ok(())
    }

    /// View containing the actors matching `keep`.
    pub fn select(&self, mut keep: impl FnMut(&ActorId, RoleSet) -> bool) -> FlexPool {
        let actors = self.actors.filter(|id, roles| keep(id, roles));
        self.view(actors)
    }

    /// View of `n` actors drawn uniformly without replacement.
    pub fn select_random(&self, n: usize, seed: u64) -> Result<FlexPool, PoolError> {
        self.select_random_with(n, &mut substream(seed, 0))
    }

    pub fn select_random_with(&self, n: usize, rng: &mut SimRng) -> Result<FlexPool, PoolError> {
        if n > self.len() {
            return Err(PoolError::SelectionTooLarge {
                requested: n,
                available: self.len(),
            });
        }
        let ids: Vec<&ActorId> = self.ids().collect();
        let chosen: std::collections::BTreeSet<&ActorId> =
            index::sample(rng, ids.len(), n).into_iter().map(|i| ids[i]).collect();
        Ok(self.select(|id, _| chosen.contains(id)))
    }

    pub fn clients(&self) -> FlexPool {
        self.select(|_, r| r.is_client())
    }

    pub fn servers(&self) -> FlexPool {
        self.select(|_, r| r.is_server())
    }

    pub fn aggregators(&self) -> FlexPool {
        self.select(|_, r| r.is_aggregator())
    }

    fn view(&self, actors: FlexActors) -> FlexPool {
        let data = self
            .data
            .iter()
            .filter(|(id, _)| actors.contains(id.as_str()))
            .map(|(id, d)| (id.clone(), Arc::clone(d)))
            .collect();
        let models = self
            .models
            .iter()
            .filter(|(id, _)| actors.contains(id.as_str()))
            .map(|(id, m)| (id.clone(), Arc::clone(m)))
            .collect();
        FlexPool {
            actors,
            data,
            models,
        }
    }

    /// Checks that every actor of `self` may initiate communication with
    /// every actor of `dst`, reporting the first failing pair in id order.
    pub fn check_permission(&self, dst: &FlexPool) -> Result<(), PoolError> {
        for (src_id, src_roles) in self.actors.iter() {
            for (dst_id, dst_roles) in dst.actors.iter() {
                if !can_initiate(src_roles, dst_roles) {
                    return Err(PoolError::PermissionDenied {
                        src: src_id.clone(),
                        dst: dst_id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Runs `f` once per actor of `self` with read-only access to `dst`.
    ///
    /// Permission is checked for all pairs before anything runs. `f` gets the
    /// source actor's model mutably and the destination models, in ascending
    /// id order, as they were when the map started. The first error from `f`
    /// stops the map.
    pub fn map_to<E, F>(&self, dst: &FlexPool, mut f: F) -> Result<(), MapError<E>>
    where
        F: FnMut(&mut FlexModel, &[FlexModel]) -> Result<(), E>,
    {
        self.check_permission(dst)?;
        let snapshot: Vec<FlexModel> = dst.models.values().map(|m| m.read().clone()).collect();
        for (id, model) in &self.models {
            let mut guard = model.write();
            f(&mut guard, &snapshot).map_err(|source| MapError::Actor {
                actor: id.clone(),
                source,
            })?;
        }
        Ok(())
    }

    /// Runs `f` once per actor on its own model and dataset.
    ///
    /// Local computation needs no communication, so no permission applies.
    pub fn map_local<E, F>(&self, mut f: F) -> Result<(), MapError<E>>
    where
        F: FnMut(&mut FlexModel, Option<&Dataset>) -> Result<(), E>,
    {
        for (id, model) in &self.models {
            let mut guard = model.write();
            f(&mut guard, self.data(id.as_str())).map_err(|source| MapError::Actor {
                actor: id.clone(),
                source,
            })?;
        }
        Ok(())
    }
}

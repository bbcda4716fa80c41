//! Actor roles and the communication-permission relation.
//!
//! A client never opens a communication. An aggregator may open one towards
//! aggregators and servers; a server towards servers and clients. Once a
//! communication is open it is bidirectional, so only the initiator's roles
//! are checked.

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ActorError {
    #[error("duplicate actor id '{0}'")]
    DuplicateId(ActorId),
    #[error("architecture has no actors")]
    EmptyArchitecture,
    #[error("role set must not be empty")]
    EmptyRoleSet,
}

/// Identifier of a simulated node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorId(String);

impl ActorId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for ActorId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ActorId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for ActorId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Client,
    Aggregator,
    Server,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Client, Role::Aggregator, Role::Server];

    fn bit(self) -> u8 {
        match self {
            Role::Client => 0b001,
            Role::Aggregator => 0b010,
            Role::Server => 0b100,
        }
    }
}

/// Pairs `(initiator role, receiver role)` that may open a communication.
const ALLOWED: [(Role, Role); 4] = [
    (Role::Server, Role::Server),
    (Role::Server, Role::Client),
    (Role::Aggregator, Role::Aggregator),
    (Role::Aggregator, Role::Server),
];

/// Nonempty set of roles held by one actor.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoleSet(u8);

impl RoleSet {
    pub const CLIENT: RoleSet = RoleSet(0b001);
    pub const AGGREGATOR: RoleSet = RoleSet(0b010);
    pub const SERVER: RoleSet = RoleSet(0b100);
    pub const SERVER_AGGREGATOR: RoleSet = RoleSet(0b110);
    pub const ALL: RoleSet = RoleSet(0b111);

    pub fn new(roles: impl IntoIterator<Item = Role>) -> Result<Self, ActorError> {
        let bits = roles.into_iter().fold(0u8, |acc, r| acc | r.bit());
        if bits == 0 {
            Err(ActorError::EmptyRoleSet)
        } else {
            Ok(RoleSet(bits))
        }
    }

    /// The seven nonempty role sets.
    pub fn all_nonempty() -> impl Iterator<Item = RoleSet> {
        (1u8..8).map(RoleSet)
    }

    pub fn contains(self, role: Role) -> bool {
        self.0 & role.bit() != 0
    }

    pub fn is_client(self) -> bool {
        self.contains(Role::Client)
    }

    pub fn is_aggregator(self) -> bool {
        self.contains(Role::Aggregator)
    }

    pub fn is_server(self) -> bool {
        self.contains(Role::Server)
    }

    pub fn union(self, other: RoleSet) -> RoleSet {
        RoleSet(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Role> {
        Role::ALL.into_iter().filter(move |r| self.contains(*r))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

impl fmt::Debug for RoleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Whether an actor holding `src` may open a communication with one holding `dst`.
pub fn can_initiate(src: RoleSet, dst: RoleSet) -> bool {
    ALLOWED
        .iter()
        .any(|&(from, to)| src.contains(from) && dst.contains(to))
}

/// Fixed mapping from actor id to role set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlexActors {
    roles: BTreeMap<ActorId, RoleSet>,
}

impl FlexActors {
    /// Builds an architecture, rejecting repeated ids.
    pub fn new<I, K>(entries: I) -> Result<Self, ActorError>
    where
        I: IntoIterator<Item = (K, RoleSet)>,
        K: Into<ActorId>,
    {
        let mut roles = BTreeMap::new();
        for (id, set) in entries {
            let id = id.into();
            if roles.contains_key(&id) {
                return Err(ActorError::DuplicateId(id));
            }
            roles.insert(id, set);
        }
        Ok(Self { roles })
    }

    pub fn roles(&self, id: &str) -> Option<RoleSet> {
        self.roles.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.roles.contains_key(id)
    }

    /// Actors in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (&ActorId, RoleSet)> {
        self.roles.iter().map(|(k, v)| (k, *v))
    }

    pub fn ids(&self) -> impl Iterator<Item = &ActorId> {
        self.roles.keys()
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub(crate) fn filter(&self, mut keep: impl FnMut(&ActorId, RoleSet) -> bool) -> FlexActors {
        FlexActors {
            roles: self
                .roles
                .iter()
                .filter(|(k, v)| keep(k, **v))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }
}

/// Clients holding only the client role plus one server-aggregator.
pub fn client_server_architecture<S: AsRef<str>>(
    client_ids: &[S],
    server_id: &str,
) -> Result<FlexActors, ActorError> {
    FlexActors::new(
        client_ids
            .iter()
            .map(|id| (ActorId::from(id.as_ref()), RoleSet::CLIENT))
            .chain(std::iter::once((ActorId::from(server_id), RoleSet::SERVER_AGGREGATOR))),
    )
}

/// Every node holds all three roles.
pub fn p2p_architecture<S: AsRef<str>>(node_ids: &[S]) -> Result<FlexActors, ActorError> {
    if node_ids.is_empty() {
        return Err(ActorError::EmptyArchitecture);
    }
    FlexActors::new(node_ids.iter().map(|id| (ActorId::from(id.as_ref()), RoleSet::ALL)))
}

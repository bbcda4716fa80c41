//! Federated learning simulation toolkit.
//!
//! A centralized [`Dataset`] is split into a [`FedDataset`] according to a
//! [`FedDatasetConfig`]. Nodes are organized as actors whose [`RoleSet`]s
//! decide who may open a communication with whom, and the actors, their data
//! and their key-value [`FlexModel`] stores are joined into a [`FlexPool`].
//! Federated rounds are expressed as compositions of [`FlexPool::map_to`] and
//! [`FlexPool::map_local`] in the [`flows`] module.

pub mod actors;
pub mod adversary;
pub mod dataset;
pub mod flows;
pub mod learners;
pub mod partition;
pub mod pool;
pub mod rng;

pub use actors::{can_initiate, ActorId, FlexActors, Role, RoleSet};
pub use adversary::{AttackKind, AttackSpec};
pub use dataset::{Dataset, LabelSummary, Labels};
pub use flows::{AggregatorSpec, RoundConfig, RoundReport};
pub use learners::{LearnerKind, LearnerSpec, ParamVector};
pub use partition::{FedDataset, FedDatasetConfig};
pub use pool::{FlexModel, FlexPool, Payload};

//! Federated round steps composed from pool maps, and the round driver.
//!
//! Model keys used by the steps:
//!
//! | key               | holder | payload                                     |
//! |-------------------|--------|---------------------------------------------|
//! | `params`          | both   | current parameters                          |
//! | `num_samples`     | client | size of the local dataset                   |
//! | `train_loss`      | client | objective after the last local training     |
//! | `collected`       | server | client parameters in ascending id order     |
//! | `collected_ids`   | server | ids matching `collected`                    |
//! | `collected_sizes` | server | `num_samples` matching `collected`          |

pub mod aggregate;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::ActorId;
use crate::adversary::{poison_update, AttackError, AttackSpec};
use crate::dataset::Dataset;
use crate::learners::{self, LearnerError, LearnerSpec, Metrics, ParamVector};
use crate::pool::{FlexModel, FlexPool, MapError, Payload, PoolError};
use crate::rng::substream;

pub const PARAMS: &str = "params";
pub const NUM_SAMPLES: &str = "num_samples";
pub const TRAIN_LOSS: &str = "train_loss";
pub const COLLECTED: &str = "collected";
pub const COLLECTED_IDS: &str = "collected_ids";
pub const COLLECTED_SIZES: &str = "collected_sizes";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("MissingKey: actor '{actor}' has no '{key}' entry")]
    MissingKey { actor: ActorId, key: &'static str },
    #[error("MissingData: actor '{0}' holds no dataset")]
    MissingData(ActorId),
    #[error("MultipleServers: expected exactly one server, found {found}")]
    MultipleServers { found: usize },
    #[error("EmptyCollection: no client parameters were collected")]
    EmptyCollection,
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("AllTrimmed: trimming {trimmed} from each side of {count} values leaves nothing")]
    AllTrimmed { trimmed: usize, count: usize },
    #[error("invalid aggregator: {0}")]
    InvalidAggregator(String),
    #[error("invalid run: {0}")]
    InvalidRun(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("at actor '{actor}': {source}")]
    AtActor { actor: ActorId, source: Box<FlowError> },
    #[error("round {round}: {source}")]
    InRound { round: usize, source: Box<FlowError> },
}

impl FlowError {
    /// The underlying error with actor and round context peeled off.
    pub fn root(&self) -> &FlowError {
        match self {
            FlowError::AtActor { source, .. } | FlowError::InRound { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<MapError<FlowError>> for FlowError {
    fn from(e: MapError<FlowError>) -> Self {
        match e {
            MapError::Pool(p) => FlowError::Pool(p),
            MapError::Actor { source, .. }
                if matches!(source, FlowError::MissingKey { .. } | FlowError::MissingData(_)) =>
            {
                source
            }
            MapError::Actor { actor, source } => FlowError::AtActor {
                actor,
                source: Box::new(source),
            },
        }
    }
}

/// Server-side aggregation rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AggregatorSpec {
    // Braced so that unknown keys in a config section are rejected.
    FedAvg {},
    /// Explicit weights (aligned with the ascending-id collection order),
    /// sample-count weights, or, when neither is given, weights drawn
    /// uniformly from `(seed, round)` on every aggregation.
    WeightedAvg {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default)]
        by_sample_count: bool,
        #[serde(default)]
        seed: u64,
    },
    ClippedAvg {
        clip_norm: f64,
    },
    CoordMedian {},
    TrimmedMean {
        trim_fraction: f64,
    },
}

impl AggregatorSpec {
    pub fn validate(&self) -> Result<(), FlowError> {
        match self {
            AggregatorSpec::WeightedAvg {
                weights,
                by_sample_count,
                ..
            } => {
                if weights.is_some() && *by_sample_count {
                    return Err(FlowError::InvalidAggregator(
                        "weights and by_sample_count are mutually exclusive".into(),
                    ));
                }
                if let Some(w) = weights {
                    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                        return Err(FlowError::InvalidAggregator("weights must be nonnegative".into()));
                    }
                }
            }
            AggregatorSpec::ClippedAvg { clip_norm } => {
                if !(*clip_norm > 0.0 && clip_norm.is_finite()) {
                    return Err(FlowError::InvalidAggregator("clip_norm must be positive".into()));
                }
            }
            AggregatorSpec::TrimmedMean { trim_fraction } => {
                if !(0.0..0.5).contains(trim_fraction) {
                    return Err(FlowError::InvalidAggregator("trim_fraction must be in [0, 0.5)".into()));
                }
            }
            AggregatorSpec::FedAvg {} | AggregatorSpec::CoordMedian {} => {}
        }
        Ok(())
    }
}

/// Everything `run_rounds` needs besides the pool and the test set.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub learner: LearnerSpec,
    pub aggregator: AggregatorSpec,
    pub rounds: usize,
    pub clients_per_round: usize,
    pub round_seed: u64,
    /// Model-poisoning attack applied between local training and collection.
    /// Set through [`crate::adversary::attach_attack`].
    pub attack: Option<AttackSpec>,
    /// Which server-aggregator runs the rounds when the pool has several
    /// (peer-to-peer architectures).
    pub coordinator: Option<ActorId>,
}

impl RoundConfig {
    pub fn new(learner: LearnerSpec, aggregator: AggregatorSpec, rounds: usize, clients_per_round: usize, round_seed: u64) -> Self {
        Self {
            learner,
            aggregator,
            rounds,
            clients_per_round,
            round_seed,
            attack: None,
            coordinator: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round_index: usize,
    pub participating_ids: Vec<ActorId>,
    pub server_loss: f64,
    pub server_accuracy: Option<f64>,
    /// Objective of each trained client after local training, ascending id order.
    pub per_client_train_loss: Vec<(ActorId, f64)>,
    /// Participants with no local samples; they kept the deployed parameters.
    pub skipped_ids: Vec<ActorId>,
}

impl RoundReport {
    pub fn mean_client_loss(&self) -> Option<f64> {
        if self.per_client_train_loss.is_empty() {
            return None;
        }
        let sum: f64 = self.per_client_train_loss.iter().map(|(_, l)| l).sum();
        Some(sum / self.per_client_train_loss.len() as f64)
    }
}

/// Outcome of [`train_clients`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainSummary {
    pub losses: Vec<(ActorId, f64)>,
    pub skipped: Vec<ActorId>,
}

fn missing(model: &FlexModel, key: &'static str) -> FlowError {
    FlowError::MissingKey {
        actor: model.owner_id().clone(),
        key,
    }
}

fn single_server(servers: &FlexPool) -> Result<ActorId, FlowError> {
    if servers.len() != 1 {
        return Err(FlowError::MultipleServers { found: servers.len() });
    }
    Ok(servers.ids().next().cloned().expect("one server"))
}

fn server_params(servers: &FlexPool) -> Result<ParamVector, FlowError> {
    let id = single_server(servers)?;
    let model = servers.model(id.as_str()).expect("selected actor has a model");
    model.params(PARAMS).cloned().ok_or_else(|| missing(&model, PARAMS))
}

/// Copies the single server's `params` into every client.
///
/// The server opens the communication (so the permission check applies),
/// then each client copies from a read-only snapshot of the broadcast.
pub fn deploy_server_model(servers: &FlexPool, clients: &FlexPool) -> Result<(), FlowError> {
    let params = server_params(servers)?;
    servers.check_permission(clients)?;
    clients.map_local(|m, _| {
        m.insert(PARAMS, Payload::Params(params.clone()));
        Ok::<_, FlowError>(())
    })?;
    Ok(())
}

/// Trains every client on its own data, replacing its `params`.
///
/// Clients without samples keep their parameters and are reported as skipped.
pub fn train_clients(clients: &FlexPool, spec: &LearnerSpec) -> Result<TrainSummary, FlowError> {
    spec.validate()?;
    let mut summary = TrainSummary::default();
    clients.map_local(|m, data| {
        let params = m.params(PARAMS).cloned().ok_or_else(|| missing(m, PARAMS))?;
        let data = data.ok_or_else(|| FlowError::MissingData(m.owner_id().clone()))?;
        m.insert(NUM_SAMPLES, Payload::Int(data.n_samples() as i64));
        if data.is_empty() {
            summary.skipped.push(m.owner_id().clone());
            return Ok(());
        }
        let trained = learners::train(spec, &params, data)?;
        let (loss, _) = learners::loss_and_gradient(spec, &trained, data)?;
        m.insert(PARAMS, Payload::Params(trained));
        m.insert(TRAIN_LOSS, Payload::Real(loss));
        summary.losses.push((m.owner_id().clone(), loss));
        Ok::<_, FlowError>(())
    })?;
    Ok(summary)
}

/// Gathers client `params` into each server's `collected` list.
pub fn collect_client_params(servers: &FlexPool, clients: &FlexPool) -> Result<(), FlowError> {
    servers.map_to(clients, |server, dst| {
        let mut params = Vec::with_capacity(dst.len());
        let mut ids = Vec::with_capacity(dst.len());
        let mut sizes = Vec::with_capacity(dst.len());
        for client in dst {
            params.push(client.params(PARAMS).cloned().ok_or_else(|| missing(client, PARAMS))?);
            ids.push(client.owner_id().to_string());
            sizes.push(client.int(NUM_SAMPLES).unwrap_or(0));
        }
        server.insert(COLLECTED, Payload::ParamsList(params));
        server.insert(COLLECTED_IDS, Payload::TextList(ids));
        server.insert(COLLECTED_SIZES, Payload::IntList(sizes));
        Ok::<_, FlowError>(())
    })?;
    Ok(())
}

fn aggregate_model(model: &FlexModel, agg: &AggregatorSpec, round: usize) -> Result<ParamVector, FlowError> {
    let collected = model.params_list(COLLECTED).ok_or_else(|| missing(model, COLLECTED))?;
    if collected.is_empty() {
        return Err(FlowError::EmptyCollection);
    }
    let current = model.params(PARAMS);
    if let Some(cur) = current {
        if let Some(bad) = collected.iter().find(|p| !p.is_combinable(cur)) {
            return Err(FlowError::ShapeMismatch(format!(
                "collected '{}' does not match server '{}'",
                bad.shape_tag(),
                cur.shape_tag()
            )));
        }
    }
    match agg {
        AggregatorSpec::FedAvg {} => aggregate::fed_avg(collected),
        AggregatorSpec::CoordMedian {} => aggregate::coord_median(collected),
        AggregatorSpec::TrimmedMean { trim_fraction } => aggregate::trimmed_mean(collected, *trim_fraction),
        AggregatorSpec::ClippedAvg { clip_norm } => {
            let current = current.ok_or_else(|| missing(model, PARAMS))?;
            aggregate::clipped_avg(current, collected, *clip_norm)
        }
        AggregatorSpec::WeightedAvg {
            weights,
            by_sample_count,
            seed,
        } => {
            let w: Vec<f64> = if let Some(w) = weights {
                w.clone()
            } else if *by_sample_count {
                let sizes = match model.get(COLLECTED_SIZES) {
                    Some(Payload::IntList(s)) => s,
                    _ => return Err(missing(model, COLLECTED_SIZES)),
                };
                sizes.iter().map(|&s| s as f64).collect()
            } else {
                let mut rng = substream(*seed, round as u64);
                (0..collected.len()).map(|_| rng.random::<f64>()).collect()
            };
            aggregate::weighted_avg(collected, &w)
        }
    }
}

/// Replaces each server's `params` with the aggregate of its `collected` list.
///
/// `round` keys the random weights of a weighted average without explicit weights.
pub fn aggregate(servers: &FlexPool, agg: &AggregatorSpec, round: usize) -> Result<(), FlowError> {
    agg.validate()?;
    servers.map_local(|m, _| {
        let new = aggregate_model(m, agg, round)?;
        m.insert(PARAMS, Payload::Params(new));
        Ok::<_, FlowError>(())
    })?;
    Ok(())
}

/// Evaluates the single server's `params` on `test`.
pub fn set_aggregated_and_evaluate(servers: &FlexPool, spec: &LearnerSpec, test: &Dataset) -> Result<Metrics, FlowError> {
    let params = server_params(servers)?;
    Ok(learners::evaluate(spec, &params, test)?)
}

fn poison_cohort(cohort: &FlexPool, deployed: &ParamVector, atk: &AttackSpec) -> Result<(), FlowError> {
    let attackers = cohort.select(|id, _| atk.attacker_ids.contains(id));
    attackers.map_local(|m, _| {
        let after = m.params(PARAMS).ok_or_else(|| missing(m, PARAMS))?;
        let poisoned = poison_update(deployed, after, atk, m.owner_id().as_str())?;
        m.insert(PARAMS, Payload::Params(poisoned));
        Ok::<_, FlowError>(())
    })?;
    Ok(())
}

/// Runs `cfg.rounds` federated rounds on `pool`.
///
/// Each round samples `clients_per_round` clients uniformly without
/// replacement from a generator keyed on `(round_seed, round)`, deploys the
/// server parameters, trains locally, applies any model-poisoning attack to
/// attacking participants, collects, aggregates and evaluates on `test`.
pub fn run_rounds(pool: &FlexPool, cfg: &RoundConfig, test: &Dataset) -> Result<Vec<RoundReport>, FlowError> {
    cfg.learner.validate()?;
    cfg.aggregator.validate()?;
    let servers = pool.select(|id, roles| {
        roles.is_server() && roles.is_aggregator() && cfg.coordinator.as_ref().is_none_or(|c| c == id)
    });
    let server_id = single_server(&servers)?;
    let clients = pool.select(|id, roles| roles.is_client() && *id != server_id);
    if cfg.rounds > 0 && cfg.clients_per_round == 0 {
        return Err(FlowError::InvalidRun("clients_per_round must be at least 1".into()));
    }
    if cfg.clients_per_round > clients.len() {
        return Err(PoolError::SelectionTooLarge {
            requested: cfg.clients_per_round,
            available: clients.len(),
        }
        .into());
    }
    let model_attack = cfg.attack.as_ref().filter(|a| a.kind.is_model_poisoning());

    let mut reports = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let in_round = |e: FlowError| FlowError::InRound {
            round,
            source: Box::new(e),
        };
        let report = (|| {
            let cohort = clients.select_random_with(cfg.clients_per_round, &mut substream(cfg.round_seed, round as u64))?;
            deploy_server_model(&servers, &cohort)?;
            let summary = train_clients(&cohort, &cfg.learner)?;
            if let Some(atk) = model_attack {
                poison_cohort(&cohort, &server_params(&servers)?, atk)?;
            }
            collect_client_params(&servers, &cohort)?;
            aggregate(&servers, &cfg.aggregator, round)?;
            let metrics = set_aggregated_and_evaluate(&servers, &cfg.learner, test)?;
            Ok::<_, FlowError>(RoundReport {
                round_index: round,
                participating_ids: cohort.ids().cloned().collect(),
                server_loss: metrics.loss,
                server_accuracy: metrics.accuracy,
                per_client_train_loss: summary.losses,
                skipped_ids: summary.skipped,
            })
        })()
        .map_err(in_round)?;
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actors::client_server_architecture;
    use crate::dataset::generate_blobs;
    use crate::learners::{init_params, LearnerKind};
    use crate::partition::{from_config, FedDatasetConfig};

    fn spec() -> LearnerSpec {
        LearnerSpec {
            kind: LearnerKind::LogisticRegression,
            n_features: 2,
            l2: 0.0,
            lr: 0.1,
            epochs: 1,
            batch_size: 8,
            seed: 0,
        }
    }

    fn pool(n_clients: usize) -> FlexPool {
        let d = generate_blobs(60, 2, 2, 4.0, 3).unwrap();
        let fed = from_config(&d, &FedDatasetConfig::new(1, n_clients)).unwrap();
        let ids: Vec<String> = (0..n_clients).map(|i| i.to_string()).collect();
        let actors = client_server_architecture(&ids, "server").unwrap();
        let s = spec();
        FlexPool::new(fed, actors, |_, roles| {
            if roles.is_server() {
                vec![(PARAMS.to_string(), Payload::Params(init_params(&s)))]
            } else {
                vec![]
            }
        })
        .unwrap()
    }

    fn set_params(pool: &FlexPool, id: &str, values: &[f64]) {
        let p = ParamVector::new(values.to_vec(), spec().shape_tag()).unwrap();
        pool.select(|a, _| a.as_str() == id)
            .map_local(|m, _| {
                m.insert(PARAMS, Payload::Params(p.clone()));
                Ok::<_, FlowError>(())
            })
            .unwrap();
    }

    #[test]
    fn deploy_copies_server_params() {
        let p = pool(3);
        set_params(&p, "server", &[1.0, 2.0, 3.0]);
        deploy_server_model(&p.servers(), &p.clients()).unwrap();
        for id in ["0", "1", "2"] {
            assert_eq!(p.model(id).unwrap().params(PARAMS).unwrap().values(), &[1.0, 2.0, 3.0]);
        }
        set_params(&p, "server", &[9.0, 9.0, 9.0]);
        assert_eq!(p.model("1").unwrap().params(PARAMS).unwrap().values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn deploy_needs_one_server() {
        let p = pool(3);
        let two = p.select(|id, _| id.as_str() != "2");
        let err = deploy_server_model(&two, &p.clients()).unwrap_err();
        assert!(matches!(err, FlowError::MultipleServers { found: 3 }));
    }

    #[test]
    fn training_is_deterministic_and_skips_empty() {
        let p = pool(2);
        deploy_server_model(&p.servers(), &p.clients()).unwrap();
        let summary = train_clients(&p.clients(), &spec()).unwrap();
        assert_eq!(summary.losses.len(), 2);
        assert!(summary.skipped.is_empty());

        let d = generate_blobs(20, 2, 2, 4.0, 3).unwrap();
        let mut cfg = FedDatasetConfig::new(0, 2);
        cfg.weights = Some(vec![1.0, 0.0]);
        let fed = from_config(&d, &cfg).unwrap();
        let actors = client_server_architecture(&["0", "1"], "server").unwrap();
        let s = spec();
        let p = FlexPool::new(fed, actors, |_, _| vec![(PARAMS.to_string(), Payload::Params(init_params(&s)))]).unwrap();
        let summary = train_clients(&p.clients(), &spec()).unwrap();
        assert_eq!(summary.skipped, vec![ActorId::from("1")]);
        assert_eq!(p.model("1").unwrap().params(PARAMS), Some(&init_params(&s)));
    }

    #[test]
    fn identical_clients_train_identically() {
        let d = generate_blobs(20, 2, 2, 4.0, 3).unwrap();
        let mut cfg = FedDatasetConfig::new(0, 2);
        cfg.replacement = true;
        cfg.weights = Some(vec![1.0, 1.0]);
        let fed = from_config(&d, &cfg).unwrap();
        let actors = client_server_architecture(&["0", "1"], "server").unwrap();
        let s = spec();
        let p = FlexPool::new(fed, actors, |_, _| vec![(PARAMS.to_string(), Payload::Params(init_params(&s)))]).unwrap();
        train_clients(&p.clients(), &s).unwrap();
        assert_eq!(
            p.model("0").unwrap().params(PARAMS),
            p.model("1").unwrap().params(PARAMS)
        );
    }

    #[test]
    fn collect_orders_by_id_and_reports_missing() {
        let p = pool(3);
        for (id, v) in [("0", 1.0), ("1", 2.0), ("2", 3.0)] {
            set_params(&p, id, &[v, v, v]);
        }
        collect_client_params(&p.servers(), &p.clients()).unwrap();
        let server = p.snapshot("server").unwrap();
        let firsts: Vec<f64> = server.params_list(COLLECTED).unwrap().iter().map(|v| v.values()[0]).collect();
        assert_eq!(firsts, vec![1.0, 2.0, 3.0]);
        assert_eq!(server.get(COLLECTED_IDS), Some(&Payload::TextList(vec!["0".into(), "1".into(), "2".into()])));

        let fresh = pool(3);
        set_params(&fresh, "0", &[1.0, 1.0, 1.0]);
        let err = collect_client_params(&fresh.servers(), &fresh.clients()).unwrap_err();
        assert_eq!(err, FlowError::MissingKey { actor: "1".into(), key: PARAMS });
    }

    #[test]
    fn empty_cohort_then_aggregate_fails() {
        let p = pool(3);
        let nobody = p.select(|_, _| false);
        collect_client_params(&p.servers(), &nobody).unwrap();
        assert!(p.model("server").unwrap().params_list(COLLECTED).unwrap().is_empty());
        let err = aggregate(&p.servers(), &AggregatorSpec::FedAvg {}, 0).unwrap_err();
        assert_eq!(err.root(), &FlowError::EmptyCollection);
    }

    #[test]
    fn evaluate_surfaces_errors() {
        let p = pool(2);
        let test = generate_blobs(40, 2, 2, 4.0, 5).unwrap();
        let m = set_aggregated_and_evaluate(&p.servers(), &spec(), &test).unwrap();
        assert_eq!(m.accuracy, Some(0.5));
        let err = set_aggregated_and_evaluate(&p.servers(), &spec(), &test.without_labels()).unwrap_err();
        assert_eq!(err, FlowError::Learner(LearnerError::NoLabels));
        let clients = p.clients();
        assert!(matches!(
            set_aggregated_and_evaluate(&clients.select(|_, _| false), &spec(), &test),
            Err(FlowError::MultipleServers { found: 0 })
        ));
    }

    #[test]
    fn zero_rounds_touch_nothing() {
        let p = pool(3);
        let cfg = RoundConfig::new(spec(), AggregatorSpec::FedAvg {}, 0, 2, 0);
        let test = generate_blobs(40, 2, 2, 4.0, 5).unwrap();
        assert!(run_rounds(&p, &cfg, &test).unwrap().is_empty());
        assert_eq!(p.model("server").unwrap().params(PARAMS), Some(&init_params(&spec())));
        assert!(p.model("0").unwrap().is_empty());
    }

    #[test]
    fn run_rounds_reports_each_round() {
        let p = pool(4);
        let cfg = RoundConfig::new(spec(), AggregatorSpec::CoordMedian {}, 3, 2, 7);
        let test = generate_blobs(40, 2, 2, 4.0, 5).unwrap();
        let reports = run_rounds(&p, &cfg, &test).unwrap();
        assert_eq!(reports.len(), 3);
        for (i, r) in reports.iter().enumerate() {
            assert_eq!(r.round_index, i);
            assert_eq!(r.participating_ids.len(), 2);
            assert_eq!(r.per_client_train_loss.len(), 2);
        }
        let again = pool(4);
        assert_eq!(run_rounds(&again, &cfg, &test).unwrap(), reports);

        let too_many = RoundConfig::new(spec(), AggregatorSpec::FedAvg {}, 1, 5, 0);
        assert!(matches!(
            run_rounds(&p, &too_many, &test),
            Err(FlowError::Pool(PoolError::SelectionTooLarge { .. }))
        ));
    }

    #[test]
    fn aggregator_spec_validation() {
        assert!(AggregatorSpec::ClippedAvg { clip_norm: 0.0 }.validate().is_err());
        assert!(AggregatorSpec::TrimmedMean { trim_fraction: 0.5 }.validate().is_err());
        assert!(AggregatorSpec::TrimmedMean { trim_fraction: 0.0 }.validate().is_ok());
        assert!(AggregatorSpec::WeightedAvg { weights: Some(vec![1.0]), by_sample_count: true, seed: 0 }
            .validate()
            .is_err());
    }

    #[test]
    fn random_weights_are_redrawn_per_round() {
        let p = pool(3);
        for (id, v) in [("0", 1.0), ("1", 2.0), ("2", 3.0)] {
            set_params(&p, id, &[v, v, v]);
        }
        let agg = AggregatorSpec::WeightedAvg { weights: None, by_sample_count: false, seed: 4 };
        let servers = p.servers();
        let mut outcomes = Vec::new();
        for round in [0, 1, 0] {
            collect_client_params(&servers, &p.clients()).unwrap();
            aggregate(&servers, &agg, round).unwrap();
            outcomes.push(p.model("server").unwrap().params(PARAMS).unwrap().values()[0]);
        }
        assert_ne!(outcomes[0], outcomes[1]);
        assert_eq!(outcomes[0], outcomes[2]);
        assert!(outcomes.iter().all(|v| (1.0..=3.0).contains(v)));
    }
}

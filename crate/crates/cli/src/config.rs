//! Experiment configuration files (TOML).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use flexsim::actors::{client_server_architecture, p2p_architecture, FlexActors};
use flexsim::dataset::{generate_blobs, load_csv, train_test_split, Dataset};
use flexsim::{AggregatorSpec, AttackSpec, FedDatasetConfig, LearnerKind, LearnerSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One experiment, as written in a config file.
///
/// Only `dataset` is required; `partition` defaults to a single node and the
/// remaining sections are needed by `run` but not by `partition inspect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub partition: FedDatasetConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<Architecture>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learner: Option<LearnerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregator: Option<AggregatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Blobs {
        n_samples: usize,
        n_features: usize,
        n_classes: usize,
        class_separation: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        /// Relative paths are taken from the config file's directory.
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_column: Option<String>,
        #[serde(default = "yes")]
        has_header: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    /// Clients default to the partition's node ids.
    ClientServer {
        #[serde(default = "default_server")]
        server_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_ids: Option<Vec<String>>,
    },
    /// Nodes default to the partition's node ids and the coordinator to the
    /// first node. The coordinator aggregates and does not train.
    P2p {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node_ids: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coordinator: Option<String>,
    },
}

fn default_server() -> String {
    "server".into()
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::ClientServer {
            server_id: default_server(),
            client_ids: None,
        }
    }
}

/// Learner settings; `n_features` defaults to the partitioned data's width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    pub kind: LearnerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_features: Option<usize>,
    #[serde(default)]
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub rounds: usize,
    pub clients_per_round: usize,
    #[serde(default)]
    pub round_seed: u64,
    /// Share of the source rows held out for server evaluation. With 0 the
    /// server is evaluated on the whole training source.
    #[serde(default)]
    pub test_fraction: f64,
}

impl ExperimentConfig {
    /// Reads and parses a config file. Relative CSV paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let DatasetSource::Csv { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                *data = base.join(&*data);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config("config", e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::runtime("config", format!("cannot serialize config: {e}")))
    }

    /// Applies a command-line seed to both the partition and the round sampler.
    pub fn override_seed(&mut self, seed: u64) {
        self.partition.seed = seed;
        if let Some(run) = &mut self.run {
            run.round_seed = seed;
        }
    }

    /// Builds or loads the source dataset.
    pub fn load_source(&self) -> Result<Dataset, CliError> {
        match &self.dataset {
            DatasetSource::Blobs {
                n_samples,
                n_features,
                n_classes,
                class_separation,
                seed,
            } => generate_blobs(*n_samples, *n_features, *n_classes, *class_separation, *seed)
                .map_err(|e| CliError::config("dataset", e.to_string())),
            DatasetSource::Csv {
                path,
                label_column,
                has_header,
            } => load_csv(path, label_column.as_deref(), *has_header)
                .map_err(|e| CliError::runtime("dataset", format!("{}: {e}", path.display()))),
        }
    }

    /// Splits the source into the rows to partition and the server's test
    /// set. Without a `run` section nothing is held out.
    pub fn split_source(&self, source: &Dataset) -> Result<(Dataset, Dataset), CliError> {
        let fraction = self.run.as_ref().map_or(0.0, |r| r.test_fraction);
        let (train, test) = train_test_split(source, fraction, self.partition.seed)
            .map_err(|e| CliError::config("run", e.to_string()))?;
        if fraction == 0.0 {
            return Ok((train.clone(), train));
        }
        if train.is_empty() || test.is_empty() {
            return Err(CliError::config(
                "run",
                format!("test_fraction {fraction} leaves an empty train or test set"),
            ));
        }
        Ok((train, test))
    }

    /// Fills every defaulted id list, the learner width and the coordinator so
    /// that the echoed config pins down the run completely, then checks
    /// cross-section consistency. `data` is the dataset being partitioned.
    pub fn resolve_for_run(&mut self, data: &Dataset) -> Result<Resolved, CliError> {
        self.partition
            .validate(data)
            .map_err(|e| CliError::config("partition", e.to_string()))?;
        for seed in [Some(self.partition.seed), self.run.as_ref().map(|r| r.round_seed)].into_iter().flatten() {
            if i64::try_from(seed).is_err() {
                return Err(CliError::config("config", format!("seed {seed} exceeds the largest TOML integer")));
            }
        }
        if self.partition.features_per_node.is_some() {
            return Err(CliError::config(
                "partition",
                "features_per_node gives nodes different feature spaces; federated rounds need a shared one",
            ));
        }
        if self.partition.keep_labels.as_ref().is_some_and(|k| k.iter().any(|keep| !keep)) {
            return Err(CliError::config("partition", "every node must keep its labels to train"));
        }
        let (Some(learner), Some(aggregator), Some(run)) = (&mut self.learner, &self.aggregator, &self.run) else {
            return Err(CliError::config("config", "run needs learner, aggregator and run sections"));
        };

        let width = data.n_features();
        match learner.n_features {
            None => learner.n_features = Some(width),
            Some(n) if n != width => {
                return Err(CliError::config(
                    "learner",
                    format!("n_features is {n} but the partitioned data has {width} features"),
                ))
            }
            Some(_) => {}
        }
        let spec = LearnerSpec {
            kind: learner.kind,
            n_features: width,
            l2: learner.l2,
            lr: learner.lr,
            epochs: learner.epochs,
            batch_size: learner.batch_size,
            seed: learner.seed,
        };
        spec.validate().map_err(|e| CliError::config("learner", e.to_string()))?;
        aggregator.validate().map_err(|e| CliError::config("aggregator", e.to_string()))?;

        let node_ids: Vec<String> = self.partition.resolved_node_ids().iter().map(|id| id.to_string()).collect();
        let arch = self.architecture.get_or_insert_with(Architecture::default);
        let (actors, clients, coordinator) = match arch {
            Architecture::ClientServer { server_id, client_ids } => {
                let clients = client_ids.get_or_insert_with(|| node_ids.clone()).clone();
                if clients.contains(server_id) {
                    return Err(CliError::config(
                        "architecture",
                        format!("server id '{server_id}' is also listed as a client"),
                    ));
                }
                let actors = client_server_architecture(&clients, server_id)
                    .map_err(|e| CliError::config("architecture", e.to_string()))?;
                (actors, clients, None)
            }
            Architecture::P2p { node_ids: nodes, coordinator } => {
                let nodes = nodes.get_or_insert_with(|| node_ids.clone()).clone();
                let coordinator = coordinator
                    .get_or_insert_with(|| nodes.first().cloned().unwrap_or_default())
                    .clone();
                if !nodes.contains(&coordinator) {
                    return Err(CliError::config(
                        "architecture",
                        format!("coordinator '{coordinator}' is not one of the nodes"),
                    ));
                }
                let actors = p2p_architecture(&nodes).map_err(|e| CliError::config("architecture", e.to_string()))?;
                let clients = nodes.into_iter().filter(|n| *n != coordinator).collect();
                (actors, clients, Some(coordinator))
            }
        };
        for id in &node_ids {
            if !actors.contains(id) {
                return Err(CliError::config(
                    "architecture",
                    format!("partition node '{id}' is not an actor of the architecture"),
                ));
            }
        }

        let eligible: BTreeSet<&str> = clients.iter().map(String::as_str).collect();
        if let Some(atk) = &self.attack {
            atk.validate().map_err(|e| CliError::config("attack", e.to_string()))?;
            for id in &atk.attacker_ids {
                if !eligible.contains(id.as_str()) {
                    return Err(CliError::config(
                        "attack",
                        format!("attacker '{id}' is not a training client"),
                    ));
                }
            }
        }
        if run.rounds > 0 && run.clients_per_round == 0 {
            return Err(CliError::config("run", "clients_per_round must be at least 1"));
        }
        if run.clients_per_round > eligible.len() {
            return Err(CliError::config(
                "run",
                format!(
                    "clients_per_round is {} but only {} clients can train",
                    run.clients_per_round,
                    eligible.len()
                ),
            ));
        }
        Ok(Resolved {
            actors,
            spec,
            coordinator,
        })
    }
}

/// What a validated config hands to the runner besides itself.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub actors: FlexActors,
    pub spec: LearnerSpec,
    pub coordinator: Option<String>,
}

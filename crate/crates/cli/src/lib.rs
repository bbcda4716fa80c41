//! Batch runner behind the `flexsim` binary.
//!
//! [`cmd_run`] executes one experiment config and writes `metrics.csv`,
//! `final_params.txt` and `resolved_config.toml`; [`cmd_partition_inspect`]
//! only partitions and reports per-node counts.

pub mod config;

use std::fs;
use std::path::Path;

use flexsim::adversary::attach_attack;
use flexsim::dataset::Dataset;
use flexsim::flows::{run_rounds, RoundReport, PARAMS};
use flexsim::learners::init_params;
use flexsim::partition::from_config;
use flexsim::pool::{FlexPool, Payload};
use flexsim::RoundConfig;
use thiserror::Error;

pub use config::ExperimentConfig;

pub const METRICS_FILE: &str = "metrics.csv";
pub const PARAMS_FILE: &str = "final_params.txt";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

/// A failed command. The module names the part of the experiment at fault.
#[derive(Debug, Error)]
pub enum CliError {
    /// The config is unreadable, malformed or inconsistent.
    #[error("{module}: {message}")]
    Config { module: &'static str, message: String },
    #[error("{module}: {message}")]
    Runtime { module: &'static str, message: String },
}

impl CliError {
    pub fn config(module: &'static str, message: impl Into<String>) -> Self {
        CliError::Config {
            module,
            message: message.into(),
        }
    }

    pub fn runtime(module: &'static str, message: impl Into<String>) -> Self {
        CliError::Runtime {
            module,
            message: message.into(),
        }
    }

    /// 2 for config problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime { .. } => 1,
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::runtime("output", format!("{}: {e}", path.display()))
}

/// Runs the experiment described by `config_path` and writes its artifacts
/// into `out_dir`, creating it if needed. `seed` replaces both the partition
/// seed and the round seed.
pub fn cmd_run(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<Vec<RoundReport>, CliError> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed {
        cfg.override_seed(seed);
    }
    let source = cfg.load_source()?;
    let (train, test) = cfg.split_source(&source)?;
    let resolved = cfg.resolve_for_run(&train)?;

    fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let echo = out_dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&echo, cfg.to_toml()?).map_err(|e| io_error(&echo, e))?;

    let fed = from_config(&train, &cfg.partition).map_err(|e| CliError::runtime("partition", e.to_string()))?;
    let spec = resolved.spec;
    let mut pool = FlexPool::new(fed, resolved.actors, |_, roles| {
        roles
            .is_server()
            .then(|| (PARAMS.to_string(), Payload::Params(init_params(&spec))))
    })
    .map_err(|e| CliError::runtime("pool", e.to_string()))?;

    // resolve_for_run guarantees these sections exist.
    let (Some(aggregator), Some(run)) = (&cfg.aggregator, &cfg.run) else {
        unreachable!("validated config lacks aggregator or run")
    };
    let mut round_cfg = RoundConfig::new(
        spec.clone(),
        aggregator.clone(),
        run.rounds,
        run.clients_per_round,
        run.round_seed,
    );
    round_cfg.coordinator = resolved.coordinator.clone().map(Into::into);
    if let Some(atk) = &cfg.attack {
        round_cfg = attach_attack(&mut pool, round_cfg, atk.clone()).map_err(|e| CliError::runtime("attack", e.to_string()))?;
    }

    let reports = run_rounds(&pool, &round_cfg, &test).map_err(|e| CliError::runtime("flows", e.to_string()))?;

    let metrics = out_dir.join(METRICS_FILE);
    write_metrics(&metrics, &reports).map_err(|e| io_error(&metrics, e))?;

    let server = match (&resolved.coordinator, &cfg.architecture) {
        (Some(c), _) => c.clone(),
        (None, Some(config::Architecture::ClientServer { server_id, .. })) => server_id.clone(),
        (None, _) => unreachable!("client-server architecture is resolved"),
    };
    let model = pool
        .snapshot(&server)
        .ok_or_else(|| CliError::runtime("pool", format!("no actor named '{server}'")))?;
    let params = model
        .params(PARAMS)
        .ok_or_else(|| CliError::runtime("flows", format!("server '{server}' holds no parameters")))?;
    let mut text = format!("{}\n", params.shape_tag());
    for v in params.values() {
        text.push_str(&format!("{v}\n"));
    }
    let out = out_dir.join(PARAMS_FILE);
    fs::write(&out, text).map_err(|e| io_error(&out, e))?;
    Ok(reports)
}

fn write_metrics(path: &Path, reports: &[RoundReport]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["round", "participants", "server_loss", "server_accuracy", "mean_client_loss"])?;
    for r in reports {
        let ids: Vec<&str> = r.participating_ids.iter().map(|id| id.as_str()).collect();
        w.write_record([
            r.round_index.to_string(),
            ids.join(";"),
            r.server_loss.to_string(),
            r.server_accuracy.map(|a| a.to_string()).unwrap_or_default(),
            r.mean_client_loss().map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Partitions the configured dataset and writes one CSV row per
/// (node, class) plus a `total` row per node. Nodes without class labels get
/// only the total row. Rows held out by `run.test_fraction` are excluded.
pub fn cmd_partition_inspect(config_path: &Path, out_path: &Path) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let source = cfg.load_source()?;
    let (train, _) = cfg.split_source(&source)?;
    cfg.partition
        .validate(&train)
        .map_err(|e| CliError::config("partition", e.to_string()))?;
    let fed = from_config(&train, &cfg.partition).map_err(|e| CliError::runtime("partition", e.to_string()))?;
    let classes = class_list(&train);
    write_inspection(out_path, &cfg, &fed, &classes).map_err(|e| io_error(out_path, e))
}

fn class_list(d: &Dataset) -> Vec<i64> {
    let mut classes: Vec<i64> = d
        .labels()
        .and_then(|l| l.as_classes())
        .map(|c| c.to_vec())
        .unwrap_or_default();
    classes.sort_unstable();
    classes.dedup();
    classes
}

fn write_inspection(
    path: &Path,
    cfg: &ExperimentConfig,
    fed: &flexsim::FedDataset,
    classes: &[i64],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node", "kind", "class", "count", "n_features", "labels_present"])?;
    for id in cfg.partition.resolved_node_ids() {
        let Some(d) = fed.get(id.as_str()) else { continue };
        let n_features = d.n_features().to_string();
        if let Some(labels) = d.labels().and_then(|l| l.as_classes()) {
            for c in classes {
                let count = labels.iter().filter(|&&l| l == *c).count();
                w.write_record([id.as_str(), "class", &c.to_string(), &count.to_string(), &n_features, "true"])?;
            }
        }
        let present = d.labels().is_some().to_string();
        w.write_record([id.as_str(), "total", "", &d.n_samples().to_string(), &n_features, &present])?;
    }
    w.flush()?;
    Ok(())
}

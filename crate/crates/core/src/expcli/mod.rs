//! Experiment plumbing: the combined configuration file, run directories,
//! metrics and reports.

pub mod metrics;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paramspace::Checkpoint;
use crate::trainer::{RunLog, TrainConfig};
use crate::transfer::TransferConfig;

pub use metrics::{
    mean_required_steps, relative_cost, reports_csv, required_steps, seed_rows_csv, transfer_success, SeedRow,
    TransferReport,
};

/// Environment variable naming the directory that holds run directories.
pub const RUN_ROOT_VAR: &str = "TACO_RUN_ROOT";

pub const CONFIG_FILE: &str = "config.toml";
pub const LOG_FILE: &str = "runlog.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Contents of an experiment configuration file: a `[train]` and a
/// `[transfer]` table, both optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub transfer: TransferConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.transfer.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// `$TACO_RUN_ROOT`, or `runs` when unset.
pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// A self-contained directory holding one run's configuration snapshot,
/// log and checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    /// `<root>/<kind>-<subject>-s<seed>`.
    pub fn under(root: &Path, kind: &str, subject: &str, seed: u64) -> Self {
        Self::new(root.join(format!("{kind}-{subject}-s{seed}")))
    }

    pub fn config_path(&self) -> PathBuf {
        self.path.join(CONFIG_FILE)
    }

    pub fn log_path(&self) -> PathBuf {
        self.path.join(LOG_FILE)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.path.join(CHECKPOINT_FILE)
    }

    /// A run is complete once its log and checkpoint exist and the stored
    /// configuration equals `config`.
    pub fn completed(&self, config: &ExperimentConfig) -> bool {
        let Ok(stored) = fs::read_to_string(self.config_path()) else {
            return false;
        };
        let same = ExperimentConfig::from_toml(&stored).is_ok_and(|c| &c == config);
        same && self.log_path().is_file() && self.checkpoint_path().is_file()
    }

    pub fn write(&self, config: &ExperimentConfig, log: &RunLog, checkpoint: &Checkpoint) -> Result<()> {
        fs::create_dir_all(&self.path)?;
        fs::write(self.config_path(), config.to_toml())?;
        log.save(&self.log_path())?;
        checkpoint.save(&self.checkpoint_path())
    }

    pub fn load_log(&self) -> Result<RunLog> {
        RunLog::load(&self.log_path())
    }

    pub fn load_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::load(&self.checkpoint_path())
    }
}

/// Reads a checkpoint from a file or from a run directory.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if path.is_dir() {
        RunDir::new(path).load_checkpoint()
    } else {
        Checkpoint::load(path)
    }
}

/// Every `runlog.jsonl` below `path` (or `path` itself), in sorted order.
pub fn find_logs(path: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(out);
    }
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == LOG_FILE) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Groups logs into transfer reports: one per (task, transfer kind), each
/// paired with the scratch logs of the same task.
pub fn build_reports(logs: &[RunLog], threshold: f64, n_max: u64) -> Vec<TransferReport> {
    let task_of = |l: &RunLog| l.meta.tasks.first().cloned().unwrap_or_default();
    let mut keys: Vec<(String, String)> = logs
        .iter()
        .filter(|l| l.meta.kind.starts_with("transfer"))
        .map(|l| (task_of(l), l.meta.kind.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(task, kind)| {
            let pick = |k: &str| -> Vec<RunLog> {
                logs.iter()
                    .filter(|l| l.meta.kind == k && task_of(l) == task)
                    .cloned()
                    .collect()
            };
            TransferReport::from_logs(&task, &kind, &pick(&kind), &pick("scratch"), threshold, n_max)
        })
        .collect()
}

//! Append-only training record, stored as JSON lines.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    /// `pretrain`, `transfer`, `scratch`, ...
    pub kind: String,
    pub tasks: Vec<String>,
    pub seed: u64,
    /// TOML snapshot of the configuration.
    pub config: String,
    /// Digest of kind, tasks, seed and configuration.
    pub artifact_hash: String,
}

impl RunMeta {
    pub fn new(kind: &str, tasks: Vec<String>, seed: u64, config: String) -> Self {
        let mut h = Sha256::new();
        h.update(kind.as_bytes());
        for t in &tasks {
            h.update(b"\0");
            h.update(t.as_bytes());
        }
        h.update(seed.to_le_bytes());
        h.update(config.as_bytes());
        let artifact_hash = h.finalize().iter().take(10).map(|b| format!("{b:02x}")).collect();
        Self {
            kind: kind.to_string(),
            tasks,
            seed,
            config,
            artifact_hash,
        }
    }
}

/// Mean losses over the gradient steps since the previous record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub q: f64,
    pub pi: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub grad_steps: u64,
    pub resets: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub env_step: u64,
    /// Per-task success rate in `[0, 1]`.
    pub success: Vec<f64>,
    pub losses: LossSummary,
    /// Seconds since the run started.
    pub wall_time: f64,
}

impl EvalRecord {
    pub fn average_success(&self) -> f64 {
        if self.success.is_empty() {
            0.0
        } else {
            self.success.iter().sum::<f64>() / self.success.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Line {
    Meta(RunMeta),
    Eval(EvalRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub records: Vec<EvalRecord>,
}

impl RunLog {
    pub fn new(meta: RunMeta) -> Self {
        Self {
            meta,
            records: Vec::new(),
        }
    }

    /// Appends a record; steps must increase and rates lie in `[0, 1]`.
    pub fn push(&mut self, rec: EvalRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.env_step <= last.env_step {
                return Err(Error::InvalidArgument(format!(
                    "eval step {} does not follow {}",
                    rec.env_step, last.env_step
                )));
            }
        }
        if rec.success.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidArgument("success rate outside [0, 1]".into()));
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn final_average_success(&self) -> Option<f64> {
        self.records.last().map(EvalRecord::average_success)
    }

    pub fn best_average_success(&self) -> Option<f64> {
        self.records.iter().map(EvalRecord::average_success).reduce(f64::max)
    }

    /// Equality apart from wall-clock timings.
    pub fn same_run(&self, other: &RunLog) -> bool {
        self.meta == other.meta
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.env_step == b.env_step
                    && a.success == b.success
                    && a.losses == b.losses
            })
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&Line::Meta(self.meta.clone()))?;
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(&Line::Eval(r.clone()))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read(BufReader::new(text.as_bytes()))
    }

    fn read(reader: impl BufRead) -> Result<Self> {
        let mut meta = None;
        let mut records = Vec::new();
        for (no, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Line>(&line)
                .map_err(|e| Error::Serde(format!("run log line {}: {e}", no + 1)))?
            {
                Line::Meta(m) if meta.is_none() => meta = Some(m),
                Line::Meta(_) => return Err(Error::Serde("run log has two meta lines".into())),
                Line::Eval(r) => records.push(r),
            }
        }
        let mut log = RunLog::new(meta.ok_or_else(|| Error::Serde("run log has no meta line".into()))?);
        for r in records {
            log.push(r)?;
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_jsonl()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(fs::File::open(path)?))
    }
}

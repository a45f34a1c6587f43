use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CompositionalMatrix, CompositionalVector, ParameterSet};
use crate::error::{Error, Result};

const FORMAT: &str = "taco-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub task_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub w: Vec<f64>,
    /// Learned log entropy temperature, when saved by a trainer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_alpha: Option<f64>,
    /// Target-critic shadow (critic slots only), when saved by a trainer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
}

/// Serialized parameter set plus compositional vectors.
///
/// JSON text with `phi` in column-major order. Floats are written in
/// shortest round-trip form and parsed with correct rounding, so
/// write-then-read is bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub n: usize,
    pub k: usize,
    pub layout_hash: String,
    #[serde(default)]
    pub env_step: u64,
    pub phi: Vec<f64>,
    pub tasks: Vec<TaskEntry>,
}

impl Checkpoint {
    pub fn new(layout_hash: impl Into<String>, phi: &ParameterSet, w: &CompositionalMatrix) -> Self {
        Self {
            format: FORMAT.to_string(),
            n: phi.n(),
            k: phi.k(),
            layout_hash: layout_hash.into(),
            env_step: 0,
            phi: phi.as_slice().to_vec(),
            tasks: w
                .columns()
                .iter()
                .map(|c| TaskEntry {
                    task_id: c.task_id,
                    name: None,
                    w: c.w.clone(),
                    log_alpha: None,
                    target: None,
                })
                .collect(),
        }
    }

    pub fn parameter_set(&self) -> Result<ParameterSet> {
        ParameterSet::from_column_major(self.n, self.k, self.phi.clone())
    }

    pub fn compositional_matrix(&self) -> Result<CompositionalMatrix> {
        let mut tasks: Vec<&TaskEntry> = self.tasks.iter().collect();
        tasks.sort_by_key(|t| t.task_id);
        CompositionalMatrix::new(
            tasks
                .into_iter()
                .map(|t| CompositionalVector::new(t.task_id, t.w.clone()))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// Fails unless the stored layout hash equals `expected`.
    pub fn check_layout(&self, expected: &str) -> Result<()> {
        if self.layout_hash == expected {
            Ok(())
        } else {
            Err(Error::LayoutMismatch {
                expected: expected.to_string(),
                found: self.layout_hash.clone(),
            })
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != FORMAT {
            return Err(Error::Serde(format!(
                "unsupported checkpoint format `{}` (expected `{FORMAT}`)",
                ckpt.format
            )));
        }
        if ckpt.phi.len() != ckpt.n * ckpt.k {
            return Err(Error::dim("checkpoint phi", ckpt.n * ckpt.k, ckpt.phi.len()));
        }
        if let Some(t) = ckpt.tasks.iter().find(|t| t.w.len() != ckpt.k) {
            return Err(Error::dim("checkpoint w", ckpt.k, t.w.len()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

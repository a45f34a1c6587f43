use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Categorical distribution over task ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDistribution {
    probs: Vec<f64>,
}

impl TaskDistribution {
    /// Normalises non-negative weights with positive total.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("task distribution over zero tasks".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("task weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("task weights sum to zero".into()));
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(num_tasks: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; num_tasks])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_tasks(&self) -> usize {
        self.probs.len()
    }
}

/// Categorical draw by inverse CDF.
pub fn sample_task<R: Rng + ?Sized>(dist: &TaskDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (task, &p) in dist.probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = task;
        }
        acc += p;
        if u < acc {
            return task;
        }
    }
    // Rounding left u above the final cumulative sum.
    last_positive
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How tasks are drawn on environment reset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SamplingMode {
    /// `p = 1 / T`.
    Uniform,
    /// Group-balanced over the difficulty tags of the suite.
    GroupBalanced,
    /// Normalised per-task weights, in suite order.
    Preset { weights: Vec<f64> },
    /// Group-balanced over DBSCAN clusters of the policy parameters,
    /// recomputed at every evaluation.
    Online {
        #[serde(default = "default_eps_scale")]
        eps_scale: f64,
        #[serde(default = "default_min_pts")]
        min_pts: usize,
    },
}

fn default_eps_scale() -> f64 {
    0.5
}

fn default_min_pts() -> usize {
    1
}

/// Which per-task loss the maskout threshold is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskTarget {
    Critic,
    Total,
}

/// Hyper-parameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Total batch per gradient step, split evenly over the tasks.
    pub batch_size: usize,
    pub n_parallel_envs: usize,
    pub hidden_sizes: Vec<usize>,
    pub lr_policy: f64,
    pub lr_q: f64,
    pub lr_w: f64,
    pub lr_alpha: f64,
    pub discount: f64,
    /// Uniform-random exploration steps before learning starts.
    pub warmup_steps: u64,
    pub replay_capacity: usize,
    /// Extreme loss threshold.
    pub epsilon: f64,
    pub mask_target: MaskTarget,
    /// Parameter-set size.
    pub k: usize,
    pub total_env_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub tau: f64,
    pub init_temperature: f64,
    /// Gradient steps per environment step after warm-up.
    pub updates_per_step: usize,
    pub sampling: SamplingMode,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1280,
            n_parallel_envs: 10,
            hidden_sizes: vec![64, 64],
            lr_policy: 3e-4,
            lr_q: 3e-4,
            lr_w: 3e-4,
            lr_alpha: 3e-4,
            discount: 0.99,
            warmup_steps: 1500,
            replay_capacity: 1_000_000,
            epsilon: 3e3,
            mask_target: MaskTarget::Critic,
            k: 5,
            total_env_steps: 400_000,
            eval_every: 10_000,
            eval_episodes: 5,
            tau: 0.005,
            init_temperature: 1.0,
            updates_per_step: 1,
            sampling: SamplingMode::Uniform,
            seeds: vec![0],
        }
    }
}

impl TrainConfig {
    /// Checks every invariant that does not depend on the suite.
    pub fn validate(&self) -> Result<()> {
        let positive_f = [
            ("lr_policy", self.lr_policy),
            ("lr_q", self.lr_q),
            ("lr_w", self.lr_w),
            ("lr_alpha", self.lr_alpha),
            ("epsilon", self.epsilon),
            ("init_temperature", self.init_temperature),
        ];
        for (name, v) in positive_f {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let positive_u = [
            ("batch_size", self.batch_size),
            ("n_parallel_envs", self.n_parallel_envs),
            ("replay_capacity", self.replay_capacity),
            ("k", self.k),
            ("eval_episodes", self.eval_episodes),
            ("updates_per_step", self.updates_per_step),
        ];
        for (name, v) in positive_u {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!("discount must lie in (0, 1], got {}", self.discount)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden_sizes must be non-empty and positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        match &self.sampling {
            SamplingMode::Preset { weights } if weights.iter().any(|w| !(*w > 0.0)) => {
                return Err(Error::Config("preset weights must be positive".into()));
            }
            SamplingMode::Online { eps_scale, min_pts } if !(*eps_scale > 0.0) || *min_pts == 0 => {
                return Err(Error::Config("online sampling needs eps_scale > 0 and min_pts >= 1".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Validates against a suite of `num_tasks` tasks; returns the per-task
    /// batch size.
    pub fn per_task_batch(&self, num_tasks: usize) -> Result<usize> {
        self.validate()?;
        if num_tasks == 0 {
            return Err(Error::Config("suite has no tasks".into()));
        }
        if self.batch_size % num_tasks != 0 {
            return Err(Error::Config(format!(
                "batch_size {} is not divisible by the {num_tasks} tasks",
                self.batch_size
            )));
        }
        if let SamplingMode::Preset { weights } = &self.sampling {
            if weights.len() != num_tasks {
                return Err(Error::Config(format!(
                    "preset weights list {} entries for {num_tasks} tasks",
                    weights.len()
                )));
            }
        }
        Ok(self.batch_size / num_tasks)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

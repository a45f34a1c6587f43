//! Multi-task pretraining of a parameter set and per-task vectors.

use super::config::{SamplingMode, TrainConfig};
use super::learner::{CompositionalLearner, LearnerHyper};
use super::runlog::RunMeta;
use super::runner::{self, BestSnapshot, RunOutcome, RunSpec, Sampling};
use super::{rng_stream, streams, TaskDistribution};
use crate::error::Result;
use crate::neurals::NetworkLayout;
use crate::taskdist::{group_balanced_probs, preset_weighted_probs, TaskGrouping};
use crate::taskworld::{TaskSpec, WorldParams};

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub learner: CompositionalLearner,
    pub run: RunOutcome,
}

impl PretrainOutcome {
    pub fn best(&self) -> Option<&BestSnapshot> {
        self.run.best.as_ref()
    }
}

/// Task sampling implied by the configured mode.
pub fn sampling_for(mode: &SamplingMode, tasks: &[TaskSpec]) -> Result<Sampling> {
    Ok(match mode {
        SamplingMode::Uniform => Sampling::Fixed(TaskDistribution::uniform(tasks.len())?),
        SamplingMode::GroupBalanced => Sampling::Fixed(group_balanced_probs(&TaskGrouping::by_difficulty(tasks)?)?),
        SamplingMode::Preset { weights } => Sampling::Fixed(preset_weighted_probs(weights)?),
        SamplingMode::Online { eps_scale, min_pts } => Sampling::Online {
            eps_scale: *eps_scale,
            min_pts: *min_pts,
        },
    })
}

pub fn layout_for(cfg: &TrainConfig, world: &WorldParams) -> Result<NetworkLayout> {
    NetworkLayout::new(world.state_dim, world.action_dim, &cfg.hidden_sizes)
}

/// Runs multi-task pretraining on `tasks` with the given seed.
pub fn run_pretraining(cfg: &TrainConfig, tasks: &[TaskSpec], world: &WorldParams, seed: u64) -> Result<PretrainOutcome> {
    let layout = layout_for(cfg, world)?;
    let hp = LearnerHyper::from_config(cfg, &layout, tasks.len())?;
    let mut learner = CompositionalLearner::initialise(
        layout,
        cfg.k,
        tasks.len(),
        hp,
        &mut rng_stream(seed, streams::INIT),
        &mut rng_stream(seed, streams::W_INIT),
        rng_stream(seed, streams::RESET),
    )?;
    let spec = RunSpec {
        tasks,
        world: *world,
        total_env_steps: cfg.total_env_steps,
        warmup_steps: cfg.warmup_steps,
        n_envs: cfg.n_parallel_envs,
        updates_per_step: cfg.updates_per_step,
        eval_every: cfg.eval_every,
        eval_episodes: cfg.eval_episodes,
        replay_capacity: cfg.replay_capacity,
        seed,
        sampling: sampling_for(&cfg.sampling, tasks)?,
        stop_at_success: None,
    };
    let meta = RunMeta::new(
        "pretrain",
        tasks.iter().map(|t| t.name.clone()).collect(),
        seed,
        cfg.to_toml(),
    );
    let run = runner::run(&mut learner, &spec, meta)?;
    Ok(PretrainOutcome { learner, run })
}

//! Multi-task SAC over composed parameters: configuration, replay, losses,
//! learners and the collection loop.

pub mod config;
pub mod distribution;
pub mod learner;
pub mod pretrain;
pub mod replay;
pub mod runlog;
pub mod runner;
pub mod sac;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{MaskTarget, SamplingMode, TrainConfig};
pub use distribution::{sample_task, TaskDistribution};
pub use learner::{Agent, CompositionalLearner, LearnerHyper, ScratchSac, StepStats, Trainable};
pub use pretrain::{run_pretraining, PretrainOutcome};
pub use replay::ReplayBuffer;
pub use runlog::{EvalRecord, LossSummary, RunLog, RunMeta};
pub use runner::{evaluate, run, BestSnapshot, RunOutcome, RunSpec, Sampling};
pub use sac::{sac_losses, SacGrads, SacHyper, SacLosses, SacWorkspace, TaskBatch};

/// Independent random streams derived from one run seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const W_INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const RESET: u64 = 3;
    pub const TASKS: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const EXPLORE: u64 = 6;
    pub const CRITIC_INIT: u64 = 7;
    /// Environment `i` uses stream `ENV_BASE + i`.
    pub const ENV_BASE: u64 = 100;
}

pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

//! Transfer of a pretrained parameter set to a new task, the fixed-`Phi`
//! variant, and the single-task SAC baseline.
//!
//! A transfer run has two phases. During the first `n_e` environment steps
//! the agent acts with a random member of the pretrained policy subspace
//! (a fresh convex combination of the pretrained `w` vectors per episode)
//! and only the new critics and temperature learn. Afterwards the policy is
//! released and `Phi` and `w_new` are trained jointly, or `w_new` alone
//! when `Phi` is frozen.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neurals::{self, NetworkLayout};
use crate::paramspace::{
    compose_into, convex_combination, sample_simplex, Checkpoint, CompositionalMatrix, CompositionalVector,
    ParameterSet,
};
use crate::taskworld::{TaskSpec, WorldParams};
use crate::trainer::learner::{random_action, Agent, CompositionalLearner, LearnerHyper, ScratchSac, StepStats, Trainable};
use crate::trainer::pretrain::layout_for;
use crate::trainer::runner::{self, RunOutcome, RunSpec, Sampling};
use crate::trainer::{rng_stream, streams, ReplayBuffer, RunMeta, TaskDistribution, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    /// Exploration steps with the subspace policy before the policy is
    /// released.
    pub n_e: u64,
    /// Environment step budget.
    pub n_max: u64,
    pub success_threshold: f64,
    pub freeze_phi: bool,
    /// End a run as soon as an evaluation reaches the threshold.
    pub stop_on_success: bool,
    pub seeds: Vec<u64>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            n_e: 20_000,
            n_max: 6_000_000,
            success_threshold: 0.9,
            freeze_phi: false,
            stop_on_success: true,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_e >= self.n_max {
            return Err(Error::Config(format!("n_e ({}) must be below n_max ({})", self.n_e, self.n_max)));
        }
        if !(self.success_threshold > 0.0 && self.success_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "success threshold must lie in (0, 1], got {}",
                self.success_threshold
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// Keeps the policy rows of every column of `phi_star` and draws the critic
/// rows afresh.
pub fn init_from_pretrained(phi_star: &ParameterSet, layout: &NetworkLayout, rng: &mut ChaCha8Rng) -> Result<ParameterSet> {
    if phi_star.n() != layout.n() {
        return Err(Error::LayoutMismatch {
            expected: format!("{} parameters", layout.n()),
            found: format!("{} parameters", phi_star.n()),
        });
    }
    let mut phi = phi_star.clone();
    for col in 0..phi.k() {
        layout.init_critics(phi.column_mut(col), rng);
    }
    Ok(phi)
}

/// Checks the layout hash, then applies [`init_from_pretrained`].
pub fn init_from_checkpoint(ck: &Checkpoint, layout: &NetworkLayout, rng: &mut ChaCha8Rng) -> Result<ParameterSet> {
    ck.check_layout(&layout.hash())?;
    init_from_pretrained(&ck.parameter_set()?, layout, rng)
}

/// Mean of the pretrained compositional vectors.
pub fn centroid(w_star: &CompositionalMatrix) -> Vec<f64> {
    let t = w_star.num_tasks();
    let all: Vec<usize> = (0..t).collect();
    convex_combination(w_star, &all, &vec![1.0 / t as f64; t])
}

/// Behaviour policy drawn from the convex hull of the pretrained vectors.
#[derive(Debug, Clone)]
pub struct ExplorePolicy {
    w_star: CompositionalMatrix,
}

impl ExplorePolicy {
    pub fn new(w_star: CompositionalMatrix) -> Self {
        Self { w_star }
    }

    pub fn num_columns(&self) -> usize {
        self.w_star.num_tasks()
    }

    /// `beta` uniform on the simplex over the pretrained tasks and
    /// `w~ = W* beta`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let beta = sample_simplex(self.num_columns(), rng);
        let w = self.compose_beta(&beta);
        (beta, w)
    }

    pub fn compose_beta(&self, beta: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.num_columns()).collect();
        convex_combination(&self.w_star, &all, beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Explore,
    Finetune,
}

/// Single-task learner on a transferred parameter set.
#[derive(Debug, Clone)]
pub struct TransferAgent {
    learner: CompositionalLearner,
    explore: ExplorePolicy,
    phase: Phase,
    freeze_phi: bool,
    /// Composed behaviour parameters of each environment's episode.
    behaviour: Vec<Vec<f64>>,
}

impl TransferAgent {
    /// `phi` already carries fresh critics; `w_new` starts at the centroid.
    pub fn new(
        layout: NetworkLayout,
        phi: ParameterSet,
        w_star: CompositionalMatrix,
        hp: LearnerHyper,
        freeze_phi: bool,
        reset_rng: ChaCha8Rng,
    ) -> Result<Self> {
        if w_star.k() != phi.k() {
            return Err(Error::dim("pretrained compositional vectors", phi.k(), w_star.k()));
        }
        let w_new = CompositionalMatrix::new(vec![CompositionalVector::new(0, centroid(&w_star))?])?;
        let mut learner = CompositionalLearner::new(layout, phi, w_new, hp, reset_rng)?;
        if freeze_phi {
            learner.own_critics();
        }
        learner.set_trainable(Trainable {
            phi_policy: false,
            phi_critic: !freeze_phi,
            w: false,
        });
        Ok(Self {
            learner,
            explore: ExplorePolicy::new(w_star),
            phase: Phase::Explore,
            freeze_phi,
            behaviour: Vec::new(),
        })
    }

    pub fn learner(&self) -> &CompositionalLearner {
        &self.learner
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn explore_policy(&self) -> &ExplorePolicy {
        &self.explore
    }

    /// Releases the policy for fine-tuning.
    pub fn release(&mut self) {
        self.phase = Phase::Finetune;
        self.learner.set_trainable(if self.freeze_phi {
            Trainable {
                phi_policy: false,
                phi_critic: false,
                w: true,
            }
        } else {
            Trainable::ALL
        });
    }
}

impl Agent for TransferAgent {
    fn num_tasks(&self) -> usize {
        1
    }

    fn layout(&self) -> &NetworkLayout {
        self.learner.layout()
    }

    fn begin_episode(&mut self, env: usize, _task: usize, rng: &mut ChaCha8Rng) {
        if self.phase != Phase::Explore {
            return;
        }
        if self.behaviour.len() <= env {
            self.behaviour.resize(env + 1, vec![0.0; self.learner.phi().n()]);
        }
        let (_, w) = self.explore.draw(rng);
        compose_into(self.learner.phi(), &w, &mut self.behaviour[env]).expect("pretrained vectors match phi");
    }

    fn act(&mut self, env: usize, task: usize, obs: &[f64], warmup: bool, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self.phase {
            Phase::Explore => match self.behaviour.get(env) {
                Some(theta) => {
                    let out = neurals::policy_forward(theta, self.layout(), obs).expect("observation matches layout");
                    neurals::sample_action(&out, rng).action
                }
                None => random_action(self.layout().action_dim, rng),
            },
            Phase::Finetune => self.learner.act(env, task, obs, warmup, rng),
        }
    }

    fn eval_act(&self, task: usize, obs: &[f64]) -> Vec<f64> {
        self.learner.eval_act(task, obs)
    }

    fn update(&mut self, buffer: &ReplayBuffer, rng: &mut ChaCha8Rng) -> Result<StepStats> {
        self.learner.update(buffer, rng)
    }

    fn train_during_warmup(&self) -> bool {
        true
    }

    fn on_warmup_end(&mut self) {
        self.release();
    }

    fn checkpoint(&self) -> Checkpoint {
        self.learner.checkpoint()
    }

    fn composition(&self) -> Option<(&ParameterSet, &CompositionalMatrix)> {
        self.learner.composition()
    }
}

#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub agent: TransferAgent,
    pub run: RunOutcome,
}

fn single_task_spec<'a>(
    cfg: &TrainConfig,
    tcfg: &TransferConfig,
    task: &'a [TaskSpec],
    world: &WorldParams,
    seed: u64,
    warmup_steps: u64,
) -> Result<RunSpec<'a>> {
    Ok(RunSpec {
        tasks: task,
        world: *world,
        total_env_steps: tcfg.n_max,
        warmup_steps,
        n_envs: cfg.n_parallel_envs,
        updates_per_step: cfg.updates_per_step,
        eval_every: cfg.eval_every,
        eval_episodes: cfg.eval_episodes,
        replay_capacity: cfg.replay_capacity,
        seed,
        sampling: Sampling::Fixed(TaskDistribution::uniform(1)?),
        stop_at_success: tcfg.stop_on_success.then_some(tcfg.success_threshold),
    })
}

fn single(task: &TaskSpec) -> [TaskSpec; 1] {
    let mut t = task.clone();
    t.task_id = 0;
    [t]
}

/// Transfers `pretrained` to `task`.
pub fn run_transfer(
    cfg: &TrainConfig,
    tcfg: &TransferConfig,
    pretrained: &Checkpoint,
    task: &TaskSpec,
    world: &WorldParams,
    seed: u64,
) -> Result<TransferOutcome> {
    tcfg.validate()?;
    let layout = layout_for(cfg, world)?;
    let phi = init_from_checkpoint(pretrained, &layout, &mut rng_stream(seed, streams::CRITIC_INIT))?;
    let hp = LearnerHyper::from_config(cfg, &layout, 1)?;
    let mut agent = TransferAgent::new(
        layout,
        phi,
        pretrained.compositional_matrix()?,
        hp,
        tcfg.freeze_phi,
        rng_stream(seed, streams::RESET),
    )?;
    let tasks = single(task);
    let spec = single_task_spec(cfg, tcfg, &tasks, world, seed, tcfg.n_e)?;
    let kind = if tcfg.freeze_phi { "transfer-fixed-phi" } else { "transfer" };
    let meta = RunMeta::new(kind, vec![task.name.clone()], seed, run_config_text(cfg, tcfg));
    let run = runner::run(&mut agent, &spec, meta)?;
    Ok(TransferOutcome { agent, run })
}

#[derive(Debug, Clone)]
pub struct ScratchOutcome {
    pub agent: ScratchSac,
    pub run: RunOutcome,
}

/// Single-task SAC from a fresh initialisation, with the same evaluation
/// protocol and budget as [`run_transfer`].
pub fn run_scratch(
    cfg: &TrainConfig,
    tcfg: &TransferConfig,
    task: &TaskSpec,
    world: &WorldParams,
    seed: u64,
) -> Result<ScratchOutcome> {
    tcfg.validate()?;
    let layout = layout_for(cfg, world)?;
    let hp = LearnerHyper::from_config(cfg, &layout, 1)?;
    let mut agent = ScratchSac::new(layout, hp, &mut rng_stream(seed, streams::INIT));
    let tasks = single(task);
    let spec = single_task_spec(cfg, tcfg, &tasks, world, seed, cfg.warmup_steps)?;
    let meta = RunMeta::new("scratch", vec![task.name.clone()], seed, run_config_text(cfg, tcfg));
    let run = runner::run(&mut agent, &spec, meta)?;
    Ok(ScratchOutcome { agent, run })
}

fn run_config_text(cfg: &TrainConfig, tcfg: &TransferConfig) -> String {
    let transfer = toml::to_string(tcfg).expect("transfer config serializes");
    format!("{}\n[transfer]\n{}", cfg.to_toml(), transfer)
}

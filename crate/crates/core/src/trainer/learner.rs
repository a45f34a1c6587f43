//! Gradient-step logic: the compositional multi-task learner and the plain
//! single-task SAC learner used as a baseline.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{MaskTarget, TrainConfig};
use super::replay::ReplayBuffer;
use super::sac::{sac_losses, SacHyper, SacLosses, SacWorkspace, TaskBatch};
use crate::error::{Error, Result};
use crate::neurals::{self, NetworkLayout};
use crate::optim::Adam;
use crate::paramspace::{
    self, accumulate_grad_phi, compose_into, mask_losses, Checkpoint, CompositionalMatrix, CompositionalVector,
    MaskoutPolicy, ParameterSet,
};

/// Step sizes and loss constants shared by both learners.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerHyper {
    pub lr_policy: f64,
    pub lr_q: f64,
    pub lr_w: f64,
    pub lr_alpha: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub mask_target: MaskTarget,
    pub per_task_batch: usize,
    pub sac: SacHyper,
    pub init_temperature: f64,
}

impl LearnerHyper {
    pub fn from_config(cfg: &TrainConfig, layout: &NetworkLayout, num_tasks: usize) -> Result<Self> {
        Ok(Self {
            lr_policy: cfg.lr_policy,
            lr_q: cfg.lr_q,
            lr_w: cfg.lr_w,
            lr_alpha: cfg.lr_alpha,
            tau: cfg.tau,
            epsilon: cfg.epsilon,
            mask_target: cfg.mask_target,
            per_task_batch: cfg.per_task_batch(num_tasks)?,
            sac: SacHyper {
                discount: cfg.discount,
                target_entropy: -(layout.action_dim as f64),
            },
            init_temperature: cfg.init_temperature,
        })
    }
}

/// Which parameter groups a [`CompositionalLearner`] may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub phi_policy: bool,
    pub phi_critic: bool,
    pub w: bool,
}

impl Trainable {
    pub const ALL: Self = Self {
        phi_policy: true,
        phi_critic: true,
        w: true,
    };
}

/// Outcome of one gradient step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    /// Losses of the tasks that had a batch, in task order.
    pub losses: Vec<(usize, SacLosses)>,
    /// Tasks whose loss crossed the threshold and were reset.
    pub reset: Vec<usize>,
}

/// Everything that acts in and learns from the environment.
pub trait Agent {
    fn num_tasks(&self) -> usize;

    fn layout(&self) -> &NetworkLayout;

    /// Hook at every environment reset of `env` onto `task`.
    fn begin_episode(&mut self, _env: usize, _task: usize, _rng: &mut ChaCha8Rng) {}

    /// Stochastic training action. `warmup` is true before learning starts.
    fn act(&mut self, env: usize, task: usize, obs: &[f64], warmup: bool, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Deterministic evaluation action.
    fn eval_act(&self, task: usize, obs: &[f64]) -> Vec<f64>;

    /// One gradient step from replay data.
    fn update(&mut self, buffer: &ReplayBuffer, rng: &mut ChaCha8Rng) -> Result<StepStats>;

    /// Whether [`Agent::update`] runs during warm-up.
    fn train_during_warmup(&self) -> bool {
        false
    }

    fn on_warmup_end(&mut self) {}

    /// Current parameters in checkpoint form.
    fn checkpoint(&self) -> Checkpoint;

    /// Parameter set and compositional vectors, if the agent has them.
    fn composition(&self) -> Option<(&ParameterSet, &CompositionalMatrix)> {
        None
    }
}

/// Uniform action in `[-1, 1]^d`.
pub fn random_action(action_dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..action_dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn stochastic_action(theta: &[f64], layout: &NetworkLayout, obs: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let out = neurals::policy_forward(theta, layout, obs).expect("observation matches layout");
    neurals::sample_action(&out, rng).action
}

fn greedy_action(theta: &[f64], layout: &NetworkLayout, obs: &[f64]) -> Vec<f64> {
    let out = neurals::policy_forward(theta, layout, obs).expect("observation matches layout");
    neurals::deterministic_action(&out)
}

fn mask_value(losses: &SacLosses, target: MaskTarget) -> f64 {
    match target {
        MaskTarget::Critic => losses.q,
        MaskTarget::Total => losses.total(),
    }
}

/// Adam segments covering the trainable rows of every column.
fn phi_segments(layout: &NetworkLayout, k: usize, trainable: Trainable, hp: &LearnerHyper) -> Vec<(std::ops::Range<usize>, f64)> {
    let n = layout.n();
    let mut segs = Vec::new();
    for col in 0..k {
        let off = col * n;
        let p = layout.policy_range();
        let c = layout.critic_range();
        if trainable.phi_policy {
            segs.push((p.start + off..p.end + off, hp.lr_policy));
        }
        if trainable.phi_critic {
            segs.push((c.start + off..c.end + off, hp.lr_q));
        }
    }
    segs
}

/// Multi-task SAC over `theta_tau = Phi w_tau` with loss maskout and w-reset.
///
/// Each task keeps its own temperature and target-critic shadow outside of
/// `Phi`. Optionally a task may own a dense critic instead of the composed
/// one, which leaves `Phi` untouched when only `w` is trained.
#[derive(Debug, Clone)]
pub struct CompositionalLearner {
    layout: NetworkLayout,
    phi: ParameterSet,
    w: CompositionalMatrix,
    log_alpha: Vec<f64>,
    targets: Vec<Vec<f64>>,
    owned_critics: Option<Vec<Vec<f64>>>,
    trainable: Trainable,
    hp: LearnerHyper,
    mask: MaskoutPolicy,
    phi_adam: Adam,
    w_adam: Vec<Adam>,
    alpha_adam: Vec<Adam>,
    critic_adam: Vec<Adam>,
    theta: Vec<Vec<f64>>,
    reset_rng: ChaCha8Rng,
    ws: SacWorkspace,
    steps: u64,
}

impl CompositionalLearner {
    pub fn new(
        layout: NetworkLayout,
        phi: ParameterSet,
        w: CompositionalMatrix,
        hp: LearnerHyper,
        reset_rng: ChaCha8Rng,
    ) -> Result<Self> {
        if phi.n() != layout.n() {
            return Err(Error::dim("parameter set rows", layout.n(), phi.n()));
        }
        if w.k() != phi.k() {
            return Err(Error::dim("compositional vectors", phi.k(), w.k()));
        }
        let t = w.num_tasks();
        let mask = MaskoutPolicy::new(hp.epsilon)?;
        let log_alpha = vec![hp.init_temperature.ln(); t];
        let mut me = Self {
            phi_adam: Adam::new(phi.n() * phi.k()),
            w_adam: (0..t).map(|_| Adam::new(phi.k())).collect(),
            alpha_adam: (0..t).map(|_| Adam::new(1)).collect(),
            critic_adam: Vec::new(),
            theta: vec![vec![0.0; phi.n()]; t],
            targets: Vec::new(),
            owned_critics: None,
            trainable: Trainable::ALL,
            layout,
            phi,
            w,
            log_alpha,
            hp,
            mask,
            reset_rng,
            ws: SacWorkspace::default(),
            steps: 0,
        };
        me.refresh_theta()?;
        let critic = me.layout.critic_range();
        me.targets = me.theta.iter().map(|th| th[critic.clone()].to_vec()).collect();
        Ok(me)
    }

    /// Fresh learner: every column of `Phi` initialised independently from
    /// `init_rng`, each `w_tau` drawn uniformly from the simplex on `w_rng`.
    pub fn initialise(
        layout: NetworkLayout,
        k: usize,
        num_tasks: usize,
        hp: LearnerHyper,
        init_rng: &mut ChaCha8Rng,
        w_rng: &mut ChaCha8Rng,
        reset_rng: ChaCha8Rng,
    ) -> Result<Self> {
        let columns: Vec<Vec<f64>> = (0..k).map(|_| layout.init_params(init_rng)).collect();
        let phi = ParameterSet::from_columns(&columns)?;
        let w = CompositionalMatrix::new(
            (0..num_tasks)
                .map(|t| CompositionalVector::new(t, paramspace::sample_simplex(k, w_rng)))
                .collect::<Result<_>>()?,
        )?;
        Self::new(layout, phi, w, hp, reset_rng)
    }

    pub fn phi(&self) -> &ParameterSet {
        &self.phi
    }

    pub fn w(&self) -> &CompositionalMatrix {
        &self.w
    }

    pub fn log_alpha(&self) -> &[f64] {
        &self.log_alpha
    }

    pub fn set_log_alpha(&mut self, task: usize, value: f64) {
        self.log_alpha[task] = value;
        self.alpha_adam[task].reset();
    }

    pub fn target(&self, task: usize) -> &[f64] {
        &self.targets[task]
    }

    /// Composed parameters of `task` (with its owned critic, if any).
    pub fn theta(&self, task: usize) -> &[f64] {
        &self.theta[task]
    }

    pub fn trainable(&self) -> Trainable {
        self.trainable
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn hyper(&self) -> &LearnerHyper {
        &self.hp
    }

    pub fn set_trainable(&mut self, trainable: Trainable) {
        self.trainable = trainable;
    }

    /// Gives every task a dense critic initialised from its current composed
    /// critic. Critic rows of `Phi` then no longer affect the networks.
    pub fn own_critics(&mut self) {
        let critic = self.layout.critic_range();
        let owned: Vec<Vec<f64>> = self.theta.iter().map(|th| th[critic.clone()].to_vec()).collect();
        self.critic_adam = owned.iter().map(|c| Adam::new(c.len())).collect();
        self.owned_critics = Some(owned);
    }

    pub fn owned_critic(&self, task: usize) -> Option<&[f64]> {
        self.owned_critics.as_ref().map(|c| c[task].as_slice())
    }

    /// Replaces `w_tau` and clears its optimiser state.
    pub fn set_w(&mut self, task: usize, w: Vec<f64>) -> Result<()> {
        self.w.set(task, w)?;
        self.w_adam[task].reset();
        self.refresh_task(task)
    }

    /// Sets every target shadow to its task's current critic.
    pub fn sync_targets(&mut self) {
        let critic = self.layout.critic_range();
        for (target, theta) in self.targets.iter_mut().zip(&self.theta) {
            target.copy_from_slice(&theta[critic.clone()]);
        }
    }

    fn refresh_task(&mut self, task: usize) -> Result<()> {
        compose_into(&self.phi, &self.w.column(task).w, &mut self.theta[task])?;
        if let Some(owned) = &self.owned_critics {
            let critic = self.layout.critic_range();
            self.theta[task][critic].copy_from_slice(&owned[task]);
        }
        Ok(())
    }

    fn refresh_theta(&mut self) -> Result<()> {
        (0..self.w.num_tasks()).try_for_each(|t| self.refresh_task(t))
    }

    /// Draws one batch per task that has data, in task order.
    pub fn sample_batches<'a>(&self, buffer: &'a ReplayBuffer, rng: &mut ChaCha8Rng) -> Vec<TaskBatch<'a>> {
        (0..self.w.num_tasks())
            .filter_map(|task| {
                let batch = TaskBatch::sample(buffer, task, self.hp.per_task_batch, self.layout.action_dim, rng);
                if batch.is_none() {
                    log::debug!("task {task} has no replay data; skipped this step");
                }
                batch
            })
            .collect()
    }

    /// One gradient step on explicit per-task batches.
    ///
    /// Order: losses on the current composed parameters; maskout; `Phi`
    /// update with the summed gradient of the valid tasks; `w` and
    /// temperature updates of the valid tasks; reset of each invalid `w`;
    /// target updates.
    pub fn train_step(&mut self, batches: &[TaskBatch<'_>]) -> Result<StepStats> {
        self.steps += 1;
        let t = self.w.num_tasks();
        let critic = self.layout.critic_range();
        let mut stats = StepStats::default();
        if batches.is_empty() {
            return Ok(stats);
        }

        let mut results = Vec::with_capacity(batches.len());
        for batch in batches {
            if batch.task_id >= t {
                return Err(Error::InvalidArgument(format!("batch for unknown task {}", batch.task_id)));
            }
            let task = batch.task_id;
            let (losses, grads) = sac_losses(
                &self.layout,
                &self.theta[task],
                &self.targets[task],
                self.log_alpha[task],
                batch,
                &self.hp.sac,
                &mut self.ws,
            )?;
            results.push((task, losses, grads));
        }

        let outcome = mask_losses(
            &results.iter().map(|(_, l, _)| mask_value(l, self.hp.mask_target)).collect::<Vec<_>>(),
            &self.mask,
        );
        let valid: Vec<usize> = outcome.valid.iter().map(|&i| results[i].0).collect();
        let invalid: Vec<usize> = outcome.invalid.iter().map(|&i| results[i].0).collect();
        if valid.is_empty() {
            return Err(Error::NoValidTasks { step: self.steps });
        }
        for &task in &invalid {
            log::warn!("step {}: task {task} loss above {}; masked and reset", self.steps, self.mask.epsilon());
        }

        // Owned critics take their gradient directly; the remainder routes
        // through the composition.
        if let Some(owned) = self.owned_critics.as_mut() {
            for &i in &outcome.valid {
                let (task, _, grads) = &mut results[i];
                self.critic_adam[*task].step_segments(
                    &mut owned[*task],
                    &grads.theta[critic.clone()],
                    &[(0..critic.len(), self.hp.lr_q)],
                );
                grads.theta[critic.clone()].iter_mut().for_each(|g| *g = 0.0);
            }
        }

        let w_grads: Vec<Option<Vec<f64>>> = outcome
            .valid
            .iter()
            .map(|&i| {
                if self.trainable.w {
                    paramspace::grad_w(&results[i].2.theta, &self.phi).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;

        let segments = phi_segments(&self.layout, self.phi.k(), self.trainable, &self.hp);
        if !segments.is_empty() {
            let mut g_phi = ParameterSet::zeros(self.phi.n(), self.phi.k())?;
            for &i in &outcome.valid {
                let (task, _, grads) = &results[i];
                accumulate_grad_phi(&mut g_phi, &grads.theta, &self.w.column(*task).w)?;
            }
            self.phi_adam
                .step_segments(self.phi.as_mut_slice(), g_phi.as_slice(), &segments);
        }

        for (&i, gw) in outcome.valid.iter().zip(w_grads) {
            let (task, _, grads) = &results[i];
            if let Some(gw) = gw {
                self.w_adam[*task].step(&mut self.w.column_mut(*task).w, &gw, self.hp.lr_w);
            }
            let mut la = [self.log_alpha[*task]];
            self.alpha_adam[*task].step(&mut la, &[grads.log_alpha], self.hp.lr_alpha);
            self.log_alpha[*task] = la[0];
        }

        for &task in &invalid {
            let fresh = paramspace::reset_w(&self.w, &valid, task, &mut self.reset_rng)
                .map_err(|_| Error::NoValidTasks { step: self.steps })?;
            self.w.set(task, fresh.w)?;
            self.w_adam[task].reset();
        }

        if !self.phi.is_finite() || self.w.columns().iter().any(|c| c.w.iter().any(|x| !x.is_finite())) {
            return Err(Error::Diverged(format!("non-finite parameters after step {}", self.steps)));
        }
        self.refresh_theta()?;
        for task in 0..t {
            let online = &self.theta[task][critic.clone()];
            if invalid.contains(&task) {
                self.targets[task].copy_from_slice(online);
            } else {
                neurals::soft_update(&mut self.targets[task], online, self.hp.tau)?;
            }
        }

        stats.losses = results.into_iter().map(|(task, l, _)| (task, l)).collect();
        stats.reset = invalid;
        Ok(stats)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.layout.hash(), &self.phi, &self.w);
        for (entry, (la, target)) in ck.tasks.iter_mut().zip(self.log_alpha.iter().zip(&self.targets)) {
            entry.log_alpha = Some(*la);
            entry.target = Some(target.clone());
        }
        ck
    }
}

impl Agent for CompositionalLearner {
    fn num_tasks(&self) -> usize {
        self.w.num_tasks()
    }

    fn layout(&self) -> &NetworkLayout {
        &self.layout
    }

    fn act(&mut self, _env: usize, task: usize, obs: &[f64], warmup: bool, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if warmup {
            random_action(self.layout.action_dim, rng)
        } else {
            stochastic_action(&self.theta[task], &self.layout, obs, rng)
        }
    }

    fn eval_act(&self, task: usize, obs: &[f64]) -> Vec<f64> {
        greedy_action(&self.theta[task], &self.layout, obs)
    }

    fn update(&mut self, buffer: &ReplayBuffer, rng: &mut ChaCha8Rng) -> Result<StepStats> {
        let batches = self.sample_batches(buffer, rng);
        self.train_step(&batches)
    }

    fn checkpoint(&self) -> Checkpoint {
        self.to_checkpoint()
    }

    fn composition(&self) -> Option<(&ParameterSet, &CompositionalMatrix)> {
        Some((&self.phi, &self.w))
    }
}

/// Plain single-task SAC on a dense parameter vector.
#[derive(Debug, Clone)]
pub struct ScratchSac {
    layout: NetworkLayout,
    theta: Vec<f64>,
    target: Vec<f64>,
    log_alpha: f64,
    hp: LearnerHyper,
    adam: Adam,
    alpha_adam: Adam,
    ws: SacWorkspace,
}

impl ScratchSac {
    pub fn new(layout: NetworkLayout, hp: LearnerHyper, init_rng: &mut ChaCha8Rng) -> Self {
        let theta = layout.init_params(init_rng);
        let target = theta[layout.critic_range()].to_vec();
        Self {
            adam: Adam::new(theta.len()),
            alpha_adam: Adam::new(1),
            log_alpha: hp.init_temperature.ln(),
            layout,
            theta,
            target,
            hp,
            ws: SacWorkspace::default(),
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn train_step(&mut self, batch: &TaskBatch<'_>) -> Result<SacLosses> {
        let (losses, grads) = sac_losses(
            &self.layout,
            &self.theta,
            &self.target,
            self.log_alpha,
            batch,
            &self.hp.sac,
            &mut self.ws,
        )?;
        let segments = [
            (self.layout.policy_range(), self.hp.lr_policy),
            (self.layout.critic_range(), self.hp.lr_q),
        ];
        self.adam.step_segments(&mut self.theta, &grads.theta, &segments);
        let mut la = [self.log_alpha];
        self.alpha_adam.step(&mut la, &[grads.log_alpha], self.hp.lr_alpha);
        self.log_alpha = la[0];
        if self.theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged("non-finite SAC parameters".into()));
        }
        neurals::soft_update(&mut self.target, &self.theta[self.layout.critic_range()], self.hp.tau)?;
        Ok(losses)
    }
}

impl Agent for ScratchSac {
    fn num_tasks(&self) -> usize {
        1
    }

    fn layout(&self) -> &NetworkLayout {
        &self.layout
    }

    fn act(&mut self, _env: usize, _task: usize, obs: &[f64], warmup: bool, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if warmup {
            random_action(self.layout.action_dim, rng)
        } else {
            stochastic_action(&self.theta, &self.layout, obs, rng)
        }
    }

    fn eval_act(&self, _task: usize, obs: &[f64]) -> Vec<f64> {
        greedy_action(&self.theta, &self.layout, obs)
    }

    fn update(&mut self, buffer: &ReplayBuffer, rng: &mut ChaCha8Rng) -> Result<StepStats> {
        match TaskBatch::sample(buffer, 0, self.hp.per_task_batch, self.layout.action_dim, rng) {
            Some(batch) => {
                let losses = self.train_step(&batch)?;
                Ok(StepStats {
                    losses: vec![(0, losses)],
                    reset: Vec::new(),
                })
            }
            None => Ok(StepStats::default()),
        }
    }

    fn checkpoint(&self) -> Checkpoint {
        let phi = ParameterSet::from_columns(&[self.theta.clone()]).expect("non-empty parameters");
        let w = CompositionalMatrix::new(vec![CompositionalVector::one_hot(0, 1, 0)]).expect("one task");
        let mut ck = Checkpoint::new(self.layout.hash(), &phi, &w);
        ck.tasks[0].log_alpha = Some(self.log_alpha);
        ck.tasks[0].target = Some(self.target.clone());
        ck
    }
}

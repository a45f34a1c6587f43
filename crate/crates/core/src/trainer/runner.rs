//! Collection/update loop shared by pretraining, transfer and scratch runs.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::distribution::{sample_task, TaskDistribution};
use super::learner::{Agent, StepStats};
use super::replay::ReplayBuffer;
use super::runlog::{EvalRecord, LossSummary, RunLog, RunMeta};
use super::{rng_stream, streams};
use crate::error::Result;
use crate::paramspace::Checkpoint;
use crate::taskdist::{online_adjust, EpsRule};
use crate::taskworld::{self, EnvState, TaskSpec, Transition, WorldParams};

/// How the task distribution evolves during a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    Fixed(TaskDistribution),
    /// Starts uniform; regrouped by clustering at every evaluation.
    Online { eps_scale: f64, min_pts: usize },
}

#[derive(Debug, Clone)]
pub struct RunSpec<'a> {
    pub tasks: &'a [TaskSpec],
    pub world: WorldParams,
    pub total_env_steps: u64,
    /// Steps before [`Agent::update`] starts (unless the agent trains
    /// during warm-up).
    pub warmup_steps: u64,
    pub n_envs: usize,
    pub updates_per_step: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub replay_capacity: usize,
    pub seed: u64,
    pub sampling: Sampling,
    /// Ends the run at the first evaluation whose average success reaches
    /// this value.
    pub stop_at_success: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BestSnapshot {
    pub env_step: u64,
    pub average_success: f64,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog,
    pub best: Option<BestSnapshot>,
    pub env_steps: u64,
    /// Final task distribution (changes only in online mode).
    pub distribution: TaskDistribution,
}

struct EnvSlot {
    task: usize,
    state: EnvState,
    rng: ChaCha8Rng,
}

#[derive(Default)]
struct LossAccumulator {
    sum: LossSummary,
    terms: u64,
}

impl LossAccumulator {
    fn add(&mut self, stats: &StepStats) {
        self.sum.grad_steps += 1;
        self.sum.resets += stats.reset.len() as u64;
        for (_, l) in &stats.losses {
            self.sum.q += l.q;
            self.sum.pi += l.pi;
            self.sum.alpha += l.alpha;
            self.sum.entropy += l.entropy;
            self.terms += 1;
        }
    }

    fn take(&mut self) -> LossSummary {
        let mut out = std::mem::take(&mut self.sum);
        if self.terms > 0 {
            let n = self.terms as f64;
            out.q /= n;
            out.pi /= n;
            out.alpha /= n;
            out.entropy /= n;
        }
        self.terms = 0;
        out
    }
}

/// Success rate of the deterministic policy on each task.
pub fn evaluate<A: Agent + ?Sized>(
    agent: &A,
    tasks: &[TaskSpec],
    world: &WorldParams,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    tasks
        .iter()
        .enumerate()
        .map(|(task, spec)| {
            let wins = (0..episodes)
                .filter(|_| {
                    let mut s = taskworld::reset(spec, rng);
                    loop {
                        let a = agent.eval_act(task, &s.observation());
                        let out = taskworld::step(&s, &a, spec, world);
                        let done = out.done();
                        s = out.next;
                        if done {
                            return s.success;
                        }
                    }
                })
                .count();
            wins as f64 / episodes as f64
        })
        .collect()
}

fn start_episode<A: Agent + ?Sized>(
    agent: &mut A,
    env: usize,
    tasks: &[TaskSpec],
    dist: &TaskDistribution,
    task_rng: &mut ChaCha8Rng,
    rng: &mut ChaCha8Rng,
) -> (usize, EnvState) {
    let task = sample_task(dist, task_rng);
    agent.begin_episode(env, task, rng);
    (task, taskworld::reset(&tasks[task], rng))
}

/// Alternates bursts of `n_envs` environment steps with
/// `n_envs * updates_per_step` gradient steps, evaluating every
/// `eval_every` environment steps.
pub fn run<A: Agent + ?Sized>(agent: &mut A, spec: &RunSpec<'_>, meta: RunMeta) -> Result<RunOutcome> {
    let started = Instant::now();
    let t = spec.tasks.len();
    let mut log = RunLog::new(meta);
    let mut dist = match &spec.sampling {
        Sampling::Fixed(d) => d.clone(),
        Sampling::Online { .. } => TaskDistribution::uniform(t)?,
    };
    let mut task_rng = rng_stream(spec.seed, streams::TASKS);
    let mut batch_rng = rng_stream(spec.seed, streams::BATCH);
    let mut eval_rng = rng_stream(spec.seed, streams::EVAL);
    let mut buffer = ReplayBuffer::new(spec.replay_capacity, t);
    let mut best: Option<BestSnapshot> = None;
    let mut losses = LossAccumulator::default();
    let mut env_step = 0u64;

    if spec.total_env_steps == 0 {
        return Ok(RunOutcome {
            log,
            best,
            env_steps: 0,
            distribution: dist,
        });
    }

    let mut slots: Vec<EnvSlot> = (0..spec.n_envs)
        .map(|i| {
            let mut rng = rng_stream(spec.seed, streams::ENV_BASE + i as u64);
            let (task, state) = start_episode(agent, i, spec.tasks, &dist, &mut task_rng, &mut rng);
            EnvSlot { task, state, rng }
        })
        .collect();

    let mut warmup = spec.warmup_steps > 0;
    if !warmup {
        agent.on_warmup_end();
    }
    let mut next_eval = spec.eval_every;

    while env_step < spec.total_env_steps {
        let burst = (spec.total_env_steps - env_step).min(spec.n_envs as u64) as usize;
        for (i, slot) in slots.iter_mut().enumerate().take(burst) {
            let obs = slot.state.observation();
            let action = agent.act(i, slot.task, &obs, warmup, &mut slot.rng);
            let spec_t = &spec.tasks[slot.task];
            let out = taskworld::step(&slot.state, &action, spec_t, &spec.world);
            let done = out.done();
            buffer.push(Transition {
                state: obs,
                action: action.iter().map(|a| a.clamp(-1.0, 1.0)).collect(),
                reward: out.reward,
                next_state: out.next.observation(),
                done: out.terminated,
                success: out.success,
                task_id: slot.task,
            });
            env_step += 1;
            if done {
                let (task, state) = start_episode(agent, i, spec.tasks, &dist, &mut task_rng, &mut slot.rng);
                slot.task = task;
                slot.state = state;
            } else {
                slot.state = out.next;
            }
        }

        if !warmup || agent.train_during_warmup() {
            for _ in 0..burst * spec.updates_per_step {
                let stats = agent.update(&buffer, &mut batch_rng)?;
                losses.add(&stats);
            }
        }
        if warmup && env_step >= spec.warmup_steps {
            warmup = false;
            agent.on_warmup_end();
        }

        if env_step >= next_eval || env_step == spec.total_env_steps {
            while next_eval <= env_step {
                next_eval += spec.eval_every;
            }
            let success = evaluate(agent, spec.tasks, &spec.world, spec.eval_episodes, &mut eval_rng);
            let rec = EvalRecord {
                env_step,
                success,
                losses: losses.take(),
                wall_time: started.elapsed().as_secs_f64(),
            };
            let avg = rec.average_success();
            log::info!(
                "step {env_step}: success {:.3} {:?} q {:.4} pi {:.4}",
                avg,
                rec.success,
                rec.losses.q,
                rec.losses.pi
            );
            log.push(rec)?;
            if best.as_ref().is_none_or(|b| avg > b.average_success) {
                let mut checkpoint = agent.checkpoint();
                checkpoint.env_step = env_step;
                best = Some(BestSnapshot {
                    env_step,
                    average_success: avg,
                    checkpoint,
                });
            }
            if let Sampling::Online { eps_scale, min_pts } = spec.sampling {
                if let Some((phi, w)) = agent.composition() {
                    let (groups, d) = online_adjust(
                        phi,
                        w,
                        agent.layout().policy_range(),
                        EpsRule::MedianScale(eps_scale),
                        min_pts,
                    )?;
                    log::debug!("regrouped tasks: {:?}", groups.groups());
                    dist = d;
                }
            }
            if spec.stop_at_success.is_some_and(|s| avg >= s) {
                break;
            }
        }
    }

    Ok(RunOutcome {
        log,
        best,
        env_steps: env_step,
        distribution: dist,
    })
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::registry::{Skill, TaskSpec, WorldParams};

/// Agent within this distance of the object drags it (pull).
pub const GRASP_RADIUS: f64 = 0.08;
/// Agent pushes the object out to this distance (push).
pub const PUSH_RADIUS: f64 = 0.1;
/// Per-step penalty for touching the reach-avoid obstacle.
pub const COLLISION_PENALTY: f64 = 0.5;

/// Full simulator state of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub agent: [f64; 2],
    pub velocity: [f64; 2],
    /// Object, obstacle or gap centre depending on the skill; zero otherwise.
    pub slot: [f64; 2],
    pub goal: [f64; 2],
    pub grasped: bool,
    pub success: bool,
    pub steps: usize,
}

impl EnvState {
    /// Observation vector shared by every task.
    pub fn observation(&self) -> Vec<f64> {
        vec![
            self.agent[0],
            self.agent[1],
            self.velocity[0],
            self.velocity[1],
            self.slot[0],
            self.slot[1],
            self.goal[0],
            self.goal[1],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: EnvState,
    pub reward: f64,
    /// Success latched on this step; no bootstrapping past it.
    pub terminated: bool,
    /// Episode length limit hit without success.
    pub truncated: bool,
    pub success: bool,
    /// The action had entries outside `[-1, 1]` (or NaN) and was clipped.
    pub action_clipped: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Upper bound on `|reward|` for a task.
pub fn reward_bound(spec: &TaskSpec, world: &WorldParams) -> f64 {
    let diag = 2.0 * 2f64.sqrt();
    if spec.difficulty.sparse_reward() {
        return world.success_bonus;
    }
    let shaped = match spec.skill {
        Skill::Reach | Skill::ReachFar | Skill::GapPass => diag,
        Skill::ReachAvoid => diag + COLLISION_PENALTY,
        Skill::Push | Skill::Pull => 2.0 * diag,
    };
    world.distance_weight * shaped + world.success_bonus
}

/// Starts an episode: agent in the start region, goal uniform in the goal
/// region, object (if any) uniform in the object region.
pub fn reset<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> EnvState {
    let agent = spec.start_region.sample(rng);
    let goal = spec.goal_region.sample(rng);
    let slot = match (spec.skill, spec.object_region, spec.feature) {
        (Skill::Push | Skill::Pull, Some(region), _) => region.sample(rng),
        (Skill::ReachAvoid | Skill::GapPass, _, Some(f)) => f.center,
        _ => [0.0, 0.0],
    };
    EnvState {
        agent,
        velocity: [0.0, 0.0],
        slot,
        goal,
        grasped: false,
        success: false,
        steps: 0,
    }
}

fn clip_action(action: &[f64]) -> ([f64; 2], bool) {
    let mut out = [0.0; 2];
    let mut clipped = action.len() != 2;
    for (o, &a) in out.iter_mut().zip(action) {
        if a.is_nan() {
            clipped = true;
        } else if !(-1.0..=1.0).contains(&a) {
            clipped = true;
            *o = a.clamp(-1.0, 1.0);
        } else {
            *o = a;
        }
    }
    (out, clipped)
}

fn clamp_arena(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(-1.0, 1.0), p[1].clamp(-1.0, 1.0)]
}

/// Advances one time step. Deterministic in its inputs.
pub fn step(state: &EnvState, action: &[f64], spec: &TaskSpec, world: &WorldParams) -> StepOutcome {
    let (a, action_clipped) = clip_action(action);
    if action_clipped {
        log::debug!("task {}: action {:?} clipped to {:?}", spec.name, action, a);
    }
    let mut next = state.clone();
    next.steps += 1;
    next.velocity = [a[0] * world.max_speed, a[1] * world.max_speed];
    let prev = state.agent;
    let mut agent = clamp_arena([
        prev[0] + next.velocity[0] * world.dt,
        prev[1] + next.velocity[1] * world.dt,
    ]);
    let mut collided = false;

    match spec.skill {
        Skill::ReachAvoid => {
            if let Some(f) = spec.feature {
                let d = dist(agent, f.center);
                if d < f.size {
                    collided = true;
                    let (dx, dy) = if d > 1e-12 {
                        ((agent[0] - f.center[0]) / d, (agent[1] - f.center[1]) / d)
                    } else {
                        (-1.0, 0.0)
                    };
                    agent = [f.center[0] + f.size * dx, f.center[1] + f.size * dy];
                }
            }
        }
        Skill::GapPass => {
            if let Some(f) = spec.feature {
                let wall_x = f.center[0];
                let crosses = (prev[0] - wall_x) * (agent[0] - wall_x) <= 0.0 && prev[0] != agent[0];
                if crosses {
                    let t = (wall_x - prev[0]) / (agent[0] - prev[0]);
                    let y_cross = prev[1] + t * (agent[1] - prev[1]);
                    if (y_cross - f.center[1]).abs() > f.size {
                        // Blocked: stay on the starting side of the wall.
                        let side = if prev[0] < wall_x { -1.0 } else { 1.0 };
                        agent[0] = wall_x + side * 1e-3;
                        collided = true;
                    }
                }
            }
        }
        Skill::Push => {
            let d = dist(agent, next.slot);
            if d < PUSH_RADIUS {
                let (dx, dy) = if d > 1e-12 {
                    ((next.slot[0] - agent[0]) / d, (next.slot[1] - agent[1]) / d)
                } else {
                    (1.0, 0.0)
                };
                next.slot = clamp_arena([agent[0] + PUSH_RADIUS * dx, agent[1] + PUSH_RADIUS * dy]);
            }
        }
        Skill::Pull => {
            if !next.grasped && dist(agent, next.slot) < GRASP_RADIUS {
                next.grasped = true;
            }
            if next.grasped {
                next.slot = agent;
            }
        }
        Skill::Reach | Skill::ReachFar => {}
    }
    next.agent = agent;

    let tracked = if spec.skill.moves_object() { next.slot } else { next.agent };
    let goal_dist = dist(tracked, next.goal);
    let newly_successful = !state.success && goal_dist < world.success_radius;
    next.success = state.success || newly_successful;

    let mut reward = if spec.difficulty.sparse_reward() {
        0.0
    } else {
        -world.distance_weight
            * match spec.skill {
                Skill::Push | Skill::Pull => dist(next.agent, next.slot) + goal_dist,
                Skill::ReachAvoid => goal_dist + if collided { COLLISION_PENALTY } else { 0.0 },
                _ => goal_dist,
            }
    };
    if newly_successful {
        reward += world.success_bonus;
    }

    let terminated = next.success;
    let truncated = !terminated && next.steps >= spec.max_episode_steps;
    StepOutcome {
        next,
        reward,
        terminated,
        truncated,
        success: terminated,
        action_clipped,
    }
}

/// Straight-line controller toward the tracked target of a reach-type task.
pub fn scripted_reach_action(state: &EnvState, world: &WorldParams) -> [f64; 2] {
    let scale = world.max_speed * world.dt;
    [
        ((state.goal[0] - state.agent[0]) / scale).clamp(-1.0, 1.0),
        ((state.goal[1] - state.agent[1]) / scale).clamp(-1.0, 1.0),
    ]
}

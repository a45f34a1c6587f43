//! Toy 2-D point-mass task family.
//!
//! All tasks share the arena, the action space and the observation size; the
//! skill decides dynamics extras (object, obstacle, wall gap), the success
//! predicate and the reward shaping.

mod env;
mod registry;

pub use env::{
    reset, reward_bound, scripted_reach_action, step, EnvState, StepOutcome, COLLISION_PENALTY, GRASP_RADIUS,
    PUSH_RADIUS,
};
pub use registry::{
    make_suite, make_task, Difficulty, Feature, Region, Registry, Skill, TaskSpec, WorldParams, REGISTRY_TOML,
};

use serde::{Deserialize, Serialize};

/// Replay record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Terminal for bootstrapping (success latched). Time-limit truncation is
    /// not terminal.
    pub done: bool,
    pub success: bool,
    pub task_id: usize,
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The committed task registry.
pub const REGISTRY_TOML: &str = include_str!("../../suites.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Skill {
    Reach,
    Push,
    ReachAvoid,
    GapPass,
    Pull,
    ReachFar,
}

impl Skill {
    /// Skills whose success predicate is on the object rather than the agent.
    pub fn moves_object(self) -> bool {
        matches!(self, Skill::Push | Skill::Pull)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn sparse_reward(self) -> bool {
        self == Difficulty::Hard
    }
}

/// Axis-aligned box in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Region {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl From<[[f64; 2]; 2]> for Region {
    fn from(v: [[f64; 2]; 2]) -> Self {
        Self { min: v[0], max: v[1] }
    }
}

impl From<Region> for [[f64; 2]; 2] {
    fn from(r: Region) -> Self {
        [r.min, r.max]
    }
}

impl Region {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1])]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let mut p = [0.0; 2];
        for (i, x) in p.iter_mut().enumerate() {
            *x = if self.max[i] > self.min[i] {
                rng.random_range(self.min[i]..self.max[i])
            } else {
                self.min[i]
            };
        }
        p
    }
}

/// Fixed per-task feature: obstacle disc (centre, radius) or wall gap
/// (centre, half-width).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub center: [f64; 2],
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub name: String,
    pub skill: Skill,
    pub difficulty: Difficulty,
    pub start_region: Region,
    pub goal_region: Region,
    pub object_region: Option<Region>,
    pub feature: Option<Feature>,
    pub max_episode_steps: usize,
}

/// Global constants shared by every task in the registry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub state_dim: usize,
    pub action_dim: usize,
    pub dt: f64,
    pub max_speed: f64,
    pub success_radius: f64,
    pub success_bonus: f64,
    /// Scale of the dense negative-distance reward terms.
    pub distance_weight: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct TaskEntry {
    name: String,
    skill: Skill,
    difficulty: Difficulty,
    start_region: Region,
    goal_region: Region,
    object_region: Option<Region>,
    feature_center: Option<[f64; 2]>,
    #[serde(default)]
    feature_jitter: f64,
    feature_size: Option<f64>,
    max_episode_steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
struct SuiteEntry {
    name: String,
    tasks: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct RegistryFile {
    version: u32,
    #[serde(flatten)]
    world: WorldParams,
    task: Vec<TaskEntry>,
    suite: Vec<SuiteEntry>,
}

/// Parsed task registry.
#[derive(Debug, Clone)]
pub struct Registry {
    file: RegistryFile,
}

impl Registry {
    pub fn parse(text: &str) -> Result<Self> {
        let file: RegistryFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if file.version != 1 {
            return Err(Error::Config(format!("unsupported registry version {}", file.version)));
        }
        for suite in &file.suite {
            for t in &suite.tasks {
                if !file.task.iter().any(|e| &e.name == t) {
                    return Err(Error::UnknownTask(t.clone()));
                }
            }
        }
        if let Some(t) = file.task.iter().find(|t| t.max_episode_steps == 0) {
            return Err(Error::Config(format!("task {} has zero episode length", t.name)));
        }
        Ok(Self { file })
    }

    /// The registry committed with the crate.
    pub fn builtin() -> &'static Registry {
        static REG: std::sync::OnceLock<Registry> = std::sync::OnceLock::new();
        REG.get_or_init(|| Registry::parse(REGISTRY_TOML).expect("committed registry parses"))
    }

    pub fn world(&self) -> WorldParams {
        self.file.world
    }

    pub fn suite_names(&self) -> Vec<&str> {
        self.file.suite.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn task_names(&self) -> Vec<&str> {
        self.file.task.iter().map(|t| t.name.as_str()).collect()
    }

    /// Resolves one named task; `seed` fixes the jittered feature position.
    pub fn task(&self, name: &str, task_id: usize, seed: u64) -> Result<TaskSpec> {
        let entry = self
            .file
            .task
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::UnknownTask(name.to_string()))?;
        let feature = entry.feature_center.map(|c| {
            // Jitter depends on the seed and the task name only.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name_hash(&entry.name));
            let mut center = c;
            if entry.feature_jitter > 0.0 {
                center[1] += rng.random_range(-entry.feature_jitter..entry.feature_jitter);
            }
            Feature {
                center,
                size: entry.feature_size.unwrap_or(0.2),
            }
        });
        Ok(TaskSpec {
            task_id,
            name: entry.name.clone(),
            skill: entry.skill,
            difficulty: entry.difficulty,
            start_region: entry.start_region,
            goal_region: entry.goal_region,
            object_region: entry.object_region,
            feature,
            max_episode_steps: entry.max_episode_steps,
        })
    }

    /// Task specs of a named suite, with task ids assigned in listed order.
    pub fn suite(&self, name: &str, seed: u64) -> Result<Vec<TaskSpec>> {
        let suite = self
            .file
            .suite
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::UnknownSuite(name.to_string()))?;
        suite
            .tasks
            .iter()
            .enumerate()
            .map(|(id, t)| self.task(t, id, seed))
            .collect()
    }
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Task specs for a suite from the built-in registry.
pub fn make_suite(name: &str, seed: u64) -> Result<Vec<TaskSpec>> {
    Registry::builtin().suite(name, seed)
}

/// A single built-in task as a one-task suite (task id 0).
pub fn make_task(name: &str, seed: u64) -> Result<TaskSpec> {
    Registry::builtin().task(name, 0, seed)
}

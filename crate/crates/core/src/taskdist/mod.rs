//! Task distributions: group-balanced and preset weights, online grouping
//! of tasks by clustering their policy parameters, and PCA of the
//! compositional vectors.

pub mod dbscan;
pub mod pca;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use dbscan::dbscan;
pub use pca::{pca_project, Projection};

use crate::error::{Error, Result};
use crate::paramspace::{compose_into, CompositionalMatrix, ParameterSet};
use crate::taskworld::TaskSpec;
use crate::trainer::distribution::TaskDistribution;

/// Partition of task ids `0..T` into non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskGrouping {
    groups: Vec<Vec<usize>>,
    num_tasks: usize,
}

impl TaskGrouping {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let num_tasks: usize = groups.iter().map(Vec::len).sum();
        let mut seen = vec![false; num_tasks];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidArgument("empty task group".into()));
            }
            for &t in g {
                if t >= num_tasks || seen[t] {
                    return Err(Error::InvalidArgument(format!(
                        "groups are not a partition of 0..{num_tasks} (task {t})"
                    )));
                }
                seen[t] = true;
            }
        }
        if num_tasks == 0 {
            return Err(Error::InvalidArgument("grouping over zero tasks".into()));
        }
        Ok(Self { groups, num_tasks })
    }

    pub fn singletons(num_tasks: usize) -> Result<Self> {
        Self::new((0..num_tasks).map(|t| vec![t]).collect())
    }

    /// Groups by cluster label; every noise point becomes its own group.
    /// Groups appear in order of their smallest member.
    pub fn from_labels(labels: &[Option<usize>]) -> Result<Self> {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot_of_cluster = std::collections::HashMap::new();
        for (task, label) in labels.iter().enumerate() {
            match label {
                Some(c) => {
                    let slot = *slot_of_cluster.entry(*c).or_insert_with(|| {
                        groups.push(Vec::new());
                        groups.len() - 1
                    });
                    groups[slot].push(task);
                }
                None => groups.push(vec![task]),
            }
        }
        Self::new(groups)
    }

    /// Groups by difficulty tag, tiers in easy, medium, hard order.
    pub fn by_difficulty(specs: &[TaskSpec]) -> Result<Self> {
        let mut tiers: Vec<_> = specs.iter().map(|s| s.difficulty).collect();
        tiers.sort();
        tiers.dedup();
        let ids = |d| specs.iter().enumerate().filter(|(_, s)| s.difficulty == d).map(|(i, _)| i).collect();
        Self::new(tiers.into_iter().map(ids).collect())
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }
}

/// `p_tau = 1 / (|G| |g_i|)` for `tau` in group `g_i`.
pub fn group_balanced_probs(grouping: &TaskGrouping) -> Result<TaskDistribution> {
    let mut weights = vec![0.0; grouping.num_tasks()];
    let n_groups = grouping.num_groups() as f64;
    for g in grouping.groups() {
        for &t in g {
            weights[t] = 1.0 / (n_groups * g.len() as f64);
        }
    }
    TaskDistribution::from_weights(&weights)
}

pub fn preset_weighted_probs(weights: &[f64]) -> Result<TaskDistribution> {
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidArgument("preset weights must be positive".into()));
    }
    TaskDistribution::from_weights(weights)
}

/// DBSCAN radius for online grouping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsRule {
    Fixed(f64),
    /// `scale` times the median pairwise distance.
    MedianScale(f64),
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// L2-normalised policy slice of every task's composed parameters.
pub fn policy_points(phi: &ParameterSet, w: &CompositionalMatrix, policy: Range<usize>) -> Result<Vec<Vec<f64>>> {
    let mut theta = vec![0.0; phi.n()];
    w.columns()
        .iter()
        .map(|c| {
            compose_into(phi, &c.w, &mut theta)?;
            let slice = &theta[policy.clone()];
            let norm = slice.iter().map(|x| x * x).sum::<f64>().sqrt();
            Ok(if norm > 0.0 {
                slice.iter().map(|x| x / norm).collect()
            } else {
                slice.to_vec()
            })
        })
        .collect()
}

/// Regroups tasks by clustering their policy parameters and returns the
/// group-balanced distribution over the new grouping.
pub fn online_adjust(
    phi: &ParameterSet,
    w: &CompositionalMatrix,
    policy: Range<usize>,
    eps: EpsRule,
    min_pts: usize,
) -> Result<(TaskGrouping, TaskDistribution)> {
    if min_pts == 0 {
        return Err(Error::InvalidArgument("min_pts must be at least one".into()));
    }
    let points = policy_points(phi, w, policy)?;
    let radius = match eps {
        EpsRule::Fixed(e) if e > 0.0 => e,
        EpsRule::Fixed(e) => return Err(Error::InvalidArgument(format!("eps must be positive, got {e}"))),
        EpsRule::MedianScale(s) => {
            let mut d = Vec::new();
            for i in 0..points.len() {
                for j in i + 1..points.len() {
                    d.push(dbscan::euclidean(&points[i], &points[j]));
                }
            }
            // A zero median (mostly identical tasks) still needs a
            // positive radius.
            (s * median(d)).max(1e-12)
        }
    };
    let grouping = TaskGrouping::from_labels(&dbscan(&points, radius, min_pts))?;
    let dist = group_balanced_probs(&grouping)?;
    Ok((grouping, dist))
}

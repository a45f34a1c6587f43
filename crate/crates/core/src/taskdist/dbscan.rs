//! Density-based clustering with a Euclidean metric.
//!
//! A point is *core* when at least `min_pts` points (itself included) lie
//! within distance `eps`. Clusters are the connected components of core
//! points under the `eps`-neighbourhood relation, plus every non-core point
//! within `eps` of one of their cores (border points). Everything else is
//! noise.

use std::collections::VecDeque;

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn neighbours(points: &[Vec<f64>], i: usize, eps: f64) -> Vec<usize> {
    (0..points.len())
        .filter(|&j| euclidean(&points[i], &points[j]) <= eps)
        .collect()
}

/// Cluster label per point; `None` is noise. Cluster ids are numbered
/// from zero in order of discovery.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least one");
    let n = points.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0;

    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let seeds = neighbours(points, start, eps);
        if seeds.len() < min_pts {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[start] = Some(cluster);
        let mut queue: VecDeque<usize> = seeds.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q].is_none() {
                labels[q] = Some(cluster);
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            let nb = neighbours(points, q, eps);
            if nb.len() >= min_pts {
                queue.extend(nb.into_iter().filter(|&j| !visited[j] || labels[j].is_none()));
            }
        }
    }
    labels
}

/// Core flags under the same neighbourhood definition.
pub fn core_points(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<bool> {
    (0..points.len())
        .map(|i| neighbours(points, i, eps).len() >= min_pts)
        .collect()
}

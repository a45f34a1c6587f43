//! Principal component projection of compositional vectors.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::paramspace::CompositionalMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// One row per input point, `dims` coordinates each.
    pub coords: Vec<Vec<f64>>,
    /// Unit principal directions, by descending variance.
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each component.
    pub variances: Vec<f64>,
    /// Sum of the variances over all directions.
    pub total_variance: f64,
}

impl Projection {
    pub fn variance_ratio(&self, i: usize) -> f64 {
        if self.total_variance > 0.0 {
            self.variances[i] / self.total_variance
        } else {
            0.0
        }
    }
}

/// Mean-centred projection of `points` onto their top `dims` principal
/// directions. Each direction is signed so that its largest-magnitude entry
/// is positive.
pub fn project(points: &[Vec<f64>], dims: usize) -> Result<Projection> {
    let t = points.len();
    if t < 2 {
        return Err(Error::InvalidArgument("principal components need at least two points".into()));
    }
    let k = points[0].len();
    if points.iter().any(|p| p.len() != k) {
        return Err(Error::InvalidArgument("points have differing dimensions".into()));
    }
    if dims == 0 || dims > k {
        return Err(Error::InvalidArgument(format!("cannot project {k}-dimensional points onto {dims} components")));
    }
    let x = DMatrix::from_fn(t, k, |r, c| points[r][c]);
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(t, k, |r, c| x[(r, c)] - mean[c]);
    let cov = centred.transpose() * &centred / (t as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total_variance = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut components = Vec::with_capacity(dims);
    let mut variances = Vec::with_capacity(dims);
    for &i in order.iter().take(dims) {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .reduce(|a, b| if b.abs() > a.abs() { b } else { a })
            .unwrap_or(0.0);
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        variances.push(eig.eigenvalues[i].max(0.0));
    }
    let coords = (0..t)
        .map(|r| {
            components
                .iter()
                .map(|v| (0..k).map(|c| centred[(r, c)] * v[c]).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        coords,
        components,
        variances,
        total_variance,
    })
}

/// PCA of the compositional vectors, one point per task.
pub fn pca_project(w: &CompositionalMatrix, dims: usize) -> Result<Projection> {
    let points: Vec<Vec<f64>> = w.columns().iter().map(|c| c.w.clone()).collect();
    project(&points, dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::taskdist::dbscan::euclidean;

    #[test]
    fn collinear_points_have_no_second_component() {
        let dir = [0.3, -1.2, 0.5, 2.0];
        let pts: Vec<Vec<f64>> = [-2.0, -0.5, 0.1, 0.7, 3.0]
            .iter()
            .map(|s| dir.iter().map(|d| 1.0 + s * d).collect())
            .collect();
        let p = project(&pts, 2).unwrap();
        assert!(p.variance_ratio(1) < 1e-10);
        assert!((p.variance_ratio(0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn isometry_on_planted_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = [0.6, 0.0, 0.8, 0.0, 0.0];
        let v = [0.0, 1.0, 0.0, 0.0, 0.0];
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0));
                (0..5).map(|i| 0.5 + a * u[i] + b * v[i]).collect()
            })
            .collect();
        let p = project(&pts, 2).unwrap();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d0 = euclidean(&pts[i], &pts[j]);
                let d1 = euclidean(&p.coords[i], &p.coords[j]);
                assert!((d0 - d1).abs() <= 1e-8 * d0, "{d0} vs {d1}");
            }
        }
    }

    #[test]
    fn components_orthonormal_and_signed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let p = project(&pts, 4).unwrap();
        for (a, ca) in p.components.iter().enumerate() {
            for (b, cb) in p.components.iter().enumerate() {
                let dot: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
            let pivot = ca.iter().copied().reduce(|x, y| if y.abs() > x.abs() { y } else { x }).unwrap();
            assert!(pivot > 0.0);
        }
        assert!(p.variances.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn reconstruction_error_does_not_grow_with_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec<f64>> = (0..15).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut prev = f64::INFINITY;
        for dims in 1..=4 {
            let p = project(&pts, dims).unwrap();
            let residual: f64 = p.total_variance - p.variances.iter().sum::<f64>();
            assert!(residual <= prev + 1e-12);
            prev = residual;
        }
        assert!(prev.abs() < 1e-10);
    }

    #[test]
    fn duplicated_rows_project_identically() {
        let pts = vec![vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 2.0], vec![3.0, 3.0, 0.0]];
        let p = project(&pts, 2).unwrap();
        assert_eq!(p.coords[0], p.coords[2]);
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(project(&[vec![1.0, 2.0]], 1).is_err());
        assert!(project(&[vec![1.0, 2.0], vec![0.0, 1.0]], 3).is_err());
    }
}

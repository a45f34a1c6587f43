//! Compositional parameter space.
//!
//! Every task's flat parameter vector is a linear combination of `K` shared
//! parameter vectors: `theta_task = Phi * w_task`. `Phi` is stored as an
//! `n x K` column-major matrix so that each shared vector is a contiguous
//! slice.
//!
//! Gradients of a task loss with respect to `theta` are routed onto `Phi`
//! (outer product with `w`) and onto `w` (`Phi^T g`). Tasks whose loss
//! explodes past a threshold are masked out of the shared update and have
//! their compositional vector re-drawn from the convex hull of the healthy
//! tasks' vectors.

mod checkpoint;

pub use checkpoint::Checkpoint;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The shared `n x K` parameter matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    n: usize,
    k: usize,
    /// Column-major storage: column `i` lives at `data[i * n..(i + 1) * n]`.
    data: Vec<f64>,
}

impl ParameterSet {
    /// Builds a parameter set from column-major data.
    pub fn from_column_major(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::InvalidArgument(format!(
                "parameter set needs n >= 1 and K >= 1 (got n={n}, K={k})"
            )));
        }
        if data.len() != n * k {
            return Err(Error::dim("parameter set data", n * k, data.len()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("parameter set"));
        }
        Ok(Self { n, k, data })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let k = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * k);
        for c in columns {
            if c.len() != n {
                return Err(Error::dim("parameter set column", n, c.len()));
            }
            data.extend_from_slice(c);
        }
        Self::from_column_major(n, k, data)
    }

    pub fn zeros(n: usize, k: usize) -> Result<Self> {
        Self::from_column_major(n, k, vec![0.0; n * k])
    }

    /// Number of rows (flat parameter count).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of shared vectors.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    /// Entry at row `j`, column `i`.
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Fills every entry with zero, keeping the shape.
    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Per-task mixing coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionalVector {
    pub task_id: usize,
    pub w: Vec<f64>,
}

impl CompositionalVector {
    pub fn new(task_id: usize, w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("compositional vector"));
        }
        Ok(Self { task_id, w })
    }

    /// The `i`-th standard basis vector of length `k`.
    pub fn one_hot(task_id: usize, k: usize, i: usize) -> Self {
        let mut w = vec![0.0; k];
        w[i] = 1.0;
        Self { task_id, w }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// One compositional vector per task, ordered by task id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionalMatrix {
    columns: Vec<CompositionalVector>,
}

impl CompositionalMatrix {
    pub fn new(columns: Vec<CompositionalVector>) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(Error::InvalidArgument(
                "compositional matrix needs at least one task".into(),
            ));
        };
        let k = first.len();
        for (idx, c) in columns.iter().enumerate() {
            if c.len() != k {
                return Err(Error::dim("compositional vector", k, c.len()));
            }
            if c.task_id != idx {
                return Err(Error::InvalidArgument(format!(
                    "column {idx} carries task id {}; columns must follow task-id order",
                    c.task_id
                )));
            }
        }
        Ok(Self { columns })
    }

    /// Number of tasks.
    pub fn num_tasks(&self) -> usize {
        self.columns.len()
    }

    pub fn k(&self) -> usize {
        self.columns[0].len()
    }

    pub fn column(&self, task: usize) -> &CompositionalVector {
        &self.columns[task]
    }

    pub fn column_mut(&mut self, task: usize) -> &mut CompositionalVector {
        &mut self.columns[task]
    }

    pub fn columns(&self) -> &[CompositionalVector] {
        &self.columns
    }

    /// Replaces the weights of one task, keeping its id.
    pub fn set(&mut self, task: usize, w: Vec<f64>) -> Result<()> {
        if w.len() != self.k() {
            return Err(Error::dim("compositional vector", self.k(), w.len()));
        }
        self.columns[task].w = w;
        Ok(())
    }
}

/// Threshold above which a task's loss is treated as exploded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskoutPolicy {
    epsilon: f64,
}

impl MaskoutPolicy {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "maskout threshold must be positive, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// True when the loss counts as valid (`loss <= epsilon`). NaN is invalid.
    pub fn is_valid(&self, loss: f64) -> bool {
        loss <= self.epsilon
    }
}

/// Result of [`mask_losses`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskOutcome {
    pub masked: Vec<f64>,
    pub invalid: Vec<usize>,
    pub valid: Vec<usize>,
}

fn check_finite(xs: &[f64], what: &'static str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `Phi * w`.
pub fn compose(phi: &ParameterSet, w: &CompositionalVector) -> Result<Vec<f64>> {
    let mut out = vec![0.0; phi.n()];
    compose_into(phi, &w.w, &mut out)?;
    Ok(out)
}

/// `Phi * w` written into `out`.
///
/// With `K = 1, w = [1]` the result is bit-identical to the single column.
pub fn compose_into(phi: &ParameterSet, w: &[f64], out: &mut [f64]) -> Result<()> {
    if w.len() != phi.k() {
        return Err(Error::dim("compositional vector", phi.k(), w.len()));
    }
    if out.len() != phi.n() {
        return Err(Error::dim("composed output", phi.n(), out.len()));
    }
    let w0 = w[0];
    for (o, &p) in out.iter_mut().zip(phi.column(0)) {
        *o = p * w0;
    }
    for (i, &wi) in w.iter().enumerate().skip(1) {
        for (o, &p) in out.iter_mut().zip(phi.column(i)) {
            *o += p * wi;
        }
    }
    Ok(())
}

/// `Theta = Phi * W`, one composed vector per task.
pub fn compose_all(phi: &ParameterSet, w: &CompositionalMatrix) -> Result<Vec<Vec<f64>>> {
    w.columns().iter().map(|c| compose(phi, c)).collect()
}

/// Gradient of a loss of `theta = Phi w` with respect to `Phi`: `g w^T`.
pub fn grad_phi(grad_theta: &[f64], w: &CompositionalVector) -> Result<ParameterSet> {
    check_finite(grad_theta, "theta gradient")?;
    check_finite(&w.w, "compositional vector")?;
    let n = grad_theta.len();
    let mut out = ParameterSet::zeros(n, w.len())?;
    accumulate_grad_phi(&mut out, grad_theta, &w.w)?;
    Ok(out)
}

/// Adds `g w^T` into `acc`.
pub fn accumulate_grad_phi(acc: &mut ParameterSet, grad_theta: &[f64], w: &[f64]) -> Result<()> {
    if grad_theta.len() != acc.n() {
        return Err(Error::dim("theta gradient", acc.n(), grad_theta.len()));
    }
    if w.len() != acc.k() {
        return Err(Error::dim("compositional vector", acc.k(), w.len()));
    }
    for (i, &wi) in w.iter().enumerate() {
        for (a, &g) in acc.column_mut(i).iter_mut().zip(grad_theta) {
            *a += g * wi;
        }
    }
    Ok(())
}

/// Gradient of a loss of `theta = Phi w` with respect to `w`: `Phi^T g`.
pub fn grad_w(grad_theta: &[f64], phi: &ParameterSet) -> Result<Vec<f64>> {
    check_finite(grad_theta, "theta gradient")?;
    if grad_theta.len() != phi.n() {
        return Err(Error::dim("theta gradient", phi.n(), grad_theta.len()));
    }
    Ok((0..phi.k())
        .map(|i| phi.column(i).iter().zip(grad_theta).map(|(p, g)| p * g).sum())
        .collect())
}

/// Zeroes every loss above the threshold and splits tasks into valid/invalid.
pub fn mask_losses(losses: &[f64], policy: &MaskoutPolicy) -> MaskOutcome {
    let mut masked = Vec::with_capacity(losses.len());
    let mut invalid = Vec::new();
    let mut valid = Vec::new();
    for (task, &loss) in losses.iter().enumerate() {
        if policy.is_valid(loss) {
            masked.push(loss);
            valid.push(task);
        } else {
            masked.push(0.0);
            invalid.push(task);
        }
    }
    MaskOutcome {
        masked,
        invalid,
        valid,
    }
}

/// Draws `beta` uniformly from the unit simplex with `dim` vertices.
///
/// Normalised unit-rate exponentials are distributed as a flat Dirichlet.
pub fn sample_simplex<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    assert!(dim > 0, "simplex needs at least one vertex");
    let mut beta: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = beta.iter().sum();
    if total > 0.0 {
        beta.iter_mut().for_each(|b| *b /= total);
    } else {
        beta.iter_mut().for_each(|b| *b = 1.0 / dim as f64);
    }
    beta
}

/// `sum_j beta_j w_j` for the given columns.
pub fn convex_combination(w: &CompositionalMatrix, tasks: &[usize], beta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.k()];
    for (&t, &b) in tasks.iter().zip(beta) {
        for (o, &x) in out.iter_mut().zip(&w.column(t).w) {
            *o += b * x;
        }
    }
    out
}

/// A fresh compositional vector for `task_id` drawn uniformly from the convex
/// hull of the valid tasks' vectors.
pub fn reset_w<R: Rng + ?Sized>(
    w: &CompositionalMatrix,
    valid: &[usize],
    task_id: usize,
    rng: &mut R,
) -> Result<CompositionalVector> {
    if valid.is_empty() {
        return Err(Error::NoValidTasks { step: 0 });
    }
    if let Some(&bad) = valid.iter().find(|&&t| t >= w.num_tasks()) {
        return Err(Error::InvalidArgument(format!("task {bad} is out of range")));
    }
    if valid.len() == 1 {
        return Ok(CompositionalVector {
            task_id,
            w: w.column(valid[0]).w.clone(),
        });
    }
    let beta = sample_simplex(valid.len(), rng);
    Ok(CompositionalVector {
        task_id,
        w: convex_combination(w, valid, &beta),
    })
}

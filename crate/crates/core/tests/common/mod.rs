//! Shared checks used by the focused integration tests and by the
//! acceptance report. Each check returns a verdict with a short detail line.

#![allow(dead_code)]

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use taco_core::expcli::{self, relative_cost, required_steps};
use taco_core::neurals::{self, mlp, MlpTrace, NetworkLayout, PolicyOutput};
use taco_core::paramspace::{
    self, compose, grad_phi, grad_w, Checkpoint, CompositionalMatrix, CompositionalVector, ParameterSet,
};
use taco_core::taskdist::dbscan;
use taco_core::taskworld::{make_task, Registry, Transition};
use taco_core::trainer::{
    self, rng_stream, runner, sac_losses, streams, CompositionalLearner, LearnerHyper, MaskTarget, RunLog, RunMeta,
    RunSpec, SacHyper, SacWorkspace, Sampling, ScratchSac, TaskBatch, TaskDistribution, TrainConfig, Trainable,
};
use taco_core::transfer::{self, init_from_checkpoint, run_transfer, Phase, TransferAgent, TransferConfig};

#[derive(Debug, Clone)]
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(len: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn normal_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn random_transitions(layout: &NetworkLayout, count: usize, task: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    (0..count)
        .map(|_| Transition {
            state: uniform_vec(layout.state_dim, -1.0, 1.0, rng),
            action: uniform_vec(layout.action_dim, -0.95, 0.95, rng),
            reward: rng.random_range(-1.0..1.0),
            next_state: uniform_vec(layout.state_dim, -1.0, 1.0, rng),
            done: rng.random_bool(0.2),
            success: false,
            task_id: task,
        })
        .collect()
}

pub fn batch_for<'a>(task: usize, data: &'a [Transition], action_dim: usize, rng: &mut ChaCha8Rng) -> TaskBatch<'a> {
    let b = data.len();
    TaskBatch::new(
        task,
        data.iter().collect(),
        normal_vec(b * action_dim, rng),
        normal_vec(b * action_dim, rng),
    )
}

pub fn hyper(layout: &NetworkLayout, per_task_batch: usize) -> LearnerHyper {
    LearnerHyper {
        lr_policy: 1e-3,
        lr_q: 1e-3,
        lr_w: 1e-3,
        lr_alpha: 1e-3,
        tau: 0.005,
        epsilon: 3e3,
        mask_target: MaskTarget::Critic,
        per_task_batch,
        sac: SacHyper {
            discount: 0.99,
            target_entropy: -(layout.action_dim as f64),
        },
        init_temperature: 1.0,
    }
}

// ---------------------------------------------------------------------------
// Gradients against central finite differences
// ---------------------------------------------------------------------------

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

#[derive(Debug, Default)]
pub struct GradientReport {
    pub instances: usize,
    pub comparisons: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl GradientReport {
    fn compare(&mut self, what: &str, analytic: f64, numeric: f64) {
        self.comparisons += 1;
        let scale = analytic.abs().max(numeric.abs()).max(1e-3);
        let rel = (analytic - numeric).abs() / scale;
        self.worst = self.worst.max(rel);
        if rel > REL_TOL && self.failures.len() < 10 {
            self.failures
                .push(format!("{what}: analytic {analytic:.9e} numeric {numeric:.9e} rel {rel:.2e}"));
        }
    }
}

fn central<F: FnMut(f64) -> f64>(x: f64, mut f: F) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

fn pick(len: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..count.min(len)).map(|_| rng.random_range(0..len)).collect()
}

/// One random small instance: network sizes, parameters, composition and a
/// batch. Checks critic, actor and temperature gradients of the SAC losses,
/// the Q-network and squashing backward passes, and the chain rule through
/// `theta = Phi w`.
fn gradient_instance(seed: u64, report: &mut GradientReport) {
    let mut r = rng(seed);
    let state_dim = r.random_range(2..=6);
    let action_dim = r.random_range(1..=3);
    let layout = NetworkLayout::new(state_dim, action_dim, &[8, 8]).unwrap();
    assert!(layout.n() <= 2000);
    let k = r.random_range(1..=4);
    let columns: Vec<Vec<f64>> = (0..k).map(|_| layout.init_params(&mut r)).collect();
    let phi = ParameterSet::from_columns(&columns).unwrap();
    let w = CompositionalVector::new(0, uniform_vec(k, 0.1, 1.0, &mut r)).unwrap();
    let theta = compose(&phi, &w).unwrap();
    let critic = layout.critic_range();
    let policy = layout.policy_range();
    let target: Vec<f64> = theta[critic.clone()].iter().map(|x| x + r.random_range(-0.05..0.05)).collect();
    let log_alpha = r.random_range(-2.0..0.5);
    let data = random_transitions(&layout, r.random_range(2..=5), 0, &mut r);
    let batch = batch_for(0, &data, action_dim, &mut r);
    let hp = SacHyper {
        discount: 0.99,
        target_entropy: -(action_dim as f64),
    };
    let mut ws = SacWorkspace::default();
    let losses_at = |th: &[f64], la: f64, ws: &mut SacWorkspace| sac_losses(&layout, th, &target, la, &batch, &hp, ws).unwrap().0;
    let (_, grads) = sac_losses(&layout, &theta, &target, log_alpha, &batch, &hp, &mut ws).unwrap();

    // Critic loss w.r.t. critic slots.
    for j in pick(critic.len(), 12, &mut r) {
        let idx = critic.start + j;
        let mut th = theta.clone();
        let num = central(theta[idx], |x| {
            th[idx] = x;
            losses_at(&th, log_alpha, &mut ws).q
        });
        report.compare("L_q/theta", grads.theta[idx], num);
    }
    // Actor loss w.r.t. policy slots.
    for j in pick(policy.len(), 12, &mut r) {
        let idx = policy.start + j;
        let mut th = theta.clone();
        let num = central(theta[idx], |x| {
            th[idx] = x;
            losses_at(&th, log_alpha, &mut ws).pi
        });
        report.compare("L_pi/theta", grads.theta[idx], num);
    }
    // Temperature loss w.r.t. log alpha.
    let num = central(log_alpha, |x| losses_at(&theta, x, &mut ws).alpha);
    report.compare("L_alpha/log_alpha", grads.log_alpha, num);

    // Q network output and input gradients.
    let input = uniform_vec(state_dim + action_dim, -1.0, 1.0, &mut r);
    let mut trace = MlpTrace::default();
    mlp::forward(&theta, &layout.q1, &input, &mut trace);
    let mut g = vec![0.0; layout.n()];
    let d_input = mlp::backward(&theta, &layout.q1, &mut trace, &[1.0], Some(&mut g)).to_vec();
    let q_at = |th: &[f64], inp: &[f64]| mlp::forward_output(th, &layout.q1, inp)[0];
    for idx in pick(layout.n(), 8, &mut r) {
        let mut th = theta.clone();
        let num = central(theta[idx], |x| {
            th[idx] = x;
            q_at(&th, &input)
        });
        report.compare("Q/theta", g[idx], num);
    }
    for (i, &d) in d_input.iter().enumerate() {
        let mut inp = input.clone();
        let num = central(input[i], |x| {
            inp[i] = x;
            q_at(&theta, &inp)
        });
        report.compare("Q/input", d, num);
    }

    // Squashed sample: action and log-probability w.r.t. the raw head.
    let raw = uniform_vec(2 * action_dim, -1.0, 0.5, &mut r);
    let noise = normal_vec(action_dim, &mut r);
    let c = uniform_vec(action_dim, -1.0, 1.0, &mut r);
    let d_logp = r.random_range(0.1..2.0);
    let objective = |raw: &[f64]| {
        let s = neurals::squash(&PolicyOutput::from_raw(raw), &noise);
        s.action.iter().zip(&c).map(|(a, ci)| a * ci).sum::<f64>() + d_logp * s.log_prob
    };
    let sample = neurals::squash(&PolicyOutput::from_raw(&raw), &noise);
    let mut d_raw = Vec::new();
    neurals::squash_backward(&raw, &noise, &sample, &c, d_logp, &mut d_raw);
    for i in 0..raw.len() {
        let mut x = raw.clone();
        let num = central(raw[i], |v| {
            x[i] = v;
            objective(&x)
        });
        report.compare("squash/raw", d_raw[i], num);
    }

    // Composition: critic loss through Phi's critic rows and w.
    let g_phi = grad_phi(&grads.theta, &w).unwrap();
    for _ in 0..6 {
        let col = r.random_range(0..k);
        let row = critic.start + r.random_range(0..critic.len());
        let mut p = phi.clone();
        let num = central(phi.get(row, col), |x| {
            p.column_mut(col)[row] = x;
            losses_at(&compose(&p, &w).unwrap(), log_alpha, &mut ws).q
        });
        report.compare("L_q/Phi", g_phi.get(row, col), num);
    }
    for _ in 0..6 {
        let col = r.random_range(0..k);
        let row = policy.start + r.random_range(0..policy.len());
        let mut p = phi.clone();
        let num = central(phi.get(row, col), |x| {
            p.column_mut(col)[row] = x;
            losses_at(&compose(&p, &w).unwrap(), log_alpha, &mut ws).pi
        });
        report.compare("L_pi/Phi", g_phi.get(row, col), num);
    }
    // A scalar depending on every slot through the composition: the first
    // Q output plus a weighted sum of the policy head.
    let head_weights = uniform_vec(2 * action_dim, -1.0, 1.0, &mut r);
    let state = uniform_vec(state_dim, -1.0, 1.0, &mut r);
    let scalar = |th: &[f64]| {
        let head = mlp::forward_output(th, &layout.policy, &state);
        q_at(th, &input) + head.iter().zip(&head_weights).map(|(h, c)| h * c).sum::<f64>()
    };
    let mut g = vec![0.0; layout.n()];
    let mut tq = MlpTrace::default();
    mlp::forward(&theta, &layout.q1, &input, &mut tq);
    mlp::backward(&theta, &layout.q1, &mut tq, &[1.0], Some(&mut g));
    let mut tp = MlpTrace::default();
    mlp::forward(&theta, &layout.policy, &state, &mut tp);
    mlp::backward(&theta, &layout.policy, &mut tp, &head_weights, Some(&mut g));
    let gw = grad_w(&g, &phi).unwrap();
    for i in 0..k {
        let mut wv = w.clone();
        let num = central(w.w[i], |x| {
            wv.w[i] = x;
            scalar(&compose(&phi, &wv).unwrap())
        });
        report.compare("scalar/w", gw[i], num);
    }
    let gp = grad_phi(&g, &w).unwrap();
    for _ in 0..6 {
        let col = r.random_range(0..k);
        let row = r.random_range(0..layout.n());
        let mut p = phi.clone();
        let num = central(phi.get(row, col), |x| {
            p.column_mut(col)[row] = x;
            scalar(&compose(&p, &w).unwrap())
        });
        report.compare("scalar/Phi", gp.get(row, col), num);
    }
    report.instances += 1;
}

pub fn gradient_oracle(instances: usize) -> (GradientReport, f64) {
    let started = Instant::now();
    let mut report = GradientReport::default();
    for i in 0..instances {
        gradient_instance(1000 + i as u64, &mut report);
    }
    (report, started.elapsed().as_secs_f64())
}

pub fn check_gradients() -> Verdict {
    let (report, secs) = gradient_oracle(120);
    let passed = report.failures.is_empty() && report.instances >= 100 && secs < 60.0;
    let mut detail = format!(
        "{} instances, {} comparisons, worst rel err {:.2e}, {:.1}s",
        report.instances, report.comparisons, report.worst, secs
    );
    if let Some(f) = report.failures.first() {
        detail.push_str(&format!("; first failure {f}"));
    }
    Verdict::new(passed, detail)
}

// ---------------------------------------------------------------------------
// Simplex draws
// ---------------------------------------------------------------------------

/// Checks non-negativity, normalisation and the per-coordinate mean of
/// `draws` simplex vectors against `1 / dim`, within three standard errors
/// of the sample.
pub fn simplex_moments(draws: &[Vec<f64>]) -> Result<f64, String> {
    let dim = draws[0].len();
    let n = draws.len() as f64;
    for d in draws {
        if d.iter().any(|&b| b < 0.0) {
            return Err(format!("negative coefficient in {d:?}"));
        }
        let s: f64 = d.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(format!("coefficients sum to {s}"));
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        let mean = draws.iter().map(|d| d[i]).sum::<f64>() / n;
        let var = draws.iter().map(|d| (d[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let z = (mean - 1.0 / dim as f64).abs() / se;
        worst = worst.max(z);
        if z > 3.0 {
            return Err(format!("coordinate {i}: mean {mean:.5} is {z:.2} standard errors from {:.5}", 1.0 / dim as f64));
        }
    }
    Ok(worst)
}

/// Recovers `beta` from a reset vector when the valid vectors are the
/// standard basis: the reset vector is then `beta` itself.
pub fn check_simplex() -> Verdict {
    const DRAWS: usize = 10_000;
    let mut detail = Vec::new();
    let mut passed = true;
    for &(valid, k) in &[(3usize, 3usize), (5, 5)] {
        let t = valid + 1;
        let cols = (0..t)
            .map(|task| {
                let w = if task < valid {
                    let mut e = vec![0.0; k];
                    e[task] = 1.0;
                    e
                } else {
                    vec![9.0; k]
                };
                CompositionalVector::new(task, w).unwrap()
            })
            .collect();
        let w = CompositionalMatrix::new(cols).unwrap();
        let valid_ids: Vec<usize> = (0..valid).collect();
        let mut r = rng(7 + valid as u64);
        let draws: Vec<Vec<f64>> = (0..DRAWS)
            .map(|_| paramspace::reset_w(&w, &valid_ids, valid, &mut r).unwrap().w)
            .collect();
        match simplex_moments(&draws) {
            Ok(z) => detail.push(format!("reset_w |V|={valid} max z {z:.2}")),
            Err(e) => {
                passed = false;
                detail.push(format!("reset_w |V|={valid}: {e}"));
            }
        }
    }
    for &t in &[2usize, 4, 10] {
        let cols = (0..t)
            .map(|task| CompositionalVector::new(task, uniform_vec(3, 0.0, 1.0, &mut rng(task as u64))).unwrap())
            .collect();
        let policy = taco_core::transfer::ExplorePolicy::new(CompositionalMatrix::new(cols).unwrap());
        let mut r = rng(100 + t as u64);
        let draws: Vec<Vec<f64>> = (0..DRAWS).map(|_| policy.draw(&mut r).0).collect();
        match simplex_moments(&draws) {
            Ok(z) => detail.push(format!("explore beta T={t} max z {z:.2}")),
            Err(e) => {
                passed = false;
                detail.push(format!("explore beta T={t}: {e}"));
            }
        }
    }
    Verdict::new(passed, detail.join(", "))
}

// ---------------------------------------------------------------------------
// Maskout and reset
// ---------------------------------------------------------------------------

const MASK_TASKS: usize = 3;
const MASK_K: usize = 3;

fn mask_learner(seed: u64, layout: &NetworkLayout) -> CompositionalLearner {
    CompositionalLearner::initialise(
        layout.clone(),
        MASK_K,
        MASK_TASKS,
        hyper(layout, 8),
        &mut rng(seed),
        &mut rng(seed + 1),
        rng(seed + 2),
    )
    .unwrap()
}

/// A task whose critic loss exceeds the threshold leaves `Phi` exactly as if
/// its batch had been dropped, and its `w` becomes a convex combination of
/// the valid tasks' freshly updated vectors.
pub fn check_maskout() -> Verdict {
    let started = Instant::now();
    let layout = NetworkLayout::new(4, 2, &[16, 16]).unwrap();
    let mut r = rng(31);
    let data: Vec<Vec<Transition>> = (0..MASK_TASKS).map(|t| random_transitions(&layout, 8, t, &mut r)).collect();
    let mut poisoned = data[1].clone();
    for tr in &mut poisoned {
        tr.reward = 1e6;
    }
    let mut details = Vec::new();
    let mut passed = true;
    for step_seed in 0..5u64 {
        let mut nr = rng(500 + step_seed);
        let batches: Vec<TaskBatch> = data.iter().enumerate().map(|(t, d)| batch_for(t, d, 2, &mut nr)).collect();
        let mut injected = batches.clone();
        injected[1].transitions = poisoned.iter().collect();
        let omitted: Vec<TaskBatch> = batches.iter().filter(|b| b.task_id != 1).cloned().collect();

        let mut a = mask_learner(step_seed, &layout);
        let mut b = mask_learner(step_seed, &layout);
        let sa = a.train_step(&injected).unwrap();
        let sb = b.train_step(&omitted).unwrap();
        if sa.reset != vec![1] || !sb.reset.is_empty() {
            passed = false;
            details.push(format!("unexpected resets {:?} / {:?}", sa.reset, sb.reset));
            continue;
        }
        let same_phi = a.phi().as_slice().iter().zip(b.phi().as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same_phi {
            passed = false;
            details.push(format!("seed {step_seed}: Phi differs"));
        }
        for t in [0, 2] {
            if a.w().column(t) != b.w().column(t) {
                passed = false;
                details.push(format!("seed {step_seed}: w of valid task {t} differs"));
            }
        }
        match convex_weights(&a.w().column(1).w, &[&a.w().column(0).w, &a.w().column(2).w]) {
            Some(beta) if beta.iter().all(|&x| x >= -1e-9) && (beta.iter().sum::<f64>() - 1.0).abs() < 1e-9 => {}
            other => {
                passed = false;
                details.push(format!("seed {step_seed}: reset w is not a convex combination ({other:?})"));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    passed &= secs < 10.0;
    if details.is_empty() {
        details.push("5 paired steps bit-identical, reset vectors convex".into());
    }
    Verdict::new(passed, format!("{} ({secs:.2}s)", details.join("; ")))
}

/// Solves `target = sum_j beta_j v_j` for two vectors `v_j` in least
/// squares, with exact residual check.
fn convex_weights(target: &[f64], vs: &[&Vec<f64>]) -> Option<Vec<f64>> {
    let (a, b) = (vs[0], vs[1]);
    // target - b = beta0 (a - b), beta1 = 1 - beta0, when sums match.
    let d: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
    let dd: f64 = d.iter().map(|x| x * x).sum();
    if dd == 0.0 {
        return None;
    }
    let beta0 = target.iter().zip(b.iter()).zip(&d).map(|((t, y), di)| (t - y) * di).sum::<f64>() / dd;
    let residual = target
        .iter()
        .zip(a.iter().zip(b.iter()))
        .map(|(t, (x, y))| (t - beta0 * x - (1.0 - beta0) * y).abs())
        .fold(0.0, f64::max);
    (residual < 1e-9).then(|| vec![beta0, 1.0 - beta0])
}

// ---------------------------------------------------------------------------
// Reduction of the compositional learner to single-task SAC
// ---------------------------------------------------------------------------

/// `K = 1`, `w = [1]` frozen: the composed learner must follow the dense
/// SAC learner bit for bit.
pub fn sac_reduction(steps: usize) -> Result<(), String> {
    let layout = NetworkLayout::new(5, 2, &[16, 16]).unwrap();
    let hp = hyper(&layout, 16);
    let scratch_init = &mut rng(77);
    let mut sac = ScratchSac::new(layout.clone(), hp.clone(), scratch_init);
    let phi = ParameterSet::from_columns(&[sac.theta().to_vec()]).unwrap();
    let w = CompositionalMatrix::new(vec![CompositionalVector::new(0, vec![1.0]).unwrap()]).unwrap();
    let mut comp = CompositionalLearner::new(layout.clone(), phi, w, hp, rng(78)).unwrap();
    comp.set_trainable(Trainable {
        phi_policy: true,
        phi_critic: true,
        w: false,
    });
    let mut r = rng(79);
    let data = random_transitions(&layout, 256, 0, &mut r);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    for step in 0..steps {
        let idx: Vec<usize> = (0..16).map(|_| r.random_range(0..data.len())).collect();
        let batch = TaskBatch::new(
            0,
            idx.iter().map(|&i| &data[i]).collect(),
            normal_vec(32, &mut r),
            normal_vec(32, &mut r),
        );
        let ls = sac.train_step(&batch).map_err(|e| e.to_string())?;
        let lc = comp.train_step(std::slice::from_ref(&batch)).map_err(|e| e.to_string())?;
        if lc.losses[0].1 != ls {
            return Err(format!("step {step}: losses differ"));
        }
        if bits(comp.phi().column(0)) != bits(sac.theta()) {
            return Err(format!("step {step}: parameters differ"));
        }
        if bits(comp.target(0)) != bits(sac.target()) {
            return Err(format!("step {step}: targets differ"));
        }
        if comp.log_alpha()[0].to_bits() != sac.log_alpha().to_bits() {
            return Err(format!("step {step}: temperatures differ"));
        }
        if comp.w().column(0).w != [1.0] {
            return Err(format!("step {step}: w moved"));
        }
    }
    Ok(())
}

pub fn check_reduction() -> Verdict {
    let started = Instant::now();
    match sac_reduction(1000) {
        Ok(()) => Verdict::new(
            true,
            format!("1000 steps bit-identical ({:.1}s)", started.elapsed().as_secs_f64()),
        ),
        Err(e) => Verdict::new(false, e),
    }
}

// ---------------------------------------------------------------------------
// DBSCAN against a brute-force oracle
// ---------------------------------------------------------------------------

/// Textbook DBSCAN by repeated passes: core points are connected when within
/// `eps`; clusters are the connected components of core points, and every
/// border point joins the cluster of the first core neighbour in index order
/// that claimed it during expansion from the lowest-index core point.
pub fn dbscan_oracle(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let dist = |i: usize, j: usize| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(i, j) <= eps).count() >= min_pts)
        .collect();
    // Components of the core graph by label propagation to a fixed point.
    let mut comp: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] && dist(i, j) <= eps && comp[j] < comp[i] {
                    comp[i] = comp[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut labels = vec![None; n];
    for i in 0..n {
        if core[i] {
            labels[i] = Some(comp[i]);
        }
    }
    // Border points: reachable from some core point. Clusters are processed in
    // order of their lowest core index, which is how the expansion visits them.
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i] && comp[i] == i).collect();
    roots.sort_unstable();
    for &root in &roots {
        for i in 0..n {
            if labels[i].is_none() && (0..n).any(|j| core[j] && comp[j] == root && dist(i, j) <= eps) {
                labels[i] = Some(root);
            }
        }
    }
    labels
}

/// Equal up to a bijective renaming of cluster ids; noise must match noise.
pub fn same_partition(a: &[Option<usize>], b: &[Option<usize>]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        match (x, y) {
            (None, None) => {}
            (Some(x), Some(y)) => {
                if *fwd.entry(*x).or_insert(*y) != *y || *back.entry(*y).or_insert(*x) != *x {
                    return false;
                }
            }
            _ => return false,
        }
    }
    true
}

pub fn random_cloud(seed: u64) -> (Vec<Vec<f64>>, f64, usize) {
    let mut r = rng(seed);
    let n = r.random_range(1..=50);
    let dim = r.random_range(1..=4);
    let centres: Vec<Vec<f64>> = (0..r.random_range(1..=4)).map(|_| uniform_vec(dim, -3.0, 3.0, &mut r)).collect();
    let points = (0..n)
        .map(|_| {
            let c = &centres[r.random_range(0..centres.len())];
            c.iter().map(|x| x + r.random_range(-0.8..0.8)).collect()
        })
        .collect();
    (points, r.random_range(0.2..1.2), r.random_range(1..=5))
}

pub fn check_dbscan() -> Verdict {
    let mut mismatches = Vec::new();
    for seed in 0..100 {
        let (pts, eps, min_pts) = random_cloud(seed);
        let got = dbscan(&pts, eps, min_pts);
        let want = dbscan_oracle(&pts, eps, min_pts);
        if !same_partition(&got, &want) {
            mismatches.push(seed);
        }
    }
    Verdict::new(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "100 random instances match up to relabeling".to_string()
        } else {
            format!("mismatching instances {mismatches:?}")
        },
    )
}

// ---------------------------------------------------------------------------
// Transfer freeze contracts
// ---------------------------------------------------------------------------

pub fn small_train_config() -> TrainConfig {
    TrainConfig {
        batch_size: 32,
        n_parallel_envs: 2,
        hidden_sizes: vec![16, 16],
        lr_policy: 1e-3,
        lr_q: 1e-3,
        lr_w: 1e-3,
        lr_alpha: 1e-3,
        warmup_steps: 200,
        replay_capacity: 10_000,
        k: 3,
        total_env_steps: 1_000,
        eval_every: 500,
        eval_episodes: 2,
        ..TrainConfig::default()
    }
}

/// A random "pretrained" checkpoint with three tasks.
pub fn random_pretrained(cfg: &TrainConfig, seed: u64) -> Checkpoint {
    let world = Registry::builtin().world();
    let layout = trainer::pretrain::layout_for(cfg, &world).unwrap();
    let hp = LearnerHyper::from_config(cfg, &layout, 2).unwrap();
    let learner = CompositionalLearner::initialise(
        layout,
        cfg.k,
        3,
        LearnerHyper { per_task_batch: 16, ..hp },
        &mut rng(seed),
        &mut rng(seed + 1),
        rng(seed + 2),
    )
    .unwrap();
    learner.to_checkpoint()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

pub fn check_freeze() -> Verdict {
    let cfg = small_train_config();
    let pretrained = random_pretrained(&cfg, 5);
    let world = Registry::builtin().world();
    let task = make_task("reach-far", 0).unwrap();
    let layout = trainer::pretrain::layout_for(&cfg, &world).unwrap();
    let policy = layout.policy_range();
    let critic = layout.critic_range();
    let mut problems = Vec::new();

    // Warm-up only: the run ends exactly when the exploration phase does.
    let n_e = 400;
    let phi0 = init_from_checkpoint(&pretrained, &layout, &mut rng_stream(3, streams::CRITIC_INIT)).unwrap();
    let w_star = pretrained.compositional_matrix().unwrap();
    let centroid = transfer::centroid(&w_star);
    let mut agent = TransferAgent::new(
        layout.clone(),
        phi0.clone(),
        w_star,
        LearnerHyper::from_config(&cfg, &layout, 1).unwrap(),
        false,
        rng_stream(3, streams::RESET),
    )
    .unwrap();
    let tasks = [task.clone()];
    let spec = RunSpec {
        tasks: &tasks,
        world,
        total_env_steps: n_e,
        warmup_steps: n_e,
        n_envs: cfg.n_parallel_envs,
        updates_per_step: 1,
        eval_every: 10 * n_e,
        eval_episodes: 1,
        replay_capacity: 10_000,
        seed: 3,
        sampling: Sampling::Fixed(TaskDistribution::uniform(1).unwrap()),
        stop_at_success: None,
    };
    runner::run(&mut agent, &spec, RunMeta::new("transfer", vec![task.name.clone()], 3, String::new())).unwrap();
    let learner = agent.learner();
    if learner.steps() == 0 {
        problems.push("no gradient steps during warm-up".to_string());
    }
    for col in 0..cfg.k {
        if bits(&learner.phi().column(col)[policy.clone()]) != bits(&phi0.column(col)[policy.clone()]) {
            problems.push(format!("policy rows of column {col} moved during warm-up"));
        }
        if learner.phi().column(col)[critic.clone()] == phi0.column(col)[critic.clone()] {
            problems.push(format!("critic rows of column {col} did not learn during warm-up"));
        }
    }
    if bits(&learner.w().column(0).w) != bits(&centroid) {
        problems.push("w_new moved during warm-up".into());
    }
    if agent.phase() != Phase::Finetune {
        problems.push("policy not released at the end of warm-up".into());
    }

    // Fixed Phi, end to end.
    let tcfg = TransferConfig {
        n_e: 300,
        n_max: 1_200,
        freeze_phi: true,
        stop_on_success: false,
        ..TransferConfig::default()
    };
    let out = run_transfer(&cfg, &tcfg, &pretrained, &task, &world, 3).unwrap();
    let fixed = out.agent.learner();
    if bits(fixed.phi().as_slice()) != bits(phi0.as_slice()) {
        problems.push("Phi changed in fixed-Phi transfer".into());
    }
    if fixed.w().column(0).w == centroid {
        problems.push("w_new never trained in fixed-Phi transfer".into());
    }
    Verdict::new(
        problems.is_empty(),
        if problems.is_empty() {
            format!(
                "warm-up: policy rows and w_new bit-unchanged over {} steps; fixed-Phi: Phi bit-unchanged over {} steps",
                learner.steps(),
                fixed.steps()
            )
        } else {
            problems.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

pub fn report_fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/report"))
}

pub fn fixture_log(name: &str) -> RunLog {
    RunLog::load(&report_fixtures().join(name).join("runlog.jsonl")).unwrap()
}

pub fn check_metrics() -> Verdict {
    let mut problems = Vec::new();
    if relative_cost(1e6, 1.0, 2e6, 1.0) != Some(0.5) {
        problems.push("relative_cost(1M,1,2M,1) != 0.5".to_string());
    }
    if relative_cost(3e6, 0.5, 3e6, 1.0) != Some(2.0) {
        problems.push("relative_cost(3M,0.5,3M,1) != 2.0".to_string());
    }
    let expected = [
        ("transfer-pull-far-s0", Some(20_000)),
        ("transfer-pull-far-s1", Some(30_000)),
        ("transfer-pull-far-s2", None),
        ("scratch-pull-far-s0", Some(60_000)),
        ("scratch-pull-far-s1", Some(80_000)),
        ("scratch-pull-far-s2", Some(50_000)),
        ("scratch-reach-far-s1", None),
    ];
    for (name, want) in expected {
        let got = required_steps(&fixture_log(name), 0.9, 100_000);
        if got != want {
            problems.push(format!("required_steps({name}) = {got:?}, expected {want:?}"));
        }
    }
    let mut logs = Vec::new();
    for path in expcli::find_logs(report_fixtures()).unwrap() {
        logs.push(RunLog::load(&path).unwrap());
    }
    let reports = expcli::build_reports(&logs, 0.9, 100_000);
    let golden = std::fs::read_to_string(report_fixtures().join("expected.csv")).unwrap();
    let first = expcli::reports_csv(&reports);
    let second = expcli::reports_csv(&expcli::build_reports(&logs, 0.9, 100_000));
    if first != golden || second != golden {
        problems.push("report CSV differs from the golden file".into());
    }
    Verdict::new(
        problems.is_empty(),
        if problems.is_empty() {
            "cost examples exact, 7 fixture step counts match, golden CSV stable".to_string()
        } else {
            problems.join("; ")
        },
    )
}

//! Soft actor-critic losses and their gradients for one task's minibatch.

use rand::Rng;
use rand_distr::StandardNormal;

use super::replay::ReplayBuffer;
use crate::error::{Error, Result};
use crate::neurals::{self, mlp, MlpTrace, NetworkLayout, PolicyOutput};
use crate::taskworld::Transition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacHyper {
    pub discount: f64,
    /// Usually `-action_dim`.
    pub target_entropy: f64,
}

/// Minibatch of one task with the reparameterisation noise pre-drawn, so
/// the loss is a deterministic function of the parameters.
#[derive(Debug, Clone)]
pub struct TaskBatch<'a> {
    pub task_id: usize,
    pub transitions: Vec<&'a Transition>,
    /// `len x action_dim`, for next-state actions in the critic target.
    pub next_noise: Vec<f64>,
    /// `len x action_dim`, for current-state actions in the actor loss.
    pub pi_noise: Vec<f64>,
}

impl<'a> TaskBatch<'a> {
    pub fn new(task_id: usize, transitions: Vec<&'a Transition>, next_noise: Vec<f64>, pi_noise: Vec<f64>) -> Self {
        Self {
            task_id,
            transitions,
            next_noise,
            pi_noise,
        }
    }

    /// Draws indices then noise for one task; `None` if it has no data.
    pub fn sample<R: Rng + ?Sized>(
        buffer: &'a ReplayBuffer,
        task: usize,
        size: usize,
        action_dim: usize,
        rng: &mut R,
    ) -> Option<Self> {
        let idx = buffer.sample_task(task, size, rng)?;
        let transitions = idx.into_iter().map(|i| buffer.get(i)).collect();
        let mut noise = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.sample(StandardNormal)).collect() };
        let next_noise = noise(size * action_dim);
        let pi_noise = noise(size * action_dim);
        Some(Self::new(task, transitions, next_noise, pi_noise))
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SacLosses {
    pub q: f64,
    pub pi: f64,
    pub alpha: f64,
    /// Mean `-log pi` of the current-state actions.
    pub entropy: f64,
}

impl SacLosses {
    pub fn total(&self) -> f64 {
        self.q + self.pi
    }
}

/// Gradients of the SAC losses.
///
/// `theta` holds `d L_pi / d policy-slots` in the policy block and
/// `d L_q / d critic-slots` in the critic block (targets and critic values
/// inside the actor loss are treated as constants).
#[derive(Debug, Clone, PartialEq)]
pub struct SacGrads {
    pub theta: Vec<f64>,
    pub log_alpha: f64,
}

/// Reusable scratch space.
#[derive(Debug, Clone, Default)]
pub struct SacWorkspace {
    policy: MlpTrace,
    q1: MlpTrace,
    q2: MlpTrace,
    input: Vec<f64>,
    d_raw: Vec<f64>,
    d_action: Vec<f64>,
}

fn concat(buf: &mut Vec<f64>, a: &[f64], b: &[f64]) {
    buf.clear();
    buf.extend_from_slice(a);
    buf.extend_from_slice(b);
}

/// Critic, actor and temperature losses of one task batch plus gradients.
///
/// `target_critic` is the target shadow of the critic block (length
/// `layout.critic_range().len()`).
pub fn sac_losses(
    layout: &NetworkLayout,
    theta: &[f64],
    target_critic: &[f64],
    log_alpha: f64,
    batch: &TaskBatch<'_>,
    hyper: &SacHyper,
    ws: &mut SacWorkspace,
) -> Result<(SacLosses, SacGrads)> {
    if theta.len() != layout.n() {
        return Err(Error::dim("theta", layout.n(), theta.len()));
    }
    if target_critic.len() != layout.critic_range().len() {
        return Err(Error::dim("target critic", layout.critic_range().len(), target_critic.len()));
    }
    let b = batch.len();
    if b == 0 {
        return Err(Error::InvalidArgument(format!("empty batch for task {}", batch.task_id)));
    }
    let ad = layout.action_dim;
    if batch.next_noise.len() != b * ad || batch.pi_noise.len() != b * ad {
        return Err(Error::dim("batch noise", b * ad, batch.next_noise.len().min(batch.pi_noise.len())));
    }
    let (tq1, tq2) = layout.shadow_critics();
    let alpha = log_alpha.exp();
    let inv_b = 1.0 / b as f64;
    let mut grad = vec![0.0; layout.n()];
    let mut losses = SacLosses::default();
    let mut logp_sum = 0.0;

    for (i, tr) in batch.transitions.iter().enumerate() {
        let noise_next = &batch.next_noise[i * ad..(i + 1) * ad];
        let noise_pi = &batch.pi_noise[i * ad..(i + 1) * ad];

        // Critic target.
        mlp::forward(theta, &layout.policy, &tr.next_state, &mut ws.policy);
        let next = neurals::squash(&PolicyOutput::from_raw(ws.policy.output()), noise_next);
        concat(&mut ws.input, &tr.next_state, &next.action);
        mlp::forward(target_critic, &tq1, &ws.input, &mut ws.q1);
        mlp::forward(target_critic, &tq2, &ws.input, &mut ws.q2);
        let target_q = ws.q1.output()[0].min(ws.q2.output()[0]);
        let not_done = if tr.done { 0.0 } else { 1.0 };
        let y = tr.reward + hyper.discount * not_done * (target_q - alpha * next.log_prob);

        // Critic regression.
        concat(&mut ws.input, &tr.state, &tr.action);
        mlp::forward(theta, &layout.q1, &ws.input, &mut ws.q1);
        mlp::forward(theta, &layout.q2, &ws.input, &mut ws.q2);
        let e1 = ws.q1.output()[0] - y;
        let e2 = ws.q2.output()[0] - y;
        losses.q += (e1 * e1 + e2 * e2) * inv_b;
        mlp::backward(theta, &layout.q1, &mut ws.q1, &[2.0 * e1 * inv_b], Some(&mut grad));
        mlp::backward(theta, &layout.q2, &mut ws.q2, &[2.0 * e2 * inv_b], Some(&mut grad));

        // Actor.
        mlp::forward(theta, &layout.policy, &tr.state, &mut ws.policy);
        let raw = ws.policy.output().to_vec();
        let cur = neurals::squash(&PolicyOutput::from_raw(&raw), noise_pi);
        concat(&mut ws.input, &tr.state, &cur.action);
        mlp::forward(theta, &layout.q1, &ws.input, &mut ws.q1);
        mlp::forward(theta, &layout.q2, &ws.input, &mut ws.q2);
        let (v1, v2) = (ws.q1.output()[0], ws.q2.output()[0]);
        losses.pi += (alpha * cur.log_prob - v1.min(v2)) * inv_b;
        logp_sum += cur.log_prob;

        // d(-min Q)/d action through the selected critic only.
        let d_input = if v1 <= v2 {
            mlp::backward(theta, &layout.q1, &mut ws.q1, &[-inv_b], None)
        } else {
            mlp::backward(theta, &layout.q2, &mut ws.q2, &[-inv_b], None)
        };
        ws.d_action.clear();
        ws.d_action.extend_from_slice(&d_input[layout.state_dim..]);
        neurals::squash_backward(&raw, noise_pi, &cur, &ws.d_action, alpha * inv_b, &mut ws.d_raw);
        mlp::backward(theta, &layout.policy, &mut ws.policy, &ws.d_raw, Some(&mut grad));
    }

    let mean_logp = logp_sum * inv_b;
    losses.entropy = -mean_logp;
    losses.alpha = -log_alpha * (mean_logp + hyper.target_entropy);
    let grads = SacGrads {
        theta: grad,
        log_alpha: -(mean_logp + hyper.target_entropy),
    };
    if !(losses.q.is_finite() && losses.pi.is_finite()) {
        // Reported, not raised: non-finite critic losses are handled by maskout.
        log::debug!("task {}: non-finite SAC loss {:?}", batch.task_id, losses);
    }
    Ok((losses, grads))
}

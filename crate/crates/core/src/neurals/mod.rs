//! Fixed SAC network family over flat parameter vectors.
//!
//! A tanh-squashed Gaussian policy and two Q networks share one flat
//! vector whose structure is described by [`NetworkLayout`]. Gradients are
//! derived by hand for this architecture; there is no general autodiff.

pub mod layout;
pub mod mlp;

pub use layout::{LayerSlot, MlpSlots, NetworkLayout};
pub use mlp::MlpTrace;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside the tanh Jacobian log term.
pub const TANH_EPS: f64 = 1e-6;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl PolicyOutput {
    /// Splits the raw head output into mean and clamped log-std.
    pub fn from_raw(raw: &[f64]) -> Self {
        let d = raw.len() / 2;
        Self {
            mean: raw[..d].to_vec(),
            log_std: raw[d..]
                .iter()
                .map(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX))
                .collect(),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.mean.len()
    }
}

/// Result of squashing `mean + std * noise` through tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dim(what, expected, got))
    }
}

pub fn policy_forward(theta: &[f64], layout: &NetworkLayout, state: &[f64]) -> Result<PolicyOutput> {
    check_dim("theta", layout.n(), theta.len())?;
    check_dim("state", layout.state_dim, state.len())?;
    Ok(PolicyOutput::from_raw(&mlp::forward_output(theta, &layout.policy, state)))
}

pub fn q_forward(theta: &[f64], layout: &NetworkLayout, state: &[f64], action: &[f64]) -> Result<(f64, f64)> {
    check_dim("theta", layout.n(), theta.len())?;
    check_dim("state", layout.state_dim, state.len())?;
    check_dim("action", layout.action_dim, action.len())?;
    let input: Vec<f64> = state.iter().chain(action).copied().collect();
    let q1 = mlp::forward_output(theta, &layout.q1, &input)[0];
    let q2 = mlp::forward_output(theta, &layout.q2, &input)[0];
    Ok((q1, q2))
}

/// Reparameterised sample for a fixed standard-normal `noise`.
pub fn squash(out: &PolicyOutput, noise: &[f64]) -> SquashedSample {
    let mut log_prob = 0.0;
    let action = out
        .mean
        .iter()
        .zip(&out.log_std)
        .zip(noise)
        .map(|((&m, &ls), &z)| {
            let a = (m + ls.exp() * z).tanh();
            log_prob += -0.5 * z * z - ls - HALF_LN_2PI - (1.0 - a * a + TANH_EPS).ln();
            a
        })
        .collect();
    SquashedSample { action, log_prob }
}

/// Draws an action from the squashed Gaussian.
pub fn sample_action<R: Rng + ?Sized>(out: &PolicyOutput, rng: &mut R) -> SquashedSample {
    let noise: Vec<f64> = (0..out.action_dim()).map(|_| rng.sample(StandardNormal)).collect();
    squash(out, &noise)
}

/// Deterministic evaluation action `tanh(mean)`.
pub fn deterministic_action(out: &PolicyOutput) -> Vec<f64> {
    out.mean.iter().map(|m| m.tanh()).collect()
}

/// Log-density of an action in `(-1, 1)^d` under the squashed Gaussian.
pub fn log_prob(out: &PolicyOutput, action: &[f64]) -> f64 {
    out.mean
        .iter()
        .zip(&out.log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let z = (a.atanh() - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI - (1.0 - a * a + TANH_EPS).ln()
        })
        .sum()
}

/// Chain rule through [`squash`] with fixed noise.
///
/// Given `d_action` and `d_log_prob` (upstream gradients), returns the
/// gradient w.r.t. the raw head output `[mean | raw_log_std]`. Clamped
/// log-std entries receive zero gradient.
pub fn squash_backward(
    raw: &[f64],
    noise: &[f64],
    sample: &SquashedSample,
    d_action: &[f64],
    d_log_prob: f64,
    d_raw: &mut Vec<f64>,
) {
    let d = noise.len();
    d_raw.clear();
    d_raw.resize(2 * d, 0.0);
    for i in 0..d {
        let a = sample.action[i];
        let one_minus = 1.0 - a * a;
        // d(-ln(1 - a^2 + eps)) / du with a = tanh(u)
        let jac_term = 2.0 * a * one_minus / (one_minus + TANH_EPS);
        let d_u = d_action[i] * one_minus + d_log_prob * jac_term;
        d_raw[i] = d_u;
        let raw_ls = raw[d + i];
        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_ls) {
            let std = raw_ls.exp();
            d_raw[d + i] = d_u * std * noise[i] - d_log_prob;
        }
    }
}

/// Polyak averaging `target <- (1 - tau) target + tau online`.
pub fn soft_update(target: &mut [f64], online: &[f64], tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1], got {tau}")));
    }
    check_dim("online slots", target.len(), online.len())?;
    if tau == 1.0 {
        target.copy_from_slice(online);
    } else {
        for (t, &o) in target.iter_mut().zip(online) {
            *t = (1.0 - tau) * *t + tau * o;
        }
    }
    Ok(())
}

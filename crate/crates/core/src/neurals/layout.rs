use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Index ranges of one dense layer inside the flat parameter vector.
///
/// Weights are row-major `fan_out x fan_in`, followed by `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSlot {
    pub weight: Range<usize>,
    pub bias: Range<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Contiguous block of layers forming one network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSlots {
    pub range: Range<usize>,
    pub layers: Vec<LayerSlot>,
}

impl MlpSlots {
    fn build(offset: usize, sizes: &[usize]) -> Self {
        let mut at = offset;
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let weight = at..at + fan_in * fan_out;
                let bias = weight.end..weight.end + fan_out;
                at = bias.end;
                LayerSlot {
                    weight,
                    bias,
                    fan_in,
                    fan_out,
                }
            })
            .collect();
        Self {
            range: offset..at,
            layers,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.fan_in.max(l.fan_out))
            .max()
            .unwrap_or(0)
    }

    /// Copy of these slots shifted so that the block starts at `offset`.
    pub fn rebased(&self, offset: usize) -> Self {
        let shift = |r: &Range<usize>| r.start - self.range.start + offset..r.end - self.range.start + offset;
        Self {
            range: shift(&self.range),
            layers: self
                .layers
                .iter()
                .map(|l| LayerSlot {
                    weight: shift(&l.weight),
                    bias: shift(&l.bias),
                    fan_in: l.fan_in,
                    fan_out: l.fan_out,
                })
                .collect(),
        }
    }
}

/// Maps the flat trainable vector onto the policy and the twin critics.
///
/// Order is `[policy | q1 | q2]`, so the policy block and the critic block
/// are each contiguous. Target critics are not part of the trainable vector;
/// they are shadow copies of the critic block kept by the trainer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub policy: MlpSlots,
    pub q1: MlpSlots,
    pub q2: MlpSlots,
}

impl NetworkLayout {
    pub fn new(state_dim: usize, action_dim: usize, hidden_sizes: &[usize]) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::InvalidArgument("state and action dims must be positive".into()));
        }
        if hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArgument("hidden layer widths must be positive".into()));
        }
        let mut policy_sizes = vec![state_dim];
        policy_sizes.extend_from_slice(hidden_sizes);
        policy_sizes.push(2 * action_dim);
        let mut q_sizes = vec![state_dim + action_dim];
        q_sizes.extend_from_slice(hidden_sizes);
        q_sizes.push(1);

        let policy = MlpSlots::build(0, &policy_sizes);
        let q1 = MlpSlots::build(policy.range.end, &q_sizes);
        let q2 = MlpSlots::build(q1.range.end, &q_sizes);
        Ok(Self {
            state_dim,
            action_dim,
            hidden_sizes: hidden_sizes.to_vec(),
            policy,
            q1,
            q2,
        })
    }

    /// Total trainable parameter count `n`.
    pub fn n(&self) -> usize {
        self.q2.range.end
    }

    pub fn policy_range(&self) -> Range<usize> {
        self.policy.range.clone()
    }

    /// Both critics, `q1` then `q2`.
    pub fn critic_range(&self) -> Range<usize> {
        self.q1.range.start..self.q2.range.end
    }

    /// Critic slots relative to the start of the critic block, for evaluating
    /// target shadows that store only the critic parameters.
    pub fn shadow_critics(&self) -> (MlpSlots, MlpSlots) {
        let q1 = self.q1.rebased(0);
        let q2 = self.q2.rebased(q1.range.end);
        (q1, q2)
    }

    /// Stable identifier of the architecture.
    pub fn hash(&self) -> String {
        let hidden: Vec<String> = self.hidden_sizes.iter().map(|h| h.to_string()).collect();
        let canon = format!(
            "taco-mlp/tanh-hidden/v1;state={};action={};hidden={}",
            self.state_dim,
            self.action_dim,
            hidden.join(",")
        );
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Uniform fan-in initialisation of every slot.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = vec![0.0; self.n()];
        for mlp in [&self.policy, &self.q1, &self.q2] {
            init_mlp(mlp, &mut theta, rng);
        }
        theta
    }

    /// Fresh initialisation of the critic block only.
    pub fn init_critics<R: Rng + ?Sized>(&self, theta: &mut [f64], rng: &mut R) {
        init_mlp(&self.q1, theta, rng);
        init_mlp(&self.q2, theta, rng);
    }
}

pub(crate) fn init_mlp<R: Rng + ?Sized>(mlp: &MlpSlots, theta: &mut [f64], rng: &mut R) {
    for layer in &mlp.layers {
        let bound = 1.0 / (layer.fan_in as f64).sqrt();
        for x in &mut theta[layer.weight.start..layer.bias.end] {
            *x = rng.random_range(-bound..bound);
        }
    }
}

//! Dense tanh network evaluated directly on a flat parameter slice.

use super::layout::MlpSlots;

/// Activations cached by [`forward`] plus scratch space for [`backward`].
#[derive(Debug, Clone, Default)]
pub struct MlpTrace {
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    dx: Vec<f64>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }

    pub fn input(&self) -> &[f64] {
        self.acts.first().map_or(&[], Vec::as_slice)
    }
}

/// Runs the network; hidden layers use tanh, the last layer is linear.
pub fn forward(theta: &[f64], mlp: &MlpSlots, input: &[f64], trace: &mut MlpTrace) {
    debug_assert_eq!(input.len(), mlp.input_dim());
    let depth = mlp.layers.len();
    trace.acts.resize_with(depth + 1, Vec::new);
    trace.acts[0].clear();
    trace.acts[0].extend_from_slice(input);
    for (l, layer) in mlp.layers.iter().enumerate() {
        let (done, rest) = trace.acts.split_at_mut(l + 1);
        let x = &done[l];
        let out = &mut rest[0];
        out.clear();
        let w = &theta[layer.weight.clone()];
        let b = &theta[layer.bias.clone()];
        for (row, &bias) in w.chunks_exact(layer.fan_in).zip(b) {
            let z = bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            out.push(if l + 1 < depth { z.tanh() } else { z });
        }
    }
}

/// Forward pass returning only the output.
pub fn forward_output(theta: &[f64], mlp: &MlpSlots, input: &[f64]) -> Vec<f64> {
    let mut trace = MlpTrace::default();
    forward(theta, mlp, input, &mut trace);
    trace.acts.pop().unwrap_or_default()
}

/// Back-propagates `dout` (gradient w.r.t. the network output) through the
/// recorded pass.
///
/// Parameter gradients are added into `grad` at the same absolute indices the
/// parameters occupy in `theta`. Returns the gradient w.r.t. the input.
pub fn backward<'t>(
    theta: &[f64],
    mlp: &MlpSlots,
    trace: &'t mut MlpTrace,
    dout: &[f64],
    mut grad: Option<&mut [f64]>,
) -> &'t [f64] {
    debug_assert_eq!(dout.len(), mlp.output_dim());
    trace.delta.clear();
    trace.delta.extend_from_slice(dout);
    for (l, layer) in mlp.layers.iter().enumerate().rev() {
        let x = &trace.acts[l];
        let w = &theta[layer.weight.clone()];
        if let Some(g) = grad.as_deref_mut() {
            let (gw, gb) = g[layer.weight.start..layer.bias.end].split_at_mut(layer.weight.len());
            for ((grow, gbias), &d) in gw.chunks_exact_mut(layer.fan_in).zip(gb.iter_mut()).zip(&trace.delta) {
                if d != 0.0 {
                    for (gi, &xi) in grow.iter_mut().zip(x) {
                        *gi += d * xi;
                    }
                }
                *gbias += d;
            }
        }
        trace.dx.clear();
        trace.dx.resize(layer.fan_in, 0.0);
        for (row, &d) in w.chunks_exact(layer.fan_in).zip(&trace.delta) {
            if d != 0.0 {
                for (dxi, &wi) in trace.dx.iter_mut().zip(row) {
                    *dxi += wi * d;
                }
            }
        }
        if l > 0 {
            // x is tanh output of the previous layer.
            trace.delta.clear();
            trace
                .delta
                .extend(trace.dx.iter().zip(x).map(|(d, a)| d * (1.0 - a * a)));
        }
    }
    &trace.dx
}

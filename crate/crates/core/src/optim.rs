//! Adam over flat parameter buffers.

use std::ops::Range;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Clears the moment estimates and the step counter.
    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    /// One step over the whole buffer with a single learning rate.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        let len = params.len();
        self.step_segments(params, grads, &[(0..len, lr)]);
    }

    /// One step where each segment has its own learning rate. Entries outside
    /// every segment (and their moments) are left untouched.
    pub fn step_segments(&mut self, params: &mut [f64], grads: &[f64], segments: &[(Range<usize>, f64)]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (range, lr) in segments {
            let lr = *lr;
            let it = params[range.clone()]
                .iter_mut()
                .zip(&grads[range.clone()])
                .zip(&mut self.m[range.clone()])
                .zip(&mut self.v[range.clone()]);
            for (((p, &g), m), v) in it {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

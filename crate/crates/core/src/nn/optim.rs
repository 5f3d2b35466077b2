//! Adam optimizer with per-tensor moment buffers.

use std::collections::HashMap;

use super::tape::Grads;
use super::{ParamId, Params};

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: HashMap<usize, Vec<f64>>,
    v: HashMap<usize, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    /// Applies one update to exactly the tensors in `subset`; every other
    /// tensor is left bit-unchanged. Phase alternation relies on this.
    pub fn step(&mut self, params: &mut Params, grads: &Grads, subset: &[ParamId]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for &id in subset {
            let g = match grads.get(id) {
                Some(g) => g,
                None => continue,
            };
            let tensor = params.tensor_mut(id);
            let m = self
                .m
                .entry(id.0)
                .or_insert_with(|| vec![0.0; tensor.data.len()]);
            let v = self
                .v
                .entry(id.0)
                .or_insert_with(|| vec![0.0; tensor.data.len()]);
            for j in 0..tensor.data.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                tensor.data[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tape;

    // Minimize f(w) = (w - 3)^2 expressed through tape ops.
    #[test]
    fn adam_descends_a_quadratic() {
        let mut params = Params::new();
        let w = params.add("w", 1, 1, vec![0.0]);
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            let mut tape = Tape::new(&params);
            let one = tape.input(vec![1.0]);
            let y = tape.matvec(w, one);
            let shift = tape.input(vec![-3.0]);
            let d = tape.add(y, shift);
            let sq = tape.mul(d, d);
            let neg = tape.pick_neg(sq, 0);
            let loss = tape.weighted_sum(vec![(neg, -1.0)]);
            let grads = tape.backward(loss);
            opt.step(&mut params, &grads, &[w]);
        }
        assert!((params.tensor(w).data[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn adam_leaves_unlisted_tensors_untouched() {
        let mut params = Params::new();
        let a = params.add("a", 1, 1, vec![1.0]);
        let b = params.add("b", 1, 1, vec![2.0]);
        let mut opt = Adam::new(0.1);
        let mut tape = Tape::new(&params);
        let xa = tape.input(vec![1.0]);
        let ya = tape.matvec(a, xa);
        let yb = tape.matvec(b, ya);
        let loss = tape.pick_neg(yb, 0);
        let grads = tape.backward(loss);
        assert!(grads.get(a).is_some() && grads.get(b).is_some());
        opt.step(&mut params, &grads, &[a]);
        assert_eq!(params.tensor(b).data[0], 2.0);
        assert_ne!(params.tensor(a).data[0], 1.0);
    }
}

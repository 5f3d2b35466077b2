//! Reverse-mode autodiff over f64 vectors.
//!
//! A [`Tape`] records vector-valued operations eagerly (forward values are
//! computed at construction) and [`Tape::backward`] accumulates gradients
//! for every parameter tensor touched by the graph. Losses are scalar nodes
//! (length-1 vectors).

use std::collections::HashMap;

use super::{ParamId, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    /// One row of an embedding table.
    Embed { table: ParamId, row: usize },
    /// `W x` for a parameter matrix and a vector node.
    MatVec { w: ParamId, x: NodeId },
    /// `x + b` for a parameter vector.
    AddBias { x: NodeId, b: ParamId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    Concat { a: NodeId, b: NodeId },
    Mean { xs: Vec<NodeId> },
    LogSoftmax { x: NodeId },
    /// Scalar `-x[idx]`: cross-entropy against a hard label when `x` is a
    /// log-softmax node.
    PickNeg { x: NodeId, idx: usize },
    /// Scalar `-sum_i w_i x_i`: cross-entropy against a fixed soft target
    /// when `x` is a log-softmax node.
    DotNeg { x: NodeId, weights: Vec<f64> },
    /// Scalar KL(p || Uniform_K) = sum_i exp(x_i) x_i + ln K for a
    /// log-softmax node `x`.
    KlUniform { x: NodeId },
    /// Scalar linear combination of scalar nodes.
    WeightedSum { xs: Vec<(NodeId, f64)> },
}

struct Node {
    op: Op,
    value: Vec<f64>,
}

pub struct Tape<'p> {
    params: &'p Params,
    nodes: Vec<Node>,
}

/// Gradients keyed by parameter id, in the flat layout of each tensor.
#[derive(Debug, Clone)]
pub struct Grads {
    by_param: HashMap<usize, Vec<f64>>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.by_param.get(&id.0).map(|v| v.as_slice())
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p Params) -> Tape<'p> {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.input(vec![0.0; len])
    }

    pub fn embed(&mut self, table: ParamId, row: usize) -> NodeId {
        let t = self.params.tensor(table);
        debug_assert!(row < t.rows);
        let value = t.data[row * t.cols..(row + 1) * t.cols].to_vec();
        self.push(Op::Embed { table, row }, value)
    }

    pub fn matvec(&mut self, w: ParamId, x: NodeId) -> NodeId {
        let t = self.params.tensor(w);
        let xv = &self.nodes[x.0].value;
        debug_assert_eq!(t.cols, xv.len(), "matvec shape mismatch for {}", t.name);
        let mut out = vec![0.0; t.rows];
        for r in 0..t.rows {
            let row = &t.data[r * t.cols..(r + 1) * t.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(xv.iter()) {
                acc += a * b;
            }
            out[r] = acc;
        }
        self.push(Op::MatVec { w, x }, out)
    }

    pub fn add_bias(&mut self, x: NodeId, b: ParamId) -> NodeId {
        let t = self.params.tensor(b);
        let xv = &self.nodes[x.0].value;
        debug_assert_eq!(t.data.len(), xv.len());
        let value = xv.iter().zip(&t.data).map(|(a, b)| a + b).collect();
        self.push(Op::AddBias { x, b }, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        self.push(Op::Add { a, b }, value)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        self.push(Op::Mul { a, b }, value)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0]
            .value
            .iter()
            .map(|&v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        self.push(Op::Sigmoid { x }, value)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.iter().map(|&v| v.tanh()).collect();
        self.push(Op::Tanh { x }, value)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut value = self.nodes[a.0].value.clone();
        value.extend_from_slice(&self.nodes[b.0].value);
        self.push(Op::Concat { a, b }, value)
    }

    pub fn mean(&mut self, xs: Vec<NodeId>) -> NodeId {
        assert!(!xs.is_empty());
        let len = self.nodes[xs[0].0].value.len();
        let mut value = vec![0.0; len];
        for &x in &xs {
            for (acc, v) in value.iter_mut().zip(&self.nodes[x.0].value) {
                *acc += v;
            }
        }
        let n = xs.len() as f64;
        for v in &mut value {
            *v /= n;
        }
        self.push(Op::Mean { xs }, value)
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + xv.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let value = xv.iter().map(|&v| v - lse).collect();
        self.push(Op::LogSoftmax { x }, value)
    }

    /// `-x[idx]` as a scalar node.
    pub fn pick_neg(&mut self, x: NodeId, idx: usize) -> NodeId {
        let v = self.nodes[x.0].value[idx];
        self.push(Op::PickNeg { x, idx }, vec![-v])
    }

    /// `-sum_i weights_i * x_i` as a scalar node.
    pub fn dot_neg(&mut self, x: NodeId, weights: Vec<f64>) -> NodeId {
        debug_assert_eq!(weights.len(), self.nodes[x.0].value.len());
        let v: f64 = self.nodes[x.0]
            .value
            .iter()
            .zip(&weights)
            .map(|(a, w)| a * w)
            .sum();
        self.push(Op::DotNeg { x, weights }, vec![-v])
    }

    /// KL divergence from the uniform distribution of the softmax encoded by
    /// the log-softmax node `x`. Non-negative; zero iff the distribution is
    /// uniform.
    pub fn kl_uniform(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let k = xv.len() as f64;
        let v: f64 = xv.iter().map(|&ls| ls.exp() * ls).sum::<f64>() + k.ln();
        self.push(Op::KlUniform { x }, vec![v.max(0.0)])
    }

    pub fn weighted_sum(&mut self, xs: Vec<(NodeId, f64)>) -> NodeId {
        let v: f64 = xs.iter().map(|&(x, c)| self.scalar(x) * c).sum();
        self.push(Op::WeightedSum { xs }, vec![v])
    }

    /// Accumulates `d root / d theta` for every parameter reachable from
    /// `root`, which must be a scalar node.
    pub fn backward(&self, root: NodeId) -> Grads {
        assert_eq!(self.nodes[root.0].value.len(), 1, "backward root must be scalar");
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        node_grads[root.0] = Some(vec![1.0]);
        let mut by_param: HashMap<usize, Vec<f64>> = HashMap::new();

        let add_to_node = |grads: &mut Vec<Option<Vec<f64>>>, id: NodeId, delta: &[f64]| {
            let slot = &mut grads[id.0];
            match slot {
                Some(g) => {
                    for (a, d) in g.iter_mut().zip(delta) {
                        *a += d;
                    }
                }
                None => *slot = Some(delta.to_vec()),
            }
        };

        for i in (0..=root.0).rev() {
            let g = match node_grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Embed { table, row } => {
                    let t = self.params.tensor(*table);
                    let buf = by_param
                        .entry(table.0)
                        .or_insert_with(|| vec![0.0; t.data.len()]);
                    for (j, d) in g.iter().enumerate() {
                        buf[row * t.cols + j] += d;
                    }
                }
                Op::MatVec { w, x } => {
                    let t = self.params.tensor(*w);
                    let xv = &self.nodes[x.0].value;
                    let buf = by_param
                        .entry(w.0)
                        .or_insert_with(|| vec![0.0; t.data.len()]);
                    let mut xg = vec![0.0; xv.len()];
                    for r in 0..t.rows {
                        let gr = g[r];
                        let row = &t.data[r * t.cols..(r + 1) * t.cols];
                        for c in 0..t.cols {
                            buf[r * t.cols + c] += gr * xv[c];
                            xg[c] += gr * row[c];
                        }
                    }
                    add_to_node(&mut node_grads, *x, &xg);
                }
                Op::AddBias { x, b } => {
                    let t = self.params.tensor(*b);
                    let buf = by_param
                        .entry(b.0)
                        .or_insert_with(|| vec![0.0; t.data.len()]);
                    for (acc, d) in buf.iter_mut().zip(&g) {
                        *acc += d;
                    }
                    add_to_node(&mut node_grads, *x, &g);
                }
                Op::Add { a, b } => {
                    add_to_node(&mut node_grads, *a, &g);
                    add_to_node(&mut node_grads, *b, &g);
                }
                Op::Mul { a, b } => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(d, y)| d * y).collect();
                    let gb: Vec<f64> = g.iter().zip(av).map(|(d, x)| d * x).collect();
                    add_to_node(&mut node_grads, *a, &ga);
                    add_to_node(&mut node_grads, *b, &gb);
                }
                Op::Sigmoid { x } => {
                    let yv = &self.nodes[i].value;
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(yv)
                        .map(|(d, y)| d * y * (1.0 - y))
                        .collect();
                    add_to_node(&mut node_grads, *x, &gx);
                }
                Op::Tanh { x } => {
                    let yv = &self.nodes[i].value;
                    let gx: Vec<f64> = g.iter().zip(yv).map(|(d, y)| d * (1.0 - y * y)).collect();
                    add_to_node(&mut node_grads, *x, &gx);
                }
                Op::Concat { a, b } => {
                    let alen = self.nodes[a.0].value.len();
                    add_to_node(&mut node_grads, *a, &g[..alen]);
                    add_to_node(&mut node_grads, *b, &g[alen..]);
                }
                Op::Mean { xs } => {
                    let n = xs.len() as f64;
                    let share: Vec<f64> = g.iter().map(|d| d / n).collect();
                    for &x in xs {
                        add_to_node(&mut node_grads, x, &share);
                    }
                }
                Op::LogSoftmax { x } => {
                    // d ls_i / d x_j = delta_ij - softmax_j
                    let ls = &self.nodes[i].value;
                    let gsum: f64 = g.iter().sum();
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(ls)
                        .map(|(d, &l)| d - l.exp() * gsum)
                        .collect();
                    add_to_node(&mut node_grads, *x, &gx);
                }
                Op::PickNeg { x, idx } => {
                    let mut gx = vec![0.0; self.nodes[x.0].value.len()];
                    gx[*idx] = -g[0];
                    add_to_node(&mut node_grads, *x, &gx);
                }
                Op::DotNeg { x, weights } => {
                    let gx: Vec<f64> = weights.iter().map(|w| -w * g[0]).collect();
                    add_to_node(&mut node_grads, *x, &gx);
                }
                Op::KlUniform { x } => {
                    // f = sum_i exp(ls_i) ls_i + ln K, df/dls_i = exp(ls_i)(ls_i + 1)
                    let ls = &self.nodes[x.0].value;
                    let gx: Vec<f64> = ls.iter().map(|&l| g[0] * l.exp() * (l + 1.0)).collect();
                    add_to_node(&mut node_grads, *x, &gx);
                }
                Op::WeightedSum { xs } => {
                    for &(x, c) in xs {
                        add_to_node(&mut node_grads, x, &[g[0] * c]);
                    }
                }
            }
        }
        Grads { by_param }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matvec_forward_and_grad() {
        let mut params = Params::new();
        let w = params.add("w", 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut tape = Tape::new(&params);
        let x = tape.input(vec![1.0, 0.5, -1.0]);
        let y = tape.matvec(w, x);
        assert_eq!(tape.value(y), &[1.0 + 1.0 - 3.0, 4.0 + 2.5 - 6.0]);
        // loss = -y[0]
        let loss = tape.pick_neg(y, 0);
        let grads = tape.backward(loss);
        let gw = grads.get(w).unwrap();
        assert_eq!(gw, &[-1.0, -0.5, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn log_softmax_matches_softmax() {
        let params = Params::new();
        let mut tape = Tape::new(&params);
        let x = tape.input(vec![0.2, -1.0, 3.0]);
        let ls = tape.log_softmax(x);
        let probs: Vec<f64> = tape.value(ls).iter().map(|l| l.exp()).collect();
        let direct = super::super::softmax(&[0.2, -1.0, 3.0]);
        for (a, b) in probs.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_uniform_zero_for_uniform() {
        let params = Params::new();
        let mut tape = Tape::new(&params);
        let x = tape.input(vec![0.7, 0.7, 0.7, 0.7]);
        let ls = tape.log_softmax(x);
        let kl = tape.kl_uniform(ls);
        assert!(tape.scalar(kl).abs() < 1e-12);
    }

    #[test]
    fn kl_uniform_positive_otherwise() {
        let params = Params::new();
        let mut tape = Tape::new(&params);
        let x = tape.input(vec![2.0, 0.0, -1.0]);
        let ls = tape.log_softmax(x);
        let kl = tape.kl_uniform(ls);
        assert!(tape.scalar(kl) > 0.0);
    }

    #[test]
    fn dot_neg_closed_form_cross_entropy() {
        // CE((1,0), (0.5,0.5)) = ln 2
        let params = Params::new();
        let mut tape = Tape::new(&params);
        let x = tape.input(vec![0.0, 0.0]);
        let ls = tape.log_softmax(x);
        let ce = tape.dot_neg(ls, vec![1.0, 0.0]);
        assert!((tape.scalar(ce) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    // Finite-difference audit of a small composite graph exercising every op.
    #[test]
    fn composite_graph_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = Params::new();
        let emb = params.add_glorot("emb", 4, 3, &mut rng);
        let w1 = params.add_glorot("w1", 3, 3, &mut rng);
        let b1 = params.add_glorot("b1", 3, 1, &mut rng);
        let w2 = params.add_glorot("w2", 2, 6, &mut rng);

        let loss_of = |params: &Params| -> f64 {
            let mut tape = Tape::new(params);
            let e0 = tape.embed(emb, 1);
            let e1 = tape.embed(emb, 3);
            let m = tape.mean(vec![e0, e1]);
            let h = tape.matvec(w1, m);
            let h = tape.add_bias(h, b1);
            let s = tape.sigmoid(h);
            let t = tape.tanh(h);
            let prod = tape.mul(s, t);
            let cat = tape.concat(prod, s);
            let logits = tape.matvec(w2, cat);
            let ls = tape.log_softmax(logits);
            let ce = tape.pick_neg(ls, 1);
            let kl = tape.kl_uniform(ls);
            let soft = tape.dot_neg(ls, vec![0.3, 0.7]);
            let total = tape.weighted_sum(vec![(ce, 0.5), (kl, 0.25), (soft, 0.25)]);
            tape.scalar(total)
        };

        let mut tape = Tape::new(&params);
        let e0 = tape.embed(emb, 1);
        let e1 = tape.embed(emb, 3);
        let m = tape.mean(vec![e0, e1]);
        let h = tape.matvec(w1, m);
        let h = tape.add_bias(h, b1);
        let s = tape.sigmoid(h);
        let t = tape.tanh(h);
        let prod = tape.mul(s, t);
        let cat = tape.concat(prod, s);
        let logits = tape.matvec(w2, cat);
        let ls = tape.log_softmax(logits);
        let ce = tape.pick_neg(ls, 1);
        let kl = tape.kl_uniform(ls);
        let soft = tape.dot_neg(ls, vec![0.3, 0.7]);
        let total = tape.weighted_sum(vec![(ce, 0.5), (kl, 0.25), (soft, 0.25)]);
        let grads = tape.backward(total);

        let eps = 1e-6;
        let mut checked = 0;
        for id in params.clone().ids() {
            let n = params.tensor(id).data.len();
            for j in 0..n {
                let orig = params.tensor(id).data[j];
                params.tensor_mut(id).data[j] = orig + eps;
                let up = loss_of(&params);
                params.tensor_mut(id).data[j] = orig - eps;
                let down = loss_of(&params);
                params.tensor_mut(id).data[j] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.get(id).map(|g| g[j]).unwrap_or(0.0);
                assert!(
                    (analytic - numeric).abs() <= 1e-4 * analytic.abs().max(numeric.abs()) + 1e-8,
                    "param {:?}[{}]: analytic {} vs numeric {}",
                    params.tensor(id).name,
                    j,
                    analytic,
                    numeric
                );
                checked += 1;
            }
        }
        assert!(checked > 20);
    }
}

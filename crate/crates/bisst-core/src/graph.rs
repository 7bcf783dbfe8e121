//! Reverse-mode autodiff on a tape of tensor primitives.
//!
//! A [`Graph`] records every operation during the forward pass. Nodes only
//! reference earlier nodes, so one reverse sweep over the tape visits each
//! recorded operation exactly once and accumulates gradients additively —
//! a parameter reused at many timesteps receives the sum of all path
//! contributions. Parameters are registered by name (memoized per graph) and
//! [`Graph::backprop`] returns a name-keyed gradient map.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tensor::{ParamStore, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Elementwise / last-axis nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    /// Applied over the last axis; rows sum to 1.
    Softmax,
}

/// Gradients keyed by parameter name.
pub type GradMap = BTreeMap<String, Tensor>;

// Largest f64 strictly below 1; sigmoid/tanh outputs are clamped to stay on
// the open interval even where exp() would round them onto the boundary.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

// Scores are clamped into [CLAMP_LO, 1 - CLAMP_LO] before the logs in the
// weighted cross entropy; entries outside get zero gradient (the clamped
// function is constant there).
const CLAMP_LO: f64 = 1e-12;

enum Op {
    Leaf,
    MatVec { w: NodeId, x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    ScaleShift { a: NodeId, scale: f64 },
    Concat { parts: Vec<NodeId> },
    Slice { a: NodeId, start: usize },
    Sigmoid { a: NodeId },
    Tanh { a: NodeId },
    Softmax { a: NodeId },
    Sum { a: NodeId },
    WeightedBce { scores: NodeId, labels: Vec<f64>, pos_w: Vec<f64>, neg_w: Vec<f64> },
    CrossEntropy { logits: NodeId, target: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// The recording tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, NodeId>,
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

fn stable_tanh(x: f64) -> f64 {
    libm::tanh(x).clamp(-ONE_BELOW, ONE_BELOW)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    /// Records a constant input (no gradient is reported for it).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(Tensor::scalar(v))
    }

    /// Registers a named parameter from the store. Repeated registration of
    /// the same name returns the original node, so gradient contributions
    /// from every use accumulate in one place.
    pub fn param(&mut self, name: &str, store: &ParamStore) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(store.expect(name).clone(), Op::Leaf);
        self.params.insert(name.into(), id);
        id
    }

    /// Matrix-vector product `w[m,n] · x[n] -> [m]`.
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let (wt, xt) = (self.value(w), self.value(x));
        if wt.rank() != 2 || xt.rank() != 1 || wt.shape()[1] != xt.shape()[0] {
            return Err(CoreError::InvalidShape(alloc::format!(
                "matvec: {:?} x {:?}",
                wt.shape(),
                xt.shape()
            )));
        }
        let (m, n) = (wt.shape()[0], wt.shape()[1]);
        let xd = xt.data();
        let out: Vec<f64> = wt
            .data()
            .chunks_exact(n)
            .map(|row| row.iter().zip(xd).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(Tensor::from_vec(&[m], out)?, Op::MatVec { w, x }))
    }

    /// `w · x + b`, the shared fully connected building block.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let wx = self.matvec(w, x)?;
        self.add(wx, b)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub { a, b }))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul { a, b }))
    }

    fn zip(&self, a: NodeId, b: NodeId, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.shape() != bt.shape() {
            return Err(CoreError::InvalidShape(alloc::format!(
                "{what}: {:?} vs {:?}",
                at.shape(),
                bt.shape()
            )));
        }
        let data = at.data().iter().zip(bt.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(at.shape(), data)
    }

    /// Elementwise `scale * a + shift`.
    pub fn scale_shift(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        let at = self.value(a);
        let data = at.data().iter().map(|&v| scale * v + shift).collect();
        let out = Tensor::from_vec(at.shape(), data).expect("shape preserved");
        self.push(out, Op::ScaleShift { a, scale })
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.scale_shift(a, k, 0.0)
    }

    /// Elementwise `1 - a` (gate complements).
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        self.scale_shift(a, -1.0, 1.0)
    }

    /// Concatenates rank-1 nodes into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(CoreError::Contract("concat of zero parts".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 1 {
                return Err(CoreError::InvalidShape(alloc::format!(
                    "concat expects rank-1 parts, got {:?}",
                    t.shape()
                )));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_vec(&[data.len()], data)?;
        Ok(self.push(out, Op::Concat { parts: parts.to_vec() }))
    }

    /// Contiguous slice of the flattened input; output is rank-1 `[len]`.
    /// Row `r` of a `[rows, cols]` matrix is `slice(m, r * cols, cols)`.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let at = self.value(a);
        if len == 0 || start + len > at.numel() {
            return Err(CoreError::InvalidShape(alloc::format!(
                "slice [{start}, {}) of {} elements",
                start + len,
                at.numel()
            )));
        }
        let data = at.data()[start..start + len].to_vec();
        let out = Tensor::from_vec(&[len], data)?;
        Ok(self.push(out, Op::Slice { a, start }))
    }

    pub fn activate(&mut self, a: NodeId, kind: Activation) -> NodeId {
        match kind {
            Activation::Sigmoid => self.sigmoid(a),
            Activation::Tanh => self.tanh(a),
            Activation::Softmax => self.softmax(a),
        }
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.map(a, stable_sigmoid);
        self.push(out, Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.map(a, stable_tanh);
        self.push(out, Op::Tanh { a })
    }

    fn map(&self, a: NodeId, f: impl Fn(f64) -> f64) -> Tensor {
        let at = self.value(a);
        let data = at.data().iter().map(|&v| f(v)).collect();
        Tensor::from_vec(at.shape(), data).expect("shape preserved")
    }

    /// Softmax over the last axis with max subtraction.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let at = self.value(a);
        let cols = *at.shape().last().expect("non-empty shape");
        let mut data = Vec::with_capacity(at.numel());
        for row in at.data().chunks_exact(cols) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| libm::exp(v - max)).collect();
            let sum: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|e| e / sum));
        }
        let out = Tensor::from_vec(at.shape(), data).expect("shape preserved");
        self.push(out, Op::Softmax { a })
    }

    /// Sum of all entries, as a scalar node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { a })
    }

    /// Weighted multi-label cross entropy over a score vector in (0,1):
    /// `-sum_i [pos_w_i * y_i * ln(c_i) + neg_w_i * (1 - y_i) * ln(1 - c_i)]`
    /// with scores clamped into `[1e-12, 1 - 1e-12]` before the logs.
    pub fn weighted_bce(
        &mut self,
        scores: NodeId,
        labels: &[f64],
        pos_w: &[f64],
        neg_w: &[f64],
    ) -> Result<NodeId> {
        let st = self.value(scores);
        let n = st.numel();
        if labels.len() != n || pos_w.len() != n || neg_w.len() != n {
            return Err(CoreError::InvalidShape(alloc::format!(
                "weighted_bce: {n} scores vs {} labels / {} / {} weights",
                labels.len(),
                pos_w.len(),
                neg_w.len()
            )));
        }
        let mut loss = 0.0;
        for (((&c, &y), &wp), &wn) in st.data().iter().zip(labels).zip(pos_w).zip(neg_w) {
            let c = c.clamp(CLAMP_LO, 1.0 - CLAMP_LO);
            loss -= wp * y * libm::log(c) + wn * (1.0 - y) * libm::log(1.0 - c);
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::WeightedBce {
                scores,
                labels: labels.to_vec(),
                pos_w: pos_w.to_vec(),
                neg_w: neg_w.to_vec(),
            },
        ))
    }

    /// Negative log likelihood of `target` under `softmax(logits)`, computed
    /// as `logsumexp(logits) - logits[target]`.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let lt = self.value(logits);
        if lt.rank() != 1 || target >= lt.numel() {
            return Err(CoreError::Contract(alloc::format!(
                "cross_entropy: target {target} for {:?} logits",
                lt.shape()
            )));
        }
        let max = lt.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(lt.data().iter().map(|&v| libm::exp(v - max)).sum());
        let loss = lse - lt.data()[target];
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, target }))
    }

    /// Reverse sweep from a scalar loss. Returns `dloss/dp` for every
    /// registered parameter; parameters off the loss path get exact zeros.
    pub fn backprop(&self, loss: NodeId) -> Result<GradMap> {
        if !self.value(loss).is_scalar() {
            return Err(CoreError::Contract(alloc::format!(
                "backprop requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if grads[i].is_none() {
                continue;
            }
            // Ops only reference earlier nodes, so inputs live strictly
            // below index i.
            let (lower, upper) = grads.split_at_mut(i);
            let g = upper[0].as_ref().expect("checked above");
            let node = &self.nodes[i];
            let numel_of = |id: NodeId| self.nodes[id.0].value.numel();
            fn acc(slot: &mut Option<Vec<f64>>, numel: usize) -> &mut Vec<f64> {
                slot.get_or_insert_with(|| vec![0.0; numel])
            }

            match &node.op {
                Op::Leaf => {}
                Op::MatVec { w, x } => {
                    let wt = &self.nodes[w.0].value;
                    let xt = &self.nodes[x.0].value;
                    let (m, n) = (wt.shape()[0], wt.shape()[1]);
                    if w.0 == x.0 {
                        // Degenerate self-product; not used by the models.
                        return Err(CoreError::Contract("matvec with w == x".into()));
                    }
                    let (first, second) = if w.0 < x.0 {
                        let (a, b) = lower.split_at_mut(x.0);
                        (&mut a[w.0], &mut b[0])
                    } else {
                        let (a, b) = lower.split_at_mut(w.0);
                        (&mut b[0], &mut a[x.0])
                    };
                    let dw = first.get_or_insert_with(|| vec![0.0; m * n]);
                    for i_row in 0..m {
                        let gi = g[i_row];
                        if gi != 0.0 {
                            for (dwv, xv) in
                                dw[i_row * n..(i_row + 1) * n].iter_mut().zip(xt.data())
                            {
                                *dwv += gi * xv;
                            }
                        }
                    }
                    let dx = second.get_or_insert_with(|| vec![0.0; n]);
                    for (i_row, row) in wt.data().chunks_exact(n).enumerate() {
                        let gi = g[i_row];
                        if gi != 0.0 {
                            for (dxv, wv) in dx.iter_mut().zip(row) {
                                *dxv += gi * wv;
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    for (d, gv) in acc(&mut lower[a.0], numel_of(*a)).iter_mut().zip(g) {
                        *d += gv;
                    }
                    for (d, gv) in acc(&mut lower[b.0], numel_of(*b)).iter_mut().zip(g) {
                        *d += gv;
                    }
                }
                Op::Sub { a, b } => {
                    for (d, gv) in acc(&mut lower[a.0], numel_of(*a)).iter_mut().zip(g) {
                        *d += gv;
                    }
                    for (d, gv) in acc(&mut lower[b.0], numel_of(*b)).iter_mut().zip(g) {
                        *d -= gv;
                    }
                }
                Op::Mul { a, b } => {
                    if a.0 == b.0 {
                        let av: Vec<f64> = self.nodes[a.0].value.data().to_vec();
                        let da = acc(&mut lower[a.0], numel_of(*a));
                        for ((d, gv), v) in da.iter_mut().zip(g).zip(&av) {
                            *d += 2.0 * gv * v;
                        }
                    } else {
                        let bv = self.nodes[b.0].value.data();
                        for ((d, gv), v) in acc(&mut lower[a.0], numel_of(*a)).iter_mut().zip(g).zip(bv) {
                            *d += gv * v;
                        }
                        let av = self.nodes[a.0].value.data();
                        for ((d, gv), v) in acc(&mut lower[b.0], numel_of(*b)).iter_mut().zip(g).zip(av) {
                            *d += gv * v;
                        }
                    }
                }
                Op::ScaleShift { a, scale } => {
                    for (d, gv) in acc(&mut lower[a.0], numel_of(*a)).iter_mut().zip(g) {
                        *d += scale * gv;
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = numel_of(p);
                        let dp = acc(&mut lower[p.0], numel_of(p));
                        for (d, gv) in dp.iter_mut().zip(&g[offset..offset + len]) {
                            *d += gv;
                        }
                        offset += len;
                    }
                }
                Op::Slice { a, start } => {
                    let da = acc(&mut lower[a.0], numel_of(*a));
                    for (d, gv) in da[*start..*start + g.len()].iter_mut().zip(g) {
                        *d += gv;
                    }
                }
                Op::Sigmoid { a } => {
                    let s = node.value.data();
                    for ((d, gv), sv) in acc(&mut lower[a.0], numel_of(*a)).iter_mut().zip(g).zip(s) {
                        *d += gv * sv * (1.0 - sv);
                    }
                }
                Op::Tanh { a } => {
                    let t = node.value.data();
                    for ((d, gv), tv) in acc(&mut lower[a.0], numel_of(*a)).iter_mut().zip(g).zip(t) {
                        *d += gv * (1.0 - tv * tv);
                    }
                }
                Op::Softmax { a } => {
                    let y = node.value.data();
                    let cols = *node.value.shape().last().expect("non-empty");
                    let da = acc(&mut lower[a.0], numel_of(*a));
                    for r in 0..y.len() / cols {
                        let (ys, gs) = (&y[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                        let dot: f64 = ys.iter().zip(gs).map(|(yv, gv)| yv * gv).sum();
                        for ((d, yv), gv) in
                            da[r * cols..(r + 1) * cols].iter_mut().zip(ys).zip(gs)
                        {
                            *d += yv * (gv - dot);
                        }
                    }
                }
                Op::Sum { a } => {
                    let gv = g[0];
                    for d in acc(&mut lower[a.0], numel_of(*a)) {
                        *d += gv;
                    }
                }
                Op::WeightedBce { scores, labels, pos_w, neg_w } => {
                    let gv = g[0];
                    let sv = self.nodes[scores.0].value.data();
                    let ds = acc(&mut lower[scores.0], numel_of(*scores));
                    for ((((d, &c), &y), &wp), &wn) in
                        ds.iter_mut().zip(sv).zip(labels).zip(pos_w).zip(neg_w)
                    {
                        if (CLAMP_LO..=1.0 - CLAMP_LO).contains(&c) {
                            *d += gv * (-wp * y / c + wn * (1.0 - y) / (1.0 - c));
                        }
                    }
                }
                Op::CrossEntropy { logits, target } => {
                    let gv = g[0];
                    let lv = self.nodes[logits.0].value.data();
                    let max = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = lv.iter().map(|&v| libm::exp(v - max)).sum();
                    let dl = acc(&mut lower[logits.0], numel_of(*logits));
                    for (j, (d, &v)) in dl.iter_mut().zip(lv).enumerate() {
                        let p = libm::exp(v - max) / sum;
                        *d += gv * (p - if j == *target { 1.0 } else { 0.0 });
                    }
                }
            }
        }

        let mut out = GradMap::new();
        for (name, &id) in &self.params {
            let shape = self.nodes[id.0].value.shape();
            let grad = match &grads[id.0] {
                Some(data) => Tensor::from_vec(shape, data.clone())?,
                None => Tensor::zeros(shape),
            };
            out.insert(name.clone(), grad);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn store_with(entries: &[(&str, Tensor)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (n, t) in entries {
            s.insert(*n, t.clone());
        }
        s
    }

    #[test]
    fn affine_identity() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = g.leaf(Tensor::zeros(&[2]));
        let x = g.leaf(Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap());
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 4.0]);
    }

    #[test]
    fn affine_row_sum() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap());
        let b = g.leaf(Tensor::from_vec(&[1], vec![-1.0]).unwrap());
        let x = g.leaf(Tensor::from_vec(&[2], vec![2.0, 3.0]).unwrap());
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[4.0]);
    }

    #[test]
    fn affine_zero_weights_returns_bias() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::zeros(&[1, 3]));
        let b = g.leaf(Tensor::from_vec(&[1], vec![5.0]).unwrap());
        let x = g.leaf(Tensor::from_vec(&[3], vec![9.0, -2.0, 7.0]).unwrap());
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[5.0]);
    }

    #[test]
    fn affine_shape_mismatch_errors() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::zeros(&[2, 3]));
        let b = g.leaf(Tensor::zeros(&[2]));
        let x = g.leaf(Tensor::zeros(&[2]));
        assert!(matches!(g.affine(x, w, b), Err(CoreError::InvalidShape(_))));
    }

    #[test]
    fn activations_at_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[1]));
        let s = g.activate(x, Activation::Sigmoid);
        assert_eq!(g.value(s).data(), &[0.5]);
        let t = g.activate(x, Activation::Tanh);
        assert_eq!(g.value(t).data(), &[0.0]);
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap());
        let y = g.softmax(x);
        for &v in g.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let sum: f64 = g.value(y).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(&[2, 3], vec![0.3, -4.0, 2.2, 10.0, 10.5, -3.0]).unwrap());
        let y = g.softmax(x);
        for row in g.value(y).data().chunks_exact(3) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backprop_linear_gradient() {
        // loss = sum(W x) with x = [1, 2] -> dloss/dW = [[1, 2]]
        let store = store_with(&[("w", Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap())]);
        let mut g = Graph::new();
        let w = g.param("w", &store);
        let x = g.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let wx = g.matvec(w, x).unwrap();
        let loss = g.sum(wx);
        let grads = g.backprop(loss).unwrap();
        assert_eq!(grads["w"].data(), &[1.0, 2.0]);
    }

    #[test]
    fn backprop_unused_param_is_zero() {
        let store = store_with(&[
            ("used", Tensor::scalar(2.0)),
            ("unused", Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap()),
        ]);
        let mut g = Graph::new();
        let u = g.param("used", &store);
        let _nu = g.param("unused", &store);
        let loss = g.sum(u);
        let grads = g.backprop(loss).unwrap();
        assert_eq!(grads["unused"].data(), &[0.0, 0.0, 0.0]);
        assert_eq!(grads["used"].data(), &[1.0]);
    }

    #[test]
    fn backprop_sigmoid_derivative_at_zero() {
        let store = store_with(&[("w", Tensor::scalar(0.0))]);
        let mut g = Graph::new();
        let w = g.param("w", &store);
        let s = g.sigmoid(w);
        let loss = g.sum(s);
        let grads = g.backprop(loss).unwrap();
        assert!((grads["w"].data()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gradient_accumulates_across_reuse() {
        // loss = sum(w * x1) + sum(w * x2): the two path contributions add.
        let store = store_with(&[("w", Tensor::from_vec(&[1, 2], vec![0.5, -0.5]).unwrap())]);
        let mut g = Graph::new();
        let w = g.param("w", &store);
        let x1 = g.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let x2 = g.leaf(Tensor::from_vec(&[2], vec![10.0, 20.0]).unwrap());
        let p1 = g.matvec(w, x1).unwrap();
        let p2 = g.matvec(w, x2).unwrap();
        let s = g.add(p1, p2).unwrap();
        let loss = g.sum(s);
        let grads = g.backprop(loss).unwrap();
        assert_eq!(grads["w"].data(), &[11.0, 22.0]);
    }

    #[test]
    fn non_scalar_loss_is_a_contract_error() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        assert!(matches!(g.backprop(x), Err(CoreError::Contract(_))));
    }

    #[test]
    fn weighted_bce_examples() {
        let mut g = Graph::new();
        // Perfect positive: y=1, c -> 1.
        let c = g.leaf(Tensor::from_vec(&[1], vec![1.0 - 1e-12]).unwrap());
        let l = g.weighted_bce(c, &[1.0], &[1.0], &[1.0]).unwrap();
        assert!(g.value(l).scalar_value().abs() < 1e-9);
        // y=1, c=0.5, w_pos=1 -> -ln 0.5.
        let c = g.leaf(Tensor::from_vec(&[1], vec![0.5]).unwrap());
        let l = g.weighted_bce(c, &[1.0], &[1.0], &[1.0]).unwrap();
        assert!((g.value(l).scalar_value() - core::f64::consts::LN_2).abs() < 1e-12);
        // y=0, c=0.5, w_neg=2 -> -2 ln 0.5.
        let c = g.leaf(Tensor::from_vec(&[1], vec![0.5]).unwrap());
        let l = g.weighted_bce(c, &[0.0], &[1.0], &[2.0]).unwrap();
        assert!((g.value(l).scalar_value() - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_log_softmax() {
        let mut g = Graph::new();
        let logits = g.leaf(Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let ce = g.cross_entropy(logits, 1).unwrap();
        let sm = g.softmax(logits);
        let expected = -libm::log(g.value(sm).data()[1]);
        assert!((g.value(ce).scalar_value() - expected).abs() < 1e-12);
    }

    #[test]
    fn slice_and_concat_roundtrip_gradients() {
        let store = store_with(&[("v", Tensor::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap())]);
        let mut g = Graph::new();
        let v = g.param("v", &store);
        let lo = g.slice(v, 0, 2).unwrap();
        let hi = g.slice(v, 2, 2).unwrap();
        let whole = g.concat(&[lo, hi]).unwrap();
        let doubled = g.scale(whole, 2.0);
        let loss = g.sum(doubled);
        let grads = g.backprop(loss).unwrap();
        assert_eq!(grads["v"].data(), &[2.0, 2.0, 2.0, 2.0]);
    }
}

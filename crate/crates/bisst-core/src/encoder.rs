//! The bidirectional single-stream proposal network: LSTM sweeps in both
//! directions, a K-way anchor scoring head shared across timesteps, score
//! fusion by multiplication, threshold selection, and the weighted
//! multi-label proposal loss.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::geometry::{anchor_interval, AnchorSet, Direction, Interval, LabelTensor};
use crate::graph::{Graph, NodeId};
use crate::tensor::ParamStore;

/// One LSTM cell step. `w` is `[4H x (sum of input dims + H)]` with gate
/// rows ordered input, forget, output, candidate; the pre-activation input
/// is the concatenation of `inputs` and `h_prev`.
pub(crate) fn lstm_cell(
    g: &mut Graph,
    w: NodeId,
    b: NodeId,
    inputs: &[NodeId],
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let hidden = g.value(h_prev).numel();
    let mut parts = inputs.to_vec();
    parts.push(h_prev);
    let z = g.concat(&parts)?;
    let pre = g.affine(z, w, b)?;
    let i_pre = g.slice(pre, 0, hidden)?;
    let i = g.sigmoid(i_pre);
    let f_pre = g.slice(pre, hidden, hidden)?;
    let f = g.sigmoid(f_pre);
    let o_pre = g.slice(pre, 2 * hidden, hidden)?;
    let o = g.sigmoid(o_pre);
    let cand_pre = g.slice(pre, 3 * hidden, hidden)?;
    let cand = g.tanh(cand_pre);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let c_act = g.tanh(c);
    let h = g.mul(o, c_act)?;
    Ok((h, c))
}

pub(crate) fn direction_prefix(direction: Direction) -> &'static str {
    match direction {
        Direction::Forward => "fwd",
        Direction::Backward => "bwd",
    }
}

/// Runs one encoder sweep over a `[T, D]` feature leaf. The forward pass
/// consumes `v_1 .. v_T`, the backward pass `v_T .. v_1`; hidden and cell
/// states start at zero. Returns the top-layer hidden state at every step in
/// consumption order.
pub fn encode_pass(
    g: &mut Graph,
    params: &ParamStore,
    features: NodeId,
    direction: Direction,
    layers: usize,
    hidden: usize,
) -> Result<Vec<NodeId>> {
    let shape = g.value(features).shape().to_vec();
    if shape.len() != 2 {
        return Err(CoreError::InvalidShape(alloc::format!(
            "encode_pass expects [T, D] features, got {shape:?}"
        )));
    }
    let (t_len, feat_dim) = (shape[0], shape[1]);
    let prefix = direction_prefix(direction);

    let zero = g.leaf(crate::tensor::Tensor::zeros(&[hidden]));
    let mut h = vec![zero; layers];
    let mut c = vec![zero; layers];
    let mut states = Vec::with_capacity(t_len);
    for step in 0..t_len {
        let row = match direction {
            Direction::Forward => step,
            Direction::Backward => t_len - 1 - step,
        };
        let mut input = g.slice(features, row * feat_dim, feat_dim)?;
        for layer in 0..layers {
            let w = g.param(&alloc::format!("enc.{prefix}.l{layer}.w"), params);
            let b = g.param(&alloc::format!("enc.{prefix}.l{layer}.b"), params);
            let (nh, nc) = lstm_cell(g, w, b, &[input], h[layer], c[layer])?;
            h[layer] = nh;
            c[layer] = nc;
            input = nh;
        }
        states.push(h[layers - 1]);
    }
    Ok(states)
}

/// Anchor confidence scores for one hidden state: `sigmoid(W_c h + b_c)`,
/// with the scoring weights shared across all timesteps of a direction.
pub fn score_step(
    g: &mut Graph,
    params: &ParamStore,
    direction: Direction,
    h: NodeId,
) -> Result<NodeId> {
    let prefix = direction_prefix(direction);
    let w = g.param(&alloc::format!("score.{prefix}.w"), params);
    let b = g.param(&alloc::format!("score.{prefix}.b"), params);
    let pre = g.affine(h, w, b)?;
    Ok(g.sigmoid(pre))
}

/// A candidate temporal interval with its per-direction and fused scores.
///
/// In a unidirectional configuration the absent pass contributes the
/// multiplicative identity 1.0, so the fused score equals the single
/// directional score.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalCandidate {
    pub interval: Interval,
    pub anchor_index: usize,
    pub forward_score: f64,
    pub backward_score: f64,
    pub fused_score: f64,
}

/// Pairs the two passes' scores per in-bounds (interval, anchor) pair and
/// fuses them by multiplication. An interval `[m, n]` takes the forward
/// score emitted at step `n` and the backward score emitted at step
/// `T - m + 1`; each in-bounds pair appears exactly once.
pub fn fuse_candidates(
    fwd_scores: Option<&[Vec<f64>]>,
    bwd_scores: Option<&[Vec<f64>]>,
    anchors: &AnchorSet,
    t_len: usize,
) -> Result<Vec<ProposalCandidate>> {
    if fwd_scores.is_none() && bwd_scores.is_none() {
        return Err(CoreError::Contract("no pass scores supplied".into()));
    }
    for scores in [fwd_scores, bwd_scores].into_iter().flatten() {
        if scores.len() != t_len {
            return Err(CoreError::Contract(alloc::format!(
                "pass produced {} steps for a {t_len}-step video",
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| s.len() != anchors.len()) {
            return Err(CoreError::Contract(alloc::format!(
                "step scored {} anchors, expected {}",
                bad.len(),
                anchors.len()
            )));
        }
    }
    let mut out = Vec::new();
    for (j, &len) in anchors.lengths().iter().enumerate() {
        for end in len..=t_len {
            let start = end - len + 1;
            let interval = Interval::new(start, end)?;
            debug_assert_eq!(
                anchor_interval(Direction::Forward, end, len, t_len),
                Some(interval)
            );
            let forward_score = fwd_scores.map_or(1.0, |s| s[end - 1][j]);
            let backward_score = bwd_scores.map_or(1.0, |s| s[t_len - start][j]);
            out.push(ProposalCandidate {
                interval,
                anchor_index: j,
                forward_score,
                backward_score,
                fused_score: forward_score * backward_score,
            });
        }
    }
    Ok(out)
}

/// Keeps candidates whose fused score exceeds `tau`, ordered by fused score
/// descending (ties: earlier start, then shorter length). No suppression is
/// applied here: overlapping events are expected in the captioning path.
pub fn select_proposals(candidates: &[ProposalCandidate], tau: f64) -> Vec<ProposalCandidate> {
    let mut kept: Vec<ProposalCandidate> = candidates
        .iter()
        .filter(|c| c.fused_score > tau)
        .cloned()
        .collect();
    kept.sort_by(|a, b| {
        b.fused_score
            .partial_cmp(&a.fused_score)
            .expect("scores are finite")
            .then(a.interval.start().cmp(&b.interval.start()))
            .then(a.interval.len().cmp(&b.interval.len()))
    });
    kept
}

/// Per-anchor weights for the two terms of the proposal loss. `w_pos`
/// multiplies the positive-label term and `w_neg` the negative-label term.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorClassWeights {
    pub w_pos: Vec<f64>,
    pub w_neg: Vec<f64>,
}

impl AnchorClassWeights {
    /// Uniform weights (both terms 1), useful for tiny fixtures.
    pub fn uniform(k: usize) -> Self {
        AnchorClassWeights { w_pos: vec![1.0; k], w_neg: vec![1.0; k] }
    }
}

/// Counts positives and negatives per anchor over a training set's label
/// tensors and balances the loss terms: the positive term gets the negative
/// fraction and vice versa. Anchors that never go positive fall back to
/// `w_pos = 1`, `w_neg = 1/K`.
pub fn anchor_class_weights(labels: &[LabelTensor]) -> Result<AnchorClassWeights> {
    let Some(first) = labels.first() else {
        return Err(CoreError::Contract("no label tensors supplied".into()));
    };
    let k = first.anchor_count();
    let mut pos = vec![0usize; k];
    let mut total = vec![0usize; k];
    for tensor in labels {
        if tensor.anchor_count() != k {
            return Err(CoreError::Contract(
                "label tensors disagree on anchor count".into(),
            ));
        }
        for (p, n) in pos.iter_mut().zip(&tensor.positives_per_anchor()) {
            *p += n;
        }
        for t in total.iter_mut() {
            *t += tensor.t_len();
        }
    }
    let mut w_pos = vec![0.0; k];
    let mut w_neg = vec![0.0; k];
    for j in 0..k {
        if pos[j] == 0 {
            w_pos[j] = 1.0;
            w_neg[j] = 1.0 / k as f64;
        } else {
            let neg = total[j] - pos[j];
            w_pos[j] = neg as f64 / total[j] as f64;
            w_neg[j] = pos[j] as f64 / total[j] as f64;
        }
    }
    Ok(AnchorClassWeights { w_pos, w_neg })
}

/// Weighted multi-label cross entropy over one direction's `T x K` scores,
/// summed over anchors and averaged over timesteps.
pub fn proposal_loss(
    g: &mut Graph,
    step_scores: &[NodeId],
    labels: &LabelTensor,
    weights: &AnchorClassWeights,
) -> Result<NodeId> {
    let t_len = step_scores.len();
    if t_len != labels.t_len() {
        return Err(CoreError::Contract(alloc::format!(
            "{t_len} score steps vs {} label steps",
            labels.t_len()
        )));
    }
    let k = labels.anchor_count();
    if weights.w_pos.len() != k || weights.w_neg.len() != k {
        return Err(CoreError::InvalidShape(alloc::format!(
            "weights cover {} anchors, labels {k}",
            weights.w_pos.len()
        )));
    }
    let all = g.concat(step_scores)?;
    let mut pos_w = Vec::with_capacity(t_len * k);
    let mut neg_w = Vec::with_capacity(t_len * k);
    for _ in 0..t_len {
        pos_w.extend_from_slice(&weights.w_pos);
        neg_w.extend_from_slice(&weights.w_neg);
    }
    let summed = g.weighted_bce(all, labels.data(), &pos_w, &neg_w)?;
    Ok(g.scale(summed, 1.0 / t_len as f64))
}

/// Parameter names and shapes of one encoder direction plus its scoring head.
pub(crate) fn encoder_param_shapes(
    direction: Direction,
    layers: usize,
    feature_dim: usize,
    hidden: usize,
    anchor_count: usize,
) -> Vec<(String, Vec<usize>)> {
    let prefix = direction_prefix(direction);
    let mut out = Vec::new();
    for layer in 0..layers {
        let input = if layer == 0 { feature_dim } else { hidden };
        out.push((
            alloc::format!("enc.{prefix}.l{layer}.w"),
            vec![4 * hidden, input + hidden],
        ));
        out.push((alloc::format!("enc.{prefix}.l{layer}.b"), vec![4 * hidden]));
    }
    out.push((alloc::format!("score.{prefix}.w"), vec![anchor_count, hidden]));
    out.push((alloc::format!("score.{prefix}.b"), vec![anchor_count]));
    out
}

//! The caption decoder: a two-layer LSTM over word embeddings and a fused
//! visual input, with five fusion strategies for building that input from a
//! proposal's clip features and its boundary context vectors.
//!
//! Fusion variants:
//! - `H` concatenated context vectors only
//! - `E` mean-pooled clip features only
//! - `E+H` mean-pooled clip features plus context vectors
//! - `TDA` temporal dynamic attention over the clip, recomputed at every
//!   decode step from the decoder state, concatenated with context vectors
//! - `TDA+CG` attended clip feature balanced against projected context
//!   vectors by a learned sigmoid gate

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::encoder::{lstm_cell, ProposalCandidate};
use crate::error::{CoreError, Result};
use crate::geometry::Interval;
use crate::graph::{Graph, NodeId};
use crate::tensor::{ParamStore, Tensor};

// ── Vocabulary ───────────────────────────────────────────────────────

/// Token table with fixed reserved entries at indices 0..=3.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
pub const PAD: usize = 3;

const RESERVED: [&str; 4] = ["<bos>", "<eos>", "<unk>", "<pad>"];

impl Vocabulary {
    /// Builds a vocabulary from whitespace-tokenized captions. Tokens are
    /// lowercased and sorted, so the table is deterministic for a given
    /// caption multiset.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(captions: I) -> Vocabulary {
        let mut set: alloc::collections::BTreeSet<String> = alloc::collections::BTreeSet::new();
        for caption in captions {
            for token in caption.split_whitespace() {
                let token = token.to_lowercase();
                if !RESERVED.contains(&token.as_str()) {
                    set.insert(token);
                }
            }
        }
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(set);
        Self::from_tokens(tokens).expect("construction is well-formed")
    }

    /// Restores a vocabulary from an ordered token list (checkpoint load).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary> {
        if tokens.len() < RESERVED.len()
            || tokens[..RESERVED.len()] != RESERVED.map(|s| s.to_string())
        {
            return Err(CoreError::Contract(
                "vocabulary must start with <bos> <eos> <unk> <pad>".into(),
            ));
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(CoreError::Contract(alloc::format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Index of a token; unknown tokens map to `<unk>`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(&token.to_lowercase()).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, caption: &str) -> Vec<usize> {
        caption.split_whitespace().map(|t| self.id(t)).collect()
    }

    /// Space-joined surface form, skipping reserved tokens.
    pub fn decode(&self, ids: &[usize]) -> String {
        let words: Vec<&str> = ids
            .iter()
            .filter(|&&id| id >= RESERVED.len() && id < self.tokens.len())
            .map(|&id| self.tokens[id].as_str())
            .collect();
        words.join(" ")
    }
}

// ── Fusion configuration ─────────────────────────────────────────────

/// Which visual input the decoder receives at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionVariant {
    /// Context vectors only.
    H,
    /// Mean-pooled clip features only.
    E,
    /// Mean-pooled clip features concatenated with context vectors.
    EH,
    /// Temporal dynamic attention over the clip plus context vectors.
    Tda,
    /// Attention plus context gating.
    TdaCg,
}

impl FusionVariant {
    pub const ALL: [FusionVariant; 5] =
        [FusionVariant::H, FusionVariant::E, FusionVariant::EH, FusionVariant::Tda, FusionVariant::TdaCg];

    pub fn uses_attention(self) -> bool {
        matches!(self, FusionVariant::Tda | FusionVariant::TdaCg)
    }

    pub fn uses_gate(self) -> bool {
        matches!(self, FusionVariant::TdaCg)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FusionVariant::H => "H",
            FusionVariant::E => "E",
            FusionVariant::EH => "E+H",
            FusionVariant::Tda => "TDA",
            FusionVariant::TdaCg => "TDA+CG",
        }
    }
}

impl core::fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for FusionVariant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_uppercase().as_str() {
            "H" => Ok(FusionVariant::H),
            "E" => Ok(FusionVariant::E),
            "E+H" | "EH" => Ok(FusionVariant::EH),
            "TDA" => Ok(FusionVariant::Tda),
            "TDA+CG" | "TDACG" => Ok(FusionVariant::TdaCg),
            other => Err(CoreError::Contract(alloc::format!(
                "unknown fusion variant {other:?} (expected H, E, E+H, TDA, TDA+CG)"
            ))),
        }
    }
}

// ── Per-proposal decode inputs ───────────────────────────────────────

/// Graph nodes a decoder needs for one proposal: the clip feature rows, the
/// transposed clip matrix (for attention-weighted sums), the clip mean, and
/// the two boundary context vectors. A missing direction (unidirectional
/// encoders) contributes a zero context vector of the same width.
pub struct ProposalContext {
    pub clip_rows: Vec<NodeId>,
    pub clip_t: NodeId,
    pub clip_mean: NodeId,
    pub h_fwd: NodeId,
    pub h_bwd: NodeId,
    /// `[h_fwd, h_bwd]` concatenated.
    pub ctx: NodeId,
    pub clip_len: usize,
}

impl ProposalContext {
    pub fn new(
        g: &mut Graph,
        features: NodeId,
        interval: Interval,
        h_fwd: Option<NodeId>,
        h_bwd: Option<NodeId>,
        encoder_hidden: usize,
    ) -> Result<ProposalContext> {
        let shape = g.value(features).shape().to_vec();
        if shape.len() != 2 {
            return Err(CoreError::InvalidShape(alloc::format!(
                "features must be [T, D], got {shape:?}"
            )));
        }
        let (t_len, d) = (shape[0], shape[1]);
        if interval.end() > t_len {
            return Err(CoreError::Contract(alloc::format!(
                "proposal [{}, {}] exceeds the {t_len}-step video",
                interval.start(),
                interval.end()
            )));
        }
        let p = interval.len();
        let flat: Vec<f64> = g.value(features).data().to_vec();
        let base = (interval.start() - 1) * d;
        let clip = &flat[base..base + p * d];

        let mut transposed = vec![0.0; d * p];
        let mut mean = vec![0.0; d];
        for (i, row) in clip.chunks_exact(d).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                transposed[j * p + i] = v;
                mean[j] += v / p as f64;
            }
        }
        let clip_rows: Result<Vec<NodeId>> = (0..p)
            .map(|i| g.slice(features, base + i * d, d))
            .collect();
        let clip_t = g.leaf(Tensor::from_vec(&[d, p], transposed)?);
        let clip_mean = g.leaf(Tensor::from_vec(&[d], mean)?);
        let h_fwd = h_fwd.unwrap_or_else(|| g.leaf(Tensor::zeros(&[encoder_hidden])));
        let h_bwd = h_bwd.unwrap_or_else(|| g.leaf(Tensor::zeros(&[encoder_hidden])));
        let ctx = g.concat(&[h_fwd, h_bwd])?;
        Ok(ProposalContext {
            clip_rows: clip_rows?,
            clip_t,
            clip_mean,
            h_fwd,
            h_bwd,
            ctx,
            clip_len: p,
        })
    }
}

// ── Fusion strategies ────────────────────────────────────────────────

/// The step-independent fusion variants: `H`, `E`, and `E+H`.
pub fn visual_input_simple(
    g: &mut Graph,
    variant: FusionVariant,
    ctx: &ProposalContext,
) -> Result<NodeId> {
    match variant {
        FusionVariant::H => Ok(ctx.ctx),
        FusionVariant::E => Ok(ctx.clip_mean),
        FusionVariant::EH => g.concat(&[ctx.clip_mean, ctx.h_fwd, ctx.h_bwd]),
        other => Err(CoreError::Contract(alloc::format!(
            "{other} is not a step-independent fusion"
        ))),
    }
}

/// Temporal dynamic attention: a relevance score per clip position from the
/// clip feature, the context vectors, and the previous decoder state, then a
/// softmax-weighted sum of the clip. Returns `(attended feature, weights)`.
pub fn tda_attend(
    g: &mut Graph,
    params: &ParamStore,
    ctx: &ProposalContext,
    h_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let wv = g.param("attn.wv", params);
    let wh = g.param("attn.wh", params);
    let wd = g.param("attn.wH", params);
    let bias = g.param("attn.b", params);
    let wa = g.param("attn.wa", params);

    let ctx_term = g.matvec(wh, ctx.ctx)?;
    let state_term = g.matvec(wd, h_prev)?;
    let partial = g.add(ctx_term, state_term)?;
    let shared = g.add(partial, bias)?;

    let mut scores = Vec::with_capacity(ctx.clip_len);
    for &row in &ctx.clip_rows {
        let feat_term = g.matvec(wv, row)?;
        let pre = g.add(feat_term, shared)?;
        let act = g.tanh(pre);
        scores.push(g.matvec(wa, act)?);
    }
    let logits = g.concat(&scores)?;
    let alpha = g.softmax(logits);
    let attended = g.matvec(ctx.clip_t, alpha)?;
    Ok((attended, alpha))
}

/// Context gating: projects the attended clip feature and the context
/// vectors into a shared space, computes a sigmoid gate from the current
/// decode context, and returns the gate-balanced concatenation.
pub fn context_gate(
    g: &mut Graph,
    params: &ParamStore,
    attended: NodeId,
    ctx: &ProposalContext,
    embedding: NodeId,
    h_prev: NodeId,
) -> Result<NodeId> {
    let wv = g.param("gate.wv", params);
    let wctx = g.param("gate.wctx", params);
    let wg = g.param("gate.wg", params);

    let v_pre = g.matvec(wv, attended)?;
    let v_proj = g.tanh(v_pre);
    let h_pre = g.matvec(wctx, ctx.ctx)?;
    let h_proj = g.tanh(h_pre);
    let gate_in = g.concat(&[v_proj, h_proj, embedding, h_prev])?;
    let gate_pre = g.matvec(wg, gate_in)?;
    let gate = g.sigmoid(gate_pre);

    let gate_inv = g.one_minus(gate);
    let event_part = g.mul(gate_inv, v_proj)?;
    let ctx_part = g.mul(gate, h_proj)?;
    g.concat(&[event_part, ctx_part])
}

/// Builds the decoder's visual input for one step under any variant.
pub fn visual_input(
    g: &mut Graph,
    params: &ParamStore,
    variant: FusionVariant,
    ctx: &ProposalContext,
    embedding: NodeId,
    h_prev: NodeId,
) -> Result<NodeId> {
    match variant {
        FusionVariant::H | FusionVariant::E | FusionVariant::EH => {
            visual_input_simple(g, variant, ctx)
        }
        FusionVariant::Tda => {
            let (attended, _alpha) = tda_attend(g, params, ctx, h_prev)?;
            g.concat(&[attended, ctx.h_fwd, ctx.h_bwd])
        }
        FusionVariant::TdaCg => {
            let (attended, _alpha) = tda_attend(g, params, ctx, h_prev)?;
            context_gate(g, params, attended, ctx, embedding, h_prev)
        }
    }
}

// ── Decoder steps ────────────────────────────────────────────────────

/// Hidden and cell state per decoder layer.
pub struct DecoderState {
    pub h: Vec<NodeId>,
    pub c: Vec<NodeId>,
}

impl DecoderState {
    pub fn zeros(g: &mut Graph, hidden: usize) -> DecoderState {
        let zero = g.leaf(Tensor::zeros(&[hidden]));
        DecoderState { h: vec![zero; 2], c: vec![zero; 2] }
    }

    /// The top-layer hidden state, fed to the output projection and to the
    /// attention/gate as the previous decode context.
    pub fn top(&self) -> NodeId {
        self.h[1]
    }
}

/// Decoder hidden width, read off the output projection.
pub fn decoder_hidden(params: &ParamStore) -> usize {
    params.expect("dec.out.w").shape()[1]
}

/// Embedding row for a token id (out-of-vocabulary ids map to `<unk>`).
pub fn embed_token(g: &mut Graph, params: &ParamStore, token: usize) -> Result<NodeId> {
    let table = g.param("dec.embed", params);
    let (vocab, dim) = {
        let s = g.value(table).shape();
        (s[0], s[1])
    };
    let token = if token < vocab { token } else { UNK };
    g.slice(table, token * dim, dim)
}

/// One step of the two-layer decoder: the first layer consumes the word
/// embedding and the fused visual input, the second consumes the first
/// layer's output.
pub fn lstm_step(
    g: &mut Graph,
    params: &ParamStore,
    embedding: NodeId,
    visual: NodeId,
    state: &DecoderState,
) -> Result<DecoderState> {
    let w0 = g.param("dec.l0.w", params);
    let b0 = g.param("dec.l0.b", params);
    let (h0, c0) = lstm_cell(g, w0, b0, &[embedding, visual], state.h[0], state.c[0])?;
    let w1 = g.param("dec.l1.w", params);
    let b1 = g.param("dec.l1.b", params);
    let (h1, c1) = lstm_cell(g, w1, b1, &[h0], state.h[1], state.c[1])?;
    Ok(DecoderState { h: vec![h0, h1], c: vec![c0, c1] })
}

/// Next-token distribution from the top hidden state.
pub fn decode_distribution(g: &mut Graph, params: &ParamStore, h_top: NodeId) -> Result<NodeId> {
    let logits = output_logits(g, params, h_top)?;
    Ok(g.softmax(logits))
}

fn output_logits(g: &mut Graph, params: &ParamStore, h_top: NodeId) -> Result<NodeId> {
    let w = g.param("dec.out.w", params);
    let b = g.param("dec.out.b", params);
    g.affine(h_top, w, b)
}

// ── Losses and decoding ──────────────────────────────────────────────

/// Teacher-forced negative log likelihood of a reference caption plus its
/// terminal `<eos>`, summed over positions. `<bos>` is fed first and the
/// ground-truth token at every later step.
pub fn caption_loss(
    g: &mut Graph,
    params: &ParamStore,
    variant: FusionVariant,
    ctx: &ProposalContext,
    reference: &[usize],
) -> Result<NodeId> {
    if reference.is_empty() {
        return Err(CoreError::Contract("reference caption is empty".into()));
    }
    let hidden = decoder_hidden(params);
    let vocab = params.expect("dec.out.w").shape()[0];
    let clamp = |t: usize| if t < vocab { t } else { UNK };

    let mut inputs = vec![BOS];
    inputs.extend(reference.iter().map(|&t| clamp(t)));
    let mut targets: Vec<usize> = reference.iter().map(|&t| clamp(t)).collect();
    targets.push(EOS);

    let mut state = DecoderState::zeros(g, hidden);
    let mut total: Option<NodeId> = None;
    for (&input, &target) in inputs.iter().zip(&targets) {
        let embedding = embed_token(g, params, input)?;
        let visual = visual_input(g, params, variant, ctx, embedding, state.top())?;
        state = lstm_step(g, params, embedding, visual, &state)?;
        let logits = output_logits(g, params, state.top())?;
        let nll = g.cross_entropy(logits, target)?;
        total = Some(match total {
            Some(acc) => g.add(acc, nll)?,
            None => nll,
        });
    }
    Ok(total.expect("at least one position"))
}

/// Greedy argmax decoding (ties resolve to the lowest index). Returns the
/// emitted tokens (`<eos>`-terminated unless `max_len` is hit), their
/// probabilities, and the caption confidence `sum(ln p)`.
pub fn greedy_decode(
    g: &mut Graph,
    params: &ParamStore,
    variant: FusionVariant,
    ctx: &ProposalContext,
    max_len: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if max_len == 0 {
        return Err(CoreError::Contract("max_len must be at least 1".into()));
    }
    let hidden = decoder_hidden(params);
    let mut state = DecoderState::zeros(g, hidden);
    let mut prev = BOS;
    let mut tokens = Vec::new();
    let mut probs = Vec::new();
    for _ in 0..max_len {
        let embedding = embed_token(g, params, prev)?;
        let visual = visual_input(g, params, variant, ctx, embedding, state.top())?;
        state = lstm_step(g, params, embedding, visual, &state)?;
        let dist = decode_distribution(g, params, state.top())?;
        let row = g.value(dist).data();
        let mut best = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        tokens.push(best);
        probs.push(row[best]);
        if best == EOS {
            break;
        }
        prev = best;
    }
    Ok((tokens, probs))
}

/// Caption confidence: the exact sum of log token probabilities.
pub fn caption_confidence(token_probs: &[f64]) -> f64 {
    token_probs.iter().map(|&p| libm::log(p)).sum()
}

// ── Joint ranking ────────────────────────────────────────────────────

/// A proposal with its decoded caption and confidence scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionedEvent {
    pub proposal: ProposalCandidate,
    pub tokens: Vec<usize>,
    pub token_probs: Vec<f64>,
    /// `sum(ln p)` over emitted tokens, `<eos>` included. Always <= 0.
    pub caption_confidence: f64,
    /// `gamma * fused_score + caption_confidence`, set by [`joint_rank`].
    pub joint_score: f64,
}

/// Ranks events by `gamma * proposal score + caption confidence` descending
/// (ties: higher proposal score, then earlier start) and returns the top-k.
pub fn joint_rank(events: &[CaptionedEvent], gamma: f64, k: usize) -> Vec<CaptionedEvent> {
    let mut scored: Vec<CaptionedEvent> = events
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.joint_score = gamma * e.proposal.fused_score + e.caption_confidence;
            e
        })
        .collect();
    scored.sort_by(|a, b| {
        b.joint_score
            .partial_cmp(&a.joint_score)
            .expect("scores are finite")
            .then(
                b.proposal
                    .fused_score
                    .partial_cmp(&a.proposal.fused_score)
                    .expect("scores are finite"),
            )
            .then(a.proposal.interval.start().cmp(&b.proposal.interval.start()))
    });
    scored.truncate(k);
    scored
}

/// Parameter names and shapes of the decoder for a given configuration.
#[allow(clippy::too_many_arguments)]
pub(crate) fn decoder_param_shapes(
    variant: FusionVariant,
    feature_dim: usize,
    encoder_hidden: usize,
    vocab_size: usize,
    embed_dim: usize,
    decoder_hidden: usize,
    attn_dim: usize,
    gate_dim: usize,
) -> Vec<(String, Vec<usize>)> {
    let ctx_dim = 2 * encoder_hidden;
    let fused_dim = match variant {
        FusionVariant::H => ctx_dim,
        FusionVariant::E => feature_dim,
        FusionVariant::EH | FusionVariant::Tda => feature_dim + ctx_dim,
        FusionVariant::TdaCg => 2 * gate_dim,
    };
    let mut out = vec![
        ("dec.embed".to_string(), vec![vocab_size, embed_dim]),
        (
            "dec.l0.w".to_string(),
            vec![4 * decoder_hidden, embed_dim + fused_dim + decoder_hidden],
        ),
        ("dec.l0.b".to_string(), vec![4 * decoder_hidden]),
        ("dec.l1.w".to_string(), vec![4 * decoder_hidden, 2 * decoder_hidden]),
        ("dec.l1.b".to_string(), vec![4 * decoder_hidden]),
        ("dec.out.w".to_string(), vec![vocab_size, decoder_hidden]),
        ("dec.out.b".to_string(), vec![vocab_size]),
    ];
    if variant.uses_attention() {
        out.push(("attn.wv".to_string(), vec![attn_dim, feature_dim]));
        out.push(("attn.wh".to_string(), vec![attn_dim, ctx_dim]));
        out.push(("attn.wH".to_string(), vec![attn_dim, decoder_hidden]));
        out.push(("attn.b".to_string(), vec![attn_dim]));
        out.push(("attn.wa".to_string(), vec![1, attn_dim]));
    }
    if variant.uses_gate() {
        out.push(("gate.wv".to_string(), vec![gate_dim, feature_dim]));
        out.push(("gate.wctx".to_string(), vec![gate_dim, ctx_dim]));
        out.push((
            "gate.wg".to_string(),
            vec![gate_dim, 2 * gate_dim + embed_dim + decoder_hidden],
        ));
    }
    out
}

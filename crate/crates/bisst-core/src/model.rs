//! The full dense-captioning model: named parameters for the configured
//! encoder directions and decoder, graph builders for the training losses,
//! and the inference pipeline (propose, decode, rank).

use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decoder::{
    caption_confidence, caption_loss, decoder_param_shapes, greedy_decode, joint_rank,
    CaptionedEvent, FusionVariant, ProposalContext, Vocabulary,
};
use crate::encoder::{
    encode_pass, encoder_param_shapes, fuse_candidates, proposal_loss, score_step,
    select_proposals, AnchorClassWeights, ProposalCandidate,
};
use crate::error::{CoreError, Result};
use crate::geometry::{label_anchors, tiou, AnchorSet, Direction, Interval};
use crate::graph::{Graph, NodeId};
use crate::synth::FeatureSequence;
use crate::tensor::{init_with_rng, InitScheme, ParamStore, Tensor};

/// Which encoder sweeps the model runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionMode {
    ForwardOnly,
    BackwardOnly,
    Bidirectional,
}

impl DirectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DirectionMode::ForwardOnly => "fwd",
            DirectionMode::BackwardOnly => "bwd",
            DirectionMode::Bidirectional => "bi",
        }
    }

    pub fn directions(self) -> &'static [Direction] {
        match self {
            DirectionMode::ForwardOnly => &[Direction::Forward],
            DirectionMode::BackwardOnly => &[Direction::Backward],
            DirectionMode::Bidirectional => &[Direction::Forward, Direction::Backward],
        }
    }

    /// One encoder layer per direction bidirectionally; the unidirectional
    /// baselines get a two-layer encoder.
    pub fn encoder_layers(self) -> usize {
        match self {
            DirectionMode::Bidirectional => 1,
            _ => 2,
        }
    }
}

impl core::fmt::Display for DirectionMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for DirectionMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "fwd" | "forward" => Ok(DirectionMode::ForwardOnly),
            "bwd" | "backward" => Ok(DirectionMode::BackwardOnly),
            "bi" | "bidirectional" => Ok(DirectionMode::Bidirectional),
            other => Err(CoreError::Contract(alloc::format!(
                "unknown direction mode {other:?} (expected fwd, bwd, bi)"
            ))),
        }
    }
}

/// Model dimensions and architectural switches.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub embed_dim: usize,
    pub attn_dim: usize,
    pub gate_dim: usize,
    pub direction: DirectionMode,
    pub fusion: FusionVariant,
    pub max_caption_len: usize,
}

impl ModelConfig {
    /// Desk-scale defaults around a given feature width.
    pub fn new(feature_dim: usize) -> ModelConfig {
        ModelConfig {
            feature_dim,
            encoder_hidden: 128,
            decoder_hidden: 128,
            embed_dim: 64,
            attn_dim: 64,
            gate_dim: 128,
            direction: DirectionMode::Bidirectional,
            fusion: FusionVariant::TdaCg,
            max_caption_len: 20,
        }
    }
}

/// Per-graph handles to one video's encoder outputs.
pub struct EncodedVideo {
    pub features: NodeId,
    pub t_len: usize,
    pub fwd: Option<Vec<NodeId>>,
    pub bwd: Option<Vec<NodeId>>,
}

/// Per-graph handles to the per-step anchor score vectors.
pub struct ScoredVideo {
    pub fwd: Option<Vec<NodeId>>,
    pub bwd: Option<Vec<NodeId>>,
}

/// Configuration, anchors, vocabulary, and parameters of one model.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub anchors: AnchorSet,
    pub vocab: Vocabulary,
    pub params: ParamStore,
}

impl Model {
    /// Initializes all parameters from one master seed: uniform fan-in/out
    /// for weights, zeros for biases, and a +1 offset on every LSTM forget
    /// gate bias.
    pub fn new(
        config: ModelConfig,
        anchors: AnchorSet,
        vocab: Vocabulary,
        seed: u64,
    ) -> Result<Model> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape) in param_shapes(&config, anchors.len(), vocab.len()) {
            let is_bias = shape.len() == 1 && name != "attn.b";
            let scheme = if is_bias || name == "attn.b" {
                InitScheme::Zeros
            } else {
                InitScheme::UniformFan
            };
            let mut tensor = init_with_rng(&shape, &mut rng, scheme)?;
            if name.starts_with("enc.") && name.ends_with(".b")
                || name == "dec.l0.b"
                || name == "dec.l1.b"
            {
                let hidden = tensor.numel() / 4;
                for v in &mut tensor.data_mut()[hidden..2 * hidden] {
                    *v += 1.0;
                }
            }
            params.insert(name, tensor);
        }
        Ok(Model { config, anchors, vocab, params })
    }

    /// Leaf node for a video's `[T, D]` features.
    pub fn features_leaf(&self, g: &mut Graph, video: &FeatureSequence) -> Result<NodeId> {
        if video.feature_dim != self.config.feature_dim {
            return Err(CoreError::InvalidShape(alloc::format!(
                "video {} has {}-dim features, model expects {}",
                video.video_id,
                video.feature_dim,
                self.config.feature_dim
            )));
        }
        let t_len = video.t_len();
        if t_len == 0 {
            return Err(CoreError::Contract(alloc::format!(
                "video {} is empty",
                video.video_id
            )));
        }
        Ok(g.leaf(Tensor::from_vec(&[t_len, video.feature_dim], video.features.clone())?))
    }

    /// Runs the configured encoder sweeps.
    pub fn encode_video(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        video: &FeatureSequence,
    ) -> Result<EncodedVideo> {
        let features = self.features_leaf(g, video)?;
        let layers = self.config.direction.encoder_layers();
        let hidden = self.config.encoder_hidden;
        let mut encoded = EncodedVideo { features, t_len: video.t_len(), fwd: None, bwd: None };
        for &dir in self.config.direction.directions() {
            let states = encode_pass(g, params, features, dir, layers, hidden)?;
            match dir {
                Direction::Forward => encoded.fwd = Some(states),
                Direction::Backward => encoded.bwd = Some(states),
            }
        }
        Ok(encoded)
    }

    /// Scores every encoder step against the anchor set.
    pub fn score_video(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        encoded: &EncodedVideo,
    ) -> Result<ScoredVideo> {
        let mut scored = ScoredVideo { fwd: None, bwd: None };
        if let Some(states) = &encoded.fwd {
            let nodes: Result<Vec<NodeId>> = states
                .iter()
                .map(|&h| score_step(g, params, Direction::Forward, h))
                .collect();
            scored.fwd = Some(nodes?);
        }
        if let Some(states) = &encoded.bwd {
            let nodes: Result<Vec<NodeId>> = states
                .iter()
                .map(|&h| score_step(g, params, Direction::Backward, h))
                .collect();
            scored.bwd = Some(nodes?);
        }
        Ok(scored)
    }

    /// Extracts score values and fuses the two passes into candidates.
    pub fn candidates(
        &self,
        g: &Graph,
        scored: &ScoredVideo,
        t_len: usize,
    ) -> Result<Vec<ProposalCandidate>> {
        let extract = |nodes: &Option<Vec<NodeId>>| -> Option<Vec<Vec<f64>>> {
            nodes
                .as_ref()
                .map(|ns| ns.iter().map(|&n| g.value(n).data().to_vec()).collect())
        };
        let fwd = extract(&scored.fwd);
        let bwd = extract(&scored.bwd);
        fuse_candidates(fwd.as_deref(), bwd.as_deref(), &self.anchors, t_len)
    }

    /// Decode-time inputs for one proposal: clip features plus the boundary
    /// context vectors (`h_fwd` at the end step, `h_bwd` at the backward
    /// step that starts the interval). Missing directions contribute zeros.
    pub fn proposal_context(
        &self,
        g: &mut Graph,
        encoded: &EncodedVideo,
        interval: Interval,
    ) -> Result<ProposalContext> {
        if interval.end() > encoded.t_len {
            return Err(CoreError::Contract(alloc::format!(
                "proposal [{}, {}] exceeds the {}-step video",
                interval.start(),
                interval.end(),
                encoded.t_len
            )));
        }
        let h_fwd = encoded.fwd.as_ref().map(|s| s[interval.end() - 1]);
        let h_bwd = encoded.bwd.as_ref().map(|s| s[encoded.t_len - interval.start()]);
        ProposalContext::new(
            g,
            encoded.features,
            interval,
            h_fwd,
            h_bwd,
            self.config.encoder_hidden,
        )
    }

    /// Sum of the per-direction weighted proposal losses (each averaged over
    /// timesteps), built from labels at the given tIoU threshold.
    pub fn proposal_loss_node(
        &self,
        g: &mut Graph,
        scored: &ScoredVideo,
        video: &FeatureSequence,
        weights: &AnchorClassWeights,
        theta_label: f64,
    ) -> Result<NodeId> {
        let gt: Vec<Interval> = video.events.iter().map(|e| e.interval).collect();
        let mut total: Option<NodeId> = None;
        for (dir, nodes) in [
            (Direction::Forward, &scored.fwd),
            (Direction::Backward, &scored.bwd),
        ] {
            let Some(nodes) = nodes else { continue };
            let labels = label_anchors(video.t_len(), &self.anchors, &gt, dir, theta_label)?;
            let loss = proposal_loss(g, nodes, &labels, weights)?;
            total = Some(match total {
                Some(acc) => g.add(acc, loss)?,
                None => loss,
            });
        }
        total.ok_or_else(|| CoreError::Contract("no direction produced scores".into()))
    }

    /// `lambda * proposal_loss + mean(caption losses)` for one video.
    /// `caption_refs` pairs anchor intervals with reference token ids; when
    /// empty (or when pretraining) only the proposal term is built.
    #[allow(clippy::too_many_arguments)]
    pub fn training_loss(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        video: &FeatureSequence,
        weights: &AnchorClassWeights,
        caption_refs: &[(Interval, Vec<usize>)],
        lambda: f64,
        theta_label: f64,
        include_captions: bool,
    ) -> Result<LossBreakdown> {
        let encoded = self.encode_video(g, params, video)?;
        let scored = self.score_video(g, params, &encoded)?;
        let p_loss = self.proposal_loss_node(g, &scored, video, weights, theta_label)?;
        let proposal_value = g.value(p_loss).scalar_value();

        if !include_captions {
            return Ok(LossBreakdown {
                loss: p_loss,
                proposal: proposal_value,
                caption: 0.0,
                caption_count: 0,
            });
        }

        let mut caption_sum: Option<NodeId> = None;
        for (interval, reference) in caption_refs {
            let ctx = self.proposal_context(g, &encoded, *interval)?;
            let loss = caption_loss(g, params, self.config.fusion, &ctx, reference)?;
            caption_sum = Some(match caption_sum {
                Some(acc) => g.add(acc, loss)?,
                None => loss,
            });
        }
        let scaled_p = g.scale(p_loss, lambda);
        let (loss, caption_value) = match caption_sum {
            Some(sum) => {
                let mean = g.scale(sum, 1.0 / caption_refs.len() as f64);
                (g.add(scaled_p, mean)?, g.value(mean).scalar_value())
            }
            None => (scaled_p, 0.0),
        };
        Ok(LossBreakdown {
            loss,
            proposal: proposal_value,
            caption: caption_value,
            caption_count: caption_refs.len(),
        })
    }

    /// Ranked proposals for one video (fused score above `tau`, descending).
    pub fn propose(&self, video: &FeatureSequence, tau: f64) -> Result<Vec<ProposalCandidate>> {
        let mut g = Graph::new();
        let encoded = self.encode_video(&mut g, &self.params, video)?;
        let scored = self.score_video(&mut g, &self.params, &encoded)?;
        let candidates = self.candidates(&g, &scored, encoded.t_len)?;
        Ok(select_proposals(&candidates, tau))
    }

    /// The full per-video pipeline: propose, greedily decode each kept
    /// proposal, and joint-rank by `gamma * fused score + caption
    /// confidence`, returning the top-k events.
    pub fn caption_video(
        &self,
        video: &FeatureSequence,
        tau: f64,
        gamma: f64,
        top_k: usize,
    ) -> Result<Vec<CaptionedEvent>> {
        let mut g = Graph::new();
        let encoded = self.encode_video(&mut g, &self.params, video)?;
        let scored = self.score_video(&mut g, &self.params, &encoded)?;
        let candidates = self.candidates(&g, &scored, encoded.t_len)?;
        let kept = select_proposals(&candidates, tau);

        let mut events = Vec::with_capacity(kept.len());
        for proposal in kept {
            let ctx = self.proposal_context(&mut g, &encoded, proposal.interval)?;
            let (tokens, probs) = greedy_decode(
                &mut g,
                &self.params,
                self.config.fusion,
                &ctx,
                self.config.max_caption_len,
            )?;
            let confidence = caption_confidence(&probs);
            events.push(CaptionedEvent {
                proposal,
                tokens,
                token_probs: probs,
                caption_confidence: confidence,
                joint_score: 0.0,
            });
        }
        Ok(joint_rank(&events, gamma, top_k))
    }
}

/// What one training step observed.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub loss: NodeId,
    pub proposal: f64,
    /// Mean per-proposal caption NLL (0 when no proposal qualified).
    pub caption: f64,
    pub caption_count: usize,
}

/// All parameter names and shapes for a configuration.
pub fn param_shapes(
    config: &ModelConfig,
    anchor_count: usize,
    vocab_size: usize,
) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for &dir in config.direction.directions() {
        out.extend(encoder_param_shapes(
            dir,
            config.direction.encoder_layers(),
            config.feature_dim,
            config.encoder_hidden,
            anchor_count,
        ));
    }
    out.extend(decoder_param_shapes(
        config.fusion,
        config.feature_dim,
        config.encoder_hidden,
        vocab_size,
        config.embed_dim,
        config.decoder_hidden,
        config.attn_dim,
        config.gate_dim,
    ));
    out
}

/// Anchor intervals worth captioning during training: every in-bounds
/// anchor interval whose best ground-truth tIoU strictly exceeds `theta`,
/// paired with that ground truth's index.
pub fn caption_training_items(
    t_len: usize,
    anchors: &AnchorSet,
    events: &[Interval],
    theta: f64,
) -> Vec<(Interval, usize)> {
    let mut out = Vec::new();
    for &len in anchors.lengths() {
        for end in len..=t_len.min(usize::MAX) {
            if end > t_len {
                break;
            }
            let Ok(interval) = Interval::new(end - len + 1, end) else { continue };
            let mut best: Option<(f64, usize)> = None;
            for (i, &gt) in events.iter().enumerate() {
                let overlap = tiou(interval, gt);
                if best.map_or(true, |(b, _)| overlap > b) {
                    best = Some((overlap, i));
                }
            }
            if let Some((overlap, idx)) = best {
                if overlap > theta {
                    out.push((interval, idx));
                }
            }
        }
    }
    out
}

/// Per-video labels for every configured direction, for weight counting.
pub fn direction_labels(
    model_direction: DirectionMode,
    anchors: &AnchorSet,
    video: &FeatureSequence,
    theta_label: f64,
) -> Result<Vec<crate::geometry::LabelTensor>> {
    let gt: Vec<Interval> = video.events.iter().map(|e| e.interval).collect();
    model_direction
        .directions()
        .iter()
        .map(|&dir| label_anchors(video.t_len(), anchors, &gt, dir, theta_label))
        .collect()
}

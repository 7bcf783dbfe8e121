//! Two-phase training: proposal-module pretraining, then joint optimization
//! of the weighted proposal loss and the caption loss with Adam at batch
//! size 1. Deterministic for a given dataset, configuration, and seed.

use anyhow::{bail, Result};
use bisst_core::decoder::Vocabulary;
use bisst_core::encoder::{anchor_class_weights, AnchorClassWeights};
use bisst_core::geometry::cluster_anchors;
use bisst_core::graph::Graph;
use bisst_core::model::{caption_training_items, direction_labels};
use bisst_core::optim::{adam_step, clip_global_norm, AdamConfig, AdamState};
use bisst_core::{FeatureSequence, Interval, Model, ModelConfig};
use serde::{Deserialize, Serialize};

/// Training hyperparameters (everything that is not a model dimension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Balance of the proposal term in the joint loss.
    pub lambda: f64,
    /// Fused-score threshold for selecting proposals at inference.
    pub tau: f64,
    /// Joint-ranking weight on the proposal score.
    pub gamma: f64,
    /// tIoU threshold for positive anchor labels.
    pub theta_label: f64,
    /// tIoU threshold for feeding proposals to the caption loss.
    pub theta_caption: f64,
    pub learning_rate: f64,
    pub pretrain_epochs: usize,
    pub epochs: usize,
    /// Requested anchor count (reduced when the data has fewer distinct
    /// event lengths).
    pub anchor_count: usize,
    /// Global-norm gradient clip applied before every Adam step.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.5,
            tau: 0.25,
            gamma: 10.0,
            theta_label: 0.5,
            theta_caption: 0.8,
            learning_rate: 0.001,
            pretrain_epochs: 5,
            epochs: 30,
            anchor_count: 3,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// `lambda * proposal + caption`.
pub fn total_loss(proposal_loss: f64, caption_loss: f64, lambda: f64) -> f64 {
    lambda * proposal_loss + caption_loss
}

/// Per-epoch averages over the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// "pretrain" or "joint".
    pub phase: &'static str,
    pub proposal_loss: f64,
    /// Mean caption loss over videos that had caption-eligible proposals.
    pub caption_loss: f64,
    pub total_loss: f64,
    /// Videos that contributed no caption term this epoch.
    pub videos_without_captions: usize,
}

/// Result of a training run.
pub struct TrainOutcome {
    pub model: Model,
    pub stats: Vec<EpochStats>,
    /// True when the data had fewer distinct lengths than the requested
    /// anchor count.
    pub anchor_count_reduced: bool,
}

/// Trains a model from scratch: clusters anchors from ground-truth lengths,
/// builds the vocabulary from training captions, pretrains the proposal
/// module for `pretrain_epochs`, then optimizes the joint loss for the
/// remaining epochs. Only proposals with tIoU above `theta_caption` feed
/// the caption loss.
pub fn train(
    dataset: &[FeatureSequence],
    mut model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        bail!("training dataset is empty");
    }
    if config.epochs < config.pretrain_epochs {
        bail!(
            "epochs ({}) must be at least pretrain_epochs ({})",
            config.epochs,
            config.pretrain_epochs
        );
    }
    model_config.feature_dim = dataset[0].feature_dim;

    let lengths: Vec<usize> = dataset.iter().flat_map(|v| v.event_lengths()).collect();
    if lengths.is_empty() {
        bail!("training dataset has no annotated events");
    }
    let anchors = cluster_anchors(&lengths, config.anchor_count)?;
    let anchor_count_reduced = anchors.len() < config.anchor_count;

    let captions: Vec<String> = dataset
        .iter()
        .flat_map(|v| v.events.iter().map(|e| e.caption.join(" ")))
        .collect();
    let vocab = Vocabulary::build(captions.iter().map(String::as_str));

    let mut model = Model::new(model_config, anchors, vocab, config.seed)?;
    let weights = dataset_class_weights(&model, dataset, config.theta_label)?;

    // Caption-eligible anchor intervals and their reference token ids are
    // geometry only; compute them once.
    let caption_refs: Vec<Vec<(Interval, Vec<usize>)>> = dataset
        .iter()
        .map(|video| {
            let gt: Vec<Interval> = video.events.iter().map(|e| e.interval).collect();
            caption_training_items(video.t_len(), &model.anchors, &gt, config.theta_caption)
                .into_iter()
                .map(|(interval, idx)| {
                    (interval, model.vocab.encode(&video.events[idx].caption.join(" ")))
                })
                .collect()
        })
        .collect();

    let adam_config = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new();
    let mut stats = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let pretraining = epoch < config.pretrain_epochs;
        let mut proposal_sum = 0.0;
        let mut caption_sum = 0.0;
        let mut caption_videos = 0usize;
        let mut skipped = 0usize;
        for (video, refs) in dataset.iter().zip(&caption_refs) {
            let mut graph = Graph::new();
            let breakdown = model.training_loss(
                &mut graph,
                &model.params,
                video,
                &weights,
                refs,
                config.lambda,
                config.theta_label,
                !pretraining,
            )?;
            let mut grads = graph.backprop(breakdown.loss)?;
            clip_global_norm(&mut grads, config.clip_norm);
            adam_step(&mut model.params, &grads, &mut adam, &adam_config)?;

            proposal_sum += breakdown.proposal;
            if breakdown.caption_count > 0 {
                caption_sum += breakdown.caption;
                caption_videos += 1;
            } else if !pretraining {
                skipped += 1;
            }
        }
        let n = dataset.len() as f64;
        let proposal_loss = proposal_sum / n;
        let caption_loss = if caption_videos > 0 {
            caption_sum / caption_videos as f64
        } else {
            0.0
        };
        stats.push(EpochStats {
            epoch,
            phase: if pretraining { "pretrain" } else { "joint" },
            proposal_loss,
            caption_loss,
            total_loss: if pretraining {
                proposal_loss
            } else {
                total_loss(proposal_loss, caption_loss, config.lambda)
            },
            videos_without_captions: skipped,
        });
    }

    Ok(TrainOutcome { model, stats, anchor_count_reduced })
}

/// Positive/negative counts pooled over the training set (per the model's
/// configured directions).
pub fn dataset_class_weights(
    model: &Model,
    dataset: &[FeatureSequence],
    theta_label: f64,
) -> Result<AnchorClassWeights> {
    let mut labels = Vec::new();
    for video in dataset {
        labels.extend(direction_labels(
            model.config.direction,
            &model.anchors,
            video,
            theta_label,
        )?);
    }
    Ok(anchor_class_weights(&labels)?)
}

//! Shared gradient-check fixture for the CLI subcommand and the
//! acceptance suite.

use anyhow::Result;
use bisst_core::decoder::FusionVariant;
use bisst_core::encoder::anchor_class_weights;
use bisst_core::gradcheck::finite_diff_check;
use bisst_core::model::{caption_training_items, direction_labels};
use bisst_core::synth::{generate_dataset, GenConfig};
use bisst_core::{DirectionMode, Interval, Model, ModelConfig};

/// Tiny full-pipeline fixture shared with the acceptance suite: trains
/// nothing, just builds the joint loss on one synthetic video and compares
/// backprop against central differences.
pub fn gradcheck_fixture(
    fusion: FusionVariant,
    direction: DirectionMode,
    seed: u64,
) -> Result<f64> {
    let dataset = generate_dataset(&GenConfig {
        num_videos: 1,
        t_range: (8, 8),
        feature_dim: 4,
        event_types: 2,
        events_per_video: (2, 2),
        event_lengths: vec![3, 5],
        noise_sigma: 0.1,
        overlap_prob: 0.5,
        seed: 5,
    })?;
    let video = &dataset[0];
    let anchors = bisst_core::AnchorSet::new(vec![3, 5])?;
    let captions: Vec<String> = video.events.iter().map(|e| e.caption.join(" ")).collect();
    let vocab = bisst_core::Vocabulary::build(captions.iter().map(String::as_str));
    let config = ModelConfig {
        feature_dim: 4,
        encoder_hidden: 8,
        decoder_hidden: 8,
        embed_dim: 6,
        attn_dim: 6,
        gate_dim: 6,
        direction,
        fusion,
        max_caption_len: 10,
    };
    let model = Model::new(config, anchors, vocab, seed)?;
    let labels = direction_labels(direction, &model.anchors, video, 0.5)?;
    let weights = anchor_class_weights(&labels)?;
    let gt: Vec<Interval> = video.events.iter().map(|e| e.interval).collect();
    let refs: Vec<(Interval, Vec<usize>)> =
        caption_training_items(video.t_len(), &model.anchors, &gt, 0.7)
            .into_iter()
            .map(|(iv, idx)| (iv, model.vocab.encode(&video.events[idx].caption.join(" "))))
            .collect();
    // The exact power-of-two scale keeps the objective's fd cancellation
    // noise under the checker's 1e-8 absolute floor; relative errors of
    // meaningful gradient entries are scale-invariant.
    let err = finite_diff_check(
        &model.params,
        |p, g| {
            let breakdown =
                model.training_loss(g, p, video, &weights, &refs, 0.5, 0.5, true)?;
            Ok(g.scale(breakdown.loss, 1.0 / 4096.0))
        },
        1e-5,
    )?;
    Ok(err)
}

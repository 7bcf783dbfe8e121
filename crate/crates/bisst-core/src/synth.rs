//! Deterministic synthetic datasets: feature sequences with planted events.
//!
//! Each event type owns an orthogonal unit signature (a one-hot feature
//! direction). Timesteps inside an event emit that signature plus Gaussian
//! noise, background timesteps emit noise alone, and every event carries a
//! templated caption. The same configuration always produces a byte-identical
//! dataset; each video derives its own RNG stream, so generation could be
//! parallelized per video without changing the output.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};
use crate::geometry::Interval;

/// One annotated event: where it happens and its caption tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct EventAnnotation {
    pub interval: Interval,
    pub caption: Vec<String>,
}

/// A video as `T` timesteps of `D`-dimensional features plus its events.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub feature_dim: usize,
    /// `T x D` row-major.
    pub features: Vec<f64>,
    pub events: Vec<EventAnnotation>,
}

impl FeatureSequence {
    pub fn t_len(&self) -> usize {
        self.features.len() / self.feature_dim
    }

    /// Feature vector at a 1-indexed timestep.
    pub fn feature_row(&self, step: usize) -> &[f64] {
        let d = self.feature_dim;
        &self.features[(step - 1) * d..step * d]
    }

    /// Lengths of all annotated events.
    pub fn event_lengths(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.interval.len()).collect()
    }
}

/// Generator configuration. Identical configs yield identical datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub num_videos: usize,
    /// Inclusive range of timestep counts.
    pub t_range: (usize, usize),
    pub feature_dim: usize,
    pub event_types: usize,
    /// Inclusive range of events per video.
    pub events_per_video: (usize, usize),
    /// Event lengths are drawn uniformly from this set.
    pub event_lengths: Vec<usize>,
    pub noise_sigma: f64,
    /// Probability that a placement overlapping an existing event is
    /// accepted rather than retried.
    pub overlap_prob: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            num_videos: 200,
            t_range: (24, 40),
            feature_dim: 16,
            event_types: 3,
            events_per_video: (2, 4),
            event_lengths: vec![4, 8, 12],
            noise_sigma: 0.1,
            overlap_prob: 0.2,
            seed: 0,
        }
    }
}

fn video_rng(seed: u64, video: usize) -> ChaCha8Rng {
    // splitmix-style mix keeps per-video streams independent of each other.
    let mixed = seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(video as u64 + 1);
    ChaCha8Rng::seed_from_u64(mixed)
}

const SLOT_WORDS: [&str; 3] = ["video", "clip", "scene"];

/// Renders the caption template for an event type; the trailing synonym slot
/// is filled from the supplied RNG.
pub fn render_caption(event_type: usize, slot_rng: &mut ChaCha8Rng) -> Vec<String> {
    let slot = SLOT_WORDS[slot_rng.random_range(0..SLOT_WORDS.len())];
    vec![
        "the".to_string(),
        "person".to_string(),
        "does".to_string(),
        "action".to_string(),
        event_type.to_string(),
        "in".to_string(),
        "the".to_string(),
        slot.to_string(),
    ]
}

/// Every token any template can produce, for vocabulary-closure checks.
pub fn template_tokens(event_types: usize) -> Vec<String> {
    let mut out: Vec<String> = ["the", "person", "does", "action", "in"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    out.extend((0..event_types).map(|k| k.to_string()));
    out.extend(SLOT_WORDS.iter().map(|s| s.to_string()));
    out.sort();
    out.dedup();
    out
}

const PLACEMENT_ATTEMPTS: usize = 500;

/// Generates the configured number of videos. Placement retries until the
/// requested events fit (subject to `overlap_prob`); a video whose events
/// cannot be placed is a generation error.
pub fn generate_dataset(config: &GenConfig) -> Result<Vec<FeatureSequence>> {
    if config.event_types == 0 || config.feature_dim < config.event_types {
        return Err(CoreError::Generation(alloc::format!(
            "feature_dim {} must cover {} event types",
            config.feature_dim,
            config.event_types
        )));
    }
    if config.t_range.0 > config.t_range.1 || config.t_range.0 == 0 {
        return Err(CoreError::Generation("bad timestep range".into()));
    }
    if config.events_per_video.0 > config.events_per_video.1 {
        return Err(CoreError::Generation("bad events-per-video range".into()));
    }
    if config.event_lengths.is_empty()
        || config.event_lengths.iter().any(|&l| l == 0 || l > config.t_range.0)
    {
        return Err(CoreError::Generation(alloc::format!(
            "event lengths {:?} must be positive and fit the shortest video ({})",
            config.event_lengths,
            config.t_range.0
        )));
    }
    if config.noise_sigma < 0.0 {
        return Err(CoreError::Generation("noise sigma must be non-negative".into()));
    }

    let mut videos = Vec::with_capacity(config.num_videos);
    for v in 0..config.num_videos {
        let mut rng = video_rng(config.seed, v);
        let t_len = rng.random_range(config.t_range.0..=config.t_range.1);
        let want = rng.random_range(config.events_per_video.0..=config.events_per_video.1);

        let mut placed: Vec<(Interval, usize)> = Vec::new();
        for _ in 0..want {
            let mut attempts = 0;
            loop {
                attempts += 1;
                if attempts > PLACEMENT_ATTEMPTS {
                    return Err(CoreError::Generation(alloc::format!(
                        "could not place {want} events in video {v} (T = {t_len})"
                    )));
                }
                let event_type = rng.random_range(0..config.event_types);
                let len = config.event_lengths[rng.random_range(0..config.event_lengths.len())];
                if len > t_len {
                    continue;
                }
                let start = rng.random_range(1..=t_len - len + 1);
                let interval = Interval::new(start, start + len - 1)?;
                if placed.iter().any(|(existing, _)| *existing == interval) {
                    continue;
                }
                let overlaps = placed
                    .iter()
                    .any(|(existing, _)| crate::geometry::tiou(*existing, interval) > 0.0);
                if overlaps && !rng.random_bool(config.overlap_prob) {
                    continue;
                }
                placed.push((interval, event_type));
                break;
            }
        }
        placed.sort_by_key(|(interval, _)| (interval.start(), interval.end()));

        let d = config.feature_dim;
        let mut features = vec![0.0; t_len * d];
        if config.noise_sigma > 0.0 {
            for value in features.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *value += config.noise_sigma * z;
            }
        }
        for (interval, event_type) in &placed {
            for step in interval.start()..=interval.end() {
                features[(step - 1) * d + event_type] += 1.0;
            }
        }

        let events = placed
            .iter()
            .map(|(interval, event_type)| EventAnnotation {
                interval: *interval,
                caption: render_caption(*event_type, &mut rng),
            })
            .collect();

        videos.push(FeatureSequence {
            video_id: alloc::format!("v{v:04}"),
            feature_dim: d,
            features,
            events,
        });
    }
    Ok(videos)
}

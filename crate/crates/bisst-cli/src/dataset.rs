//! Dataset file format: one JSON object per line, UTF-8.
//!
//! Each record is self-contained:
//!
//! ```json
//! {"id":"v0001","T":3,"D":2,"features":[[0.1,0.2],[0.3,0.4],[0.5,0.6]],
//!  "events":[{"start":1,"end":2,"caption":"the person does action 0 in the video"}]}
//! ```
//!
//! `start`/`end` are 1-indexed inclusive timesteps. Feature values survive a
//! write/read round trip bit-exactly (shortest-roundtrip float encoding).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use bisst_core::{EventAnnotation, FeatureSequence, Interval};
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
struct VideoRecord {
    id: String,
    #[serde(rename = "T")]
    t_len: usize,
    #[serde(rename = "D")]
    feature_dim: usize,
    features: Vec<Vec<f64>>,
    events: Vec<EventRecord>,
}

#[derive(Serialize, Deserialize)]
struct EventRecord {
    start: usize,
    end: usize,
    caption: String,
}

pub fn write_dataset(path: &Path, videos: &[FeatureSequence]) -> Result<()> {
    let file = File::create(path)
        .with_context(|| format!("cannot create dataset file {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for video in videos {
        let record = VideoRecord {
            id: video.video_id.clone(),
            t_len: video.t_len(),
            feature_dim: video.feature_dim,
            features: (1..=video.t_len())
                .map(|t| video.feature_row(t).to_vec())
                .collect(),
            events: video
                .events
                .iter()
                .map(|e| EventRecord {
                    start: e.interval.start(),
                    end: e.interval.end(),
                    caption: e.caption.join(" "),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<FeatureSequence>> {
    let file = File::open(path)
        .with_context(|| format!("cannot open dataset file {}", path.display()))?;
    let reader = BufReader::new(file);
    let mut videos = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: VideoRecord = serde_json::from_str(&line)
            .with_context(|| format!("malformed dataset record on line {}", lineno + 1))?;
        videos.push(validate(record, lineno + 1)?);
    }
    if videos.is_empty() {
        bail!("dataset {} contains no records", path.display());
    }
    Ok(videos)
}

fn validate(record: VideoRecord, lineno: usize) -> Result<FeatureSequence> {
    if record.t_len == 0 || record.feature_dim == 0 {
        bail!("line {lineno}: T and D must be positive");
    }
    if record.features.len() != record.t_len {
        bail!(
            "line {lineno}: {} feature rows for T = {}",
            record.features.len(),
            record.t_len
        );
    }
    let mut features = Vec::with_capacity(record.t_len * record.feature_dim);
    for (t, row) in record.features.iter().enumerate() {
        if row.len() != record.feature_dim {
            bail!(
                "line {lineno}: feature row {} has {} entries, D = {}",
                t + 1,
                row.len(),
                record.feature_dim
            );
        }
        features.extend_from_slice(row);
    }
    let mut events = Vec::with_capacity(record.events.len());
    for e in &record.events {
        let interval = Interval::new(e.start, e.end)
            .map_err(|err| anyhow::anyhow!("line {lineno}: {err}"))?;
        if interval.end() > record.t_len {
            bail!(
                "line {lineno}: event [{}, {}] exceeds T = {}",
                e.start,
                e.end,
                record.t_len
            );
        }
        let caption: Vec<String> = e.caption.split_whitespace().map(str::to_string).collect();
        if caption.is_empty() {
            bail!("line {lineno}: event [{}, {}] has an empty caption", e.start, e.end);
        }
        events.push(EventAnnotation { interval, caption });
    }
    Ok(FeatureSequence {
        video_id: record.id,
        feature_dim: record.feature_dim,
        features,
        events,
    })
}

//! Prediction files (ranked proposals, captioned events) and evaluation
//! report rendering as plain-text tables plus CSV.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use bisst_core::decoder::Vocabulary;
use bisst_core::metrics::{CaptionReport, DetectionReport};
use bisst_core::{CaptionedEvent, Interval, ProposalCandidate};
use serde::{Deserialize, Serialize};

// ── Proposal predictions ─────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct ProposalRow {
    video_id: String,
    start: usize,
    end: usize,
    fwd: f64,
    bwd: f64,
    fused: f64,
}

/// One ranked proposal prediction, as read back from a prediction file.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedProposal {
    pub interval: Interval,
    pub forward_score: f64,
    pub backward_score: f64,
    pub fused_score: f64,
}

pub fn write_proposals_csv(
    path: &Path,
    per_video: &[(String, Vec<ProposalCandidate>)],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    for (video_id, proposals) in per_video {
        for p in proposals {
            writer.serialize(ProposalRow {
                video_id: video_id.clone(),
                start: p.interval.start(),
                end: p.interval.end(),
                fwd: p.forward_score,
                bwd: p.backward_score,
                fused: p.fused_score,
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reads proposals grouped per video, preserving file order within each
/// video (the ranked order the producer wrote).
pub fn read_proposals_csv(path: &Path) -> Result<BTreeMap<String, Vec<PredictedProposal>>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut out: BTreeMap<String, Vec<PredictedProposal>> = BTreeMap::new();
    for (i, row) in reader.deserialize::<ProposalRow>().enumerate() {
        let row = row.with_context(|| format!("malformed proposal row {}", i + 2))?;
        let interval = Interval::new(row.start, row.end)
            .map_err(|e| anyhow::anyhow!("row {}: {e}", i + 2))?;
        out.entry(row.video_id).or_default().push(PredictedProposal {
            interval,
            forward_score: row.fwd,
            backward_score: row.bwd,
            fused_score: row.fused,
        });
    }
    if out.is_empty() {
        bail!("{} contains no proposal rows", path.display());
    }
    Ok(out)
}

// ── Captioned events ─────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct CaptionRow {
    video_id: String,
    start: usize,
    end: usize,
    fused: f64,
    caption_confidence: f64,
    joint_score: f64,
    tokens: String,
}

/// A captioned event read back from a prediction file.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedCaption {
    pub interval: Interval,
    pub fused_score: f64,
    pub caption_confidence: f64,
    pub joint_score: f64,
    pub tokens: Vec<String>,
}

pub fn write_captions_csv(
    path: &Path,
    per_video: &[(String, Vec<CaptionedEvent>)],
    vocab: &Vocabulary,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    for (video_id, events) in per_video {
        for e in events {
            writer.serialize(CaptionRow {
                video_id: video_id.clone(),
                start: e.proposal.interval.start(),
                end: e.proposal.interval.end(),
                fused: e.proposal.fused_score,
                caption_confidence: e.caption_confidence,
                joint_score: e.joint_score,
                tokens: vocab.decode(&e.tokens),
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_captions_csv(path: &Path) -> Result<BTreeMap<String, Vec<PredictedCaption>>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut out: BTreeMap<String, Vec<PredictedCaption>> = BTreeMap::new();
    for (i, row) in reader.deserialize::<CaptionRow>().enumerate() {
        let row = row.with_context(|| format!("malformed caption row {}", i + 2))?;
        let interval = Interval::new(row.start, row.end)
            .map_err(|e| anyhow::anyhow!("row {}: {e}", i + 2))?;
        out.entry(row.video_id).or_default().push(PredictedCaption {
            interval,
            fused_score: row.fused,
            caption_confidence: row.caption_confidence,
            joint_score: row.joint_score,
            tokens: row.tokens.split_whitespace().map(str::to_string).collect(),
        });
    }
    if out.is_empty() {
        bail!("{} contains no caption rows", path.display());
    }
    Ok(out)
}

// ── Report rendering ─────────────────────────────────────────────────

pub fn detection_table(report: &DetectionReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "detection @ k = {}\n{:>9} {:>10} {:>10} {:>10}\n",
        report.k, "tIoU", "precision", "recall", "F1"
    ));
    for (theta, (p, r, f1)) in report.thresholds.iter().zip(&report.per_threshold) {
        out.push_str(&format!("{theta:>9.2} {p:>10.3} {r:>10.3} {f1:>10.3}\n"));
    }
    out.push_str(&format!(
        "{:>9} {:>10.3} {:>10.3} {:>10.3}\n",
        "avg", report.avg_precision, report.avg_recall, report.avg_f1
    ));
    out
}

pub fn detection_csv(report: &DetectionReport) -> String {
    let mut out = String::from("threshold,precision,recall,f1\n");
    for (theta, (p, r, f1)) in report.thresholds.iter().zip(&report.per_threshold) {
        out.push_str(&format!("{theta},{p},{r},{f1}\n"));
    }
    out.push_str(&format!(
        "avg,{},{},{}\n",
        report.avg_precision, report.avg_recall, report.avg_f1
    ));
    out
}

pub fn caption_table(report: &CaptionReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "dense captioning @ k = {}\n{:>9} {:>8} {:>8} {:>8} {:>8}\n",
        report.k, "tIoU", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4"
    ));
    for (theta, row) in report.thresholds.iter().zip(&report.per_threshold) {
        out.push_str(&format!(
            "{theta:>9.2} {:>8.3} {:>8.3} {:>8.3} {:>8.3}\n",
            row[0], row[1], row[2], row[3]
        ));
    }
    out.push_str(&format!(
        "{:>9} {:>8.3} {:>8.3} {:>8.3} {:>8.3}\n",
        "avg", report.avg[0], report.avg[1], report.avg[2], report.avg[3]
    ));
    out
}

pub fn caption_csv(report: &CaptionReport) -> String {
    let mut out = String::from("threshold,bleu1,bleu2,bleu3,bleu4\n");
    for (theta, row) in report.thresholds.iter().zip(&report.per_threshold) {
        out.push_str(&format!("{theta},{},{},{},{}\n", row[0], row[1], row[2], row[3]));
    }
    out.push_str(&format!(
        "avg,{},{},{},{}\n",
        report.avg[0], report.avg[1], report.avg[2], report.avg[3]
    ));
    out
}

pub fn recall_table(rows: &[(usize, f64)]) -> String {
    let mut out = String::from("recall averaged over tIoU 0.5..=1.0\n");
    for (k, recall) in rows {
        out.push_str(&format!("@{k:<6} {recall:.3}\n"));
    }
    out
}

pub fn recall_csv(rows: &[(usize, f64)]) -> String {
    let mut out = String::from("k,recall\n");
    for (k, recall) in rows {
        out.push_str(&format!("{k},{recall}\n"));
    }
    out
}

/// Loss-curve CSV written next to the checkpoint by `train`.
pub fn losses_csv(stats: &[crate::train::EpochStats]) -> String {
    let mut out =
        String::from("epoch,phase,proposal_loss,caption_loss,total_loss,videos_without_captions\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.epoch, s.phase, s.proposal_loss, s.caption_loss, s.total_loss,
            s.videos_without_captions
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use bisst_core::metrics::precision_recall_f1_at_k;

    #[test]
    fn proposal_csv_round_trips_scores_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("props.csv");
        let cand = ProposalCandidate {
            interval: Interval::new(3, 7).unwrap(),
            anchor_index: 0,
            forward_score: 0.123456789123456789,
            backward_score: 0.987654321,
            fused_score: 0.123456789123456789 * 0.987654321,
        };
        write_proposals_csv(&path, &[("v0".into(), vec![cand.clone()])]).unwrap();
        let loaded = read_proposals_csv(&path).unwrap();
        let p = &loaded["v0"][0];
        assert_eq!(p.interval, cand.interval);
        assert_eq!(p.fused_score.to_bits(), cand.fused_score.to_bits());
        assert_eq!(p.forward_score.to_bits(), cand.forward_score.to_bits());
    }

    #[test]
    fn caption_csv_round_trips_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("caps.csv");
        let vocab = Vocabulary::build(["the person does action 0 in the video"]);
        let tokens = vocab.encode("the person does action 0 in the video");
        let mut with_eos = tokens.clone();
        with_eos.push(bisst_core::decoder::EOS);
        let event = CaptionedEvent {
            proposal: ProposalCandidate {
                interval: Interval::new(2, 9).unwrap(),
                anchor_index: 1,
                forward_score: 0.5,
                backward_score: 0.25,
                fused_score: 0.125,
            },
            tokens: with_eos,
            token_probs: vec![0.5; tokens.len() + 1],
            caption_confidence: -1.5,
            joint_score: -0.25,
        };
        write_captions_csv(&path, &[("v1".into(), vec![event])], &vocab).unwrap();
        let loaded = read_captions_csv(&path).unwrap();
        let c = &loaded["v1"][0];
        assert_eq!(c.tokens.join(" "), "the person does action 0 in the video");
        assert_eq!(c.caption_confidence, -1.5);
    }

    #[test]
    fn report_renderers_include_avg_row() {
        let gts = vec![vec![Interval::new(1, 5).unwrap()]];
        let report = precision_recall_f1_at_k(&gts, &gts, 10, &[0.3, 0.5]).unwrap();
        let table = detection_table(&report);
        assert!(table.contains("avg"));
        let csv = detection_csv(&report);
        assert_eq!(csv.lines().count(), 1 + 2 + 1);
        assert!(csv.lines().last().unwrap().starts_with("avg,"));
    }
}

//! Detection and captioning metrics: precision/recall/F1 at k averaged over
//! tIoU thresholds, recall@k averaged over a threshold ladder, BLEU-n, and
//! the joint dense-captioning protocol.
//!
//! Matching is many-to-one (a prediction matches any overlapping ground
//! truth) and "overlapping" always means tIoU strictly greater than the
//! threshold. Counts are pooled across videos before dividing.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::geometry::{tiou, Interval};

/// The detection threshold ladder used throughout the captioning protocol.
pub const DETECTION_THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

/// Precision/recall/F1 per threshold plus their threshold averages.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub k: usize,
    pub thresholds: Vec<f64>,
    /// `(precision, recall, f1)` per threshold.
    pub per_threshold: Vec<(f64, f64, f64)>,
    pub avg_precision: f64,
    pub avg_recall: f64,
    /// F1 of the averaged precision and recall.
    pub avg_f1: f64,
}

/// `2PR / (P + R)`, defined as 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Detection quality of the top-k predictions per video. Recall is the
/// fraction of ground truths matched by at least one top-k prediction;
/// precision the fraction of top-k predictions matching at least one ground
/// truth. Videos without ground truths still contribute their predictions
/// to the precision denominator.
pub fn precision_recall_f1_at_k(
    predictions: &[Vec<Interval>],
    ground_truths: &[Vec<Interval>],
    k: usize,
    thresholds: &[f64],
) -> Result<DetectionReport> {
    if predictions.len() != ground_truths.len() {
        return Err(CoreError::Contract(alloc::format!(
            "{} prediction lists vs {} ground-truth lists",
            predictions.len(),
            ground_truths.len()
        )));
    }
    if k == 0 || thresholds.is_empty() {
        return Err(CoreError::Contract("k >= 1 and thresholds required".into()));
    }
    let mut per_threshold = Vec::with_capacity(thresholds.len());
    for &theta in thresholds {
        let mut pred_total = 0usize;
        let mut pred_matched = 0usize;
        let mut gt_total = 0usize;
        let mut gt_matched = 0usize;
        for (preds, gts) in predictions.iter().zip(ground_truths) {
            let top = &preds[..preds.len().min(k)];
            pred_total += top.len();
            pred_matched += top
                .iter()
                .filter(|&&p| gts.iter().any(|&g| tiou(p, g) > theta))
                .count();
            gt_total += gts.len();
            gt_matched += gts
                .iter()
                .filter(|&&g| top.iter().any(|&p| tiou(p, g) > theta))
                .count();
        }
        let precision = if pred_total > 0 {
            pred_matched as f64 / pred_total as f64
        } else {
            0.0
        };
        let recall = if gt_total > 0 {
            gt_matched as f64 / gt_total as f64
        } else {
            0.0
        };
        per_threshold.push((precision, recall, f1_score(precision, recall)));
    }
    let n = thresholds.len() as f64;
    let avg_precision = per_threshold.iter().map(|t| t.0).sum::<f64>() / n;
    let avg_recall = per_threshold.iter().map(|t| t.1).sum::<f64>() / n;
    Ok(DetectionReport {
        k,
        thresholds: thresholds.to_vec(),
        per_threshold,
        avg_precision,
        avg_recall,
        avg_f1: f1_score(avg_precision, avg_recall),
    })
}

/// The tIoU ladder 0.5, 0.55, ..., 1.0 used by the action-proposal recall
/// protocol.
pub fn recall_threshold_ladder() -> Vec<f64> {
    (10..=20).map(|i| i as f64 / 20.0).collect()
}

/// Recall of the top-k predictions averaged over the 0.5..=1.0 threshold
/// ladder, for each requested k. Expects suppression (if any) to have been
/// applied upstream.
pub fn recall_at_k_avg_tiou(
    predictions: &[Vec<Interval>],
    ground_truths: &[Vec<Interval>],
    k_list: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if predictions.len() != ground_truths.len() {
        return Err(CoreError::Contract(alloc::format!(
            "{} prediction lists vs {} ground-truth lists",
            predictions.len(),
            ground_truths.len()
        )));
    }
    let ladder = recall_threshold_ladder();
    let mut out = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let mut acc = 0.0;
        for &theta in &ladder {
            let mut gt_total = 0usize;
            let mut gt_matched = 0usize;
            for (preds, gts) in predictions.iter().zip(ground_truths) {
                let top = &preds[..preds.len().min(k)];
                gt_total += gts.len();
                gt_matched += gts
                    .iter()
                    .filter(|&&g| top.iter().any(|&p| tiou(p, g) > theta))
                    .count();
            }
            acc += if gt_total > 0 {
                gt_matched as f64 / gt_total as f64
            } else {
                0.0
            };
        }
        out.push((k, acc / ladder.len() as f64));
    }
    Ok(out)
}

fn ngram_counts<T: Ord>(tokens: &[T], order: usize) -> BTreeMap<&[T], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= order {
        for gram in tokens.windows(order) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Single-reference BLEU-n: the geometric mean of clipped i-gram precisions
/// for i = 1..=n, times the brevity penalty `exp(1 - r/c)` when the
/// candidate is shorter than the reference. No smoothing: any order with
/// zero matches yields 0, as does an empty candidate.
pub fn bleu_n<T: Ord>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    assert!((1..=4).contains(&n), "BLEU order must be 1..=4");
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_precision_sum = 0.0;
    for order in 1..=n {
        let total = candidate.len().saturating_sub(order - 1);
        if total == 0 {
            return 0.0;
        }
        let cand = ngram_counts(candidate, order);
        let reference_counts = ngram_counts(reference, order);
        let clipped: usize = cand
            .iter()
            .map(|(gram, &c)| c.min(reference_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        log_precision_sum += libm::log(clipped as f64 / total as f64) / n as f64;
    }
    let brevity = if candidate.len() < reference.len() {
        libm::exp(1.0 - reference.len() as f64 / candidate.len() as f64)
    } else {
        1.0
    };
    brevity * libm::exp(log_precision_sum)
}

/// BLEU-1..4 per threshold and averaged: the dense-captioning protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionReport {
    pub k: usize,
    pub thresholds: Vec<f64>,
    /// BLEU-1..4 per threshold.
    pub per_threshold: Vec<[f64; 4]>,
    /// BLEU-1..4 averaged over thresholds (the joint dense scores).
    pub avg: [f64; 4],
}

/// Scores top-k captioned predictions against ground truths: at each
/// threshold, a prediction is paired with every ground truth it overlaps
/// (tIoU > threshold) and each pair contributes the BLEU of its caption
/// against that reference; an unmatched prediction contributes a zero.
/// Pair scores are averaged per threshold, then over thresholds.
pub fn dense_caption_score<T: Ord>(
    predictions: &[Vec<(Interval, Vec<T>)>],
    ground_truths: &[Vec<(Interval, Vec<T>)>],
    k: usize,
    thresholds: &[f64],
) -> Result<CaptionReport> {
    if predictions.len() != ground_truths.len() {
        return Err(CoreError::Contract(alloc::format!(
            "{} prediction lists vs {} ground-truth lists",
            predictions.len(),
            ground_truths.len()
        )));
    }
    if k == 0 || thresholds.is_empty() {
        return Err(CoreError::Contract("k >= 1 and thresholds required".into()));
    }
    let mut per_threshold = Vec::with_capacity(thresholds.len());
    for &theta in thresholds {
        let mut sums = [0.0f64; 4];
        let mut count = 0usize;
        for (preds, gts) in predictions.iter().zip(ground_truths) {
            for (interval, caption) in &preds[..preds.len().min(k)] {
                let matches: Vec<&Vec<T>> = gts
                    .iter()
                    .filter(|(g, _)| tiou(*interval, *g) > theta)
                    .map(|(_, reference)| reference)
                    .collect();
                if matches.is_empty() {
                    count += 1; // unmatched prediction scores 0
                } else {
                    for reference in matches {
                        for (order, sum) in sums.iter_mut().enumerate() {
                            *sum += bleu_n(caption, reference, order + 1);
                        }
                        count += 1;
                    }
                }
            }
        }
        if count > 0 {
            for sum in &mut sums {
                *sum /= count as f64;
            }
        }
        per_threshold.push(sums);
    }
    let n = thresholds.len() as f64;
    let mut avg = [0.0f64; 4];
    for row in &per_threshold {
        for (a, v) in avg.iter_mut().zip(row) {
            *a += v / n;
        }
    }
    Ok(CaptionReport { k, thresholds: thresholds.to_vec(), per_threshold, avg })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(s: usize, e: usize) -> Interval {
        Interval::new(s, e).unwrap()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let gts = vec![vec![iv(1, 5), iv(8, 12)], vec![iv(3, 9)]];
        let report =
            precision_recall_f1_at_k(&gts, &gts, 10, &DETECTION_THRESHOLDS).unwrap();
        assert_eq!(report.avg_precision, 1.0);
        assert_eq!(report.avg_recall, 1.0);
        assert_eq!(report.avg_f1, 1.0);
    }

    #[test]
    fn f1_reproduces_published_pairs() {
        // Rounded to three decimals these pairs give the familiar ladder
        // 0.424, 0.566, 0.582, 0.602.
        let cases = [
            (0.272, 0.956, 0.424),
            (0.411, 0.910, 0.566),
            (0.441, 0.856, 0.582),
            (0.459, 0.875, 0.602),
        ];
        for (p, r, expected) in cases {
            let f1 = f1_score(p, r);
            assert!(
                (libm::floor(f1 * 1000.0 + 0.5) / 1000.0 - expected).abs() < 1e-12,
                "f1({p}, {r}) = {f1}"
            );
        }
    }

    #[test]
    fn f1_zero_when_both_zero() {
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn empty_gt_videos_only_affect_precision() {
        let preds = vec![vec![iv(1, 5)], vec![iv(1, 5)]];
        let gts = vec![vec![iv(1, 5)], vec![]];
        let report = precision_recall_f1_at_k(&preds, &gts, 10, &[0.5]).unwrap();
        // 1 of 2 predictions match; the single ground truth is found.
        assert_eq!(report.per_threshold[0].0, 0.5);
        assert_eq!(report.per_threshold[0].1, 1.0);
    }

    #[test]
    fn recall_ladder_counts_strictly_exceeded_thresholds() {
        // A prediction with tIoU exactly 0.6 passes only 0.5 and 0.55.
        let gts = vec![vec![iv(1, 10)]];
        let preds = vec![vec![iv(3, 12)]]; // tIoU = 8/12 -> no; build 0.6 exactly
        // tIoU([1,10],[5,12]) = 6/12 = 0.5 -> passes nothing. Use [2,10] vs [1,10]:
        // 9/10 = 0.9 passes 0.5..0.85. Construct exactly 0.6: |inter|=6,|union|=10
        // with [1,10] and [5,10]: inter 6, union 10.
        let preds_06 = vec![vec![iv(5, 10)]];
        assert!((tiou(iv(5, 10), iv(1, 10)) - 0.6).abs() < 1e-15);
        let r = recall_at_k_avg_tiou(&preds_06, &gts, &[1]).unwrap();
        assert!((r[0].1 - 2.0 / 11.0).abs() < 1e-12);
        let _ = preds;
    }

    #[test]
    fn recall_ladder_empty_predictions_score_zero() {
        let gts = vec![vec![iv(1, 10)]];
        let preds = vec![vec![]];
        let r = recall_at_k_avg_tiou(&preds, &gts, &[1, 10]).unwrap();
        assert_eq!(r, vec![(1, 0.0), (10, 0.0)]);
    }

    #[test]
    fn recall_ladder_perfect_predictions_cap_below_one() {
        // With strict matching the 1.0 rung never fires, so even exact
        // predictions average 10/11.
        let gts = vec![vec![iv(1, 10), iv(12, 20)]];
        let r = recall_at_k_avg_tiou(&gts, &gts, &[2]).unwrap();
        assert!((r[0].1 - 10.0 / 11.0).abs() < 1e-12);
    }

    /// Direct n-gram counting, kept independent of `bleu_n`'s internals.
    fn bleu_oracle(candidate: &[u8], reference: &[u8], n: usize) -> f64 {
        if candidate.is_empty() {
            return 0.0;
        }
        let mut product = 1.0f64;
        for order in 1..=n {
            if candidate.len() < order {
                return 0.0;
            }
            let cand_grams: Vec<&[u8]> = candidate.windows(order).collect();
            let ref_grams: Vec<&[u8]> = reference.windows(order).collect();
            let mut matched = 0usize;
            let mut used = vec![false; ref_grams.len()];
            for gram in &cand_grams {
                if let Some(pos) = ref_grams
                    .iter()
                    .enumerate()
                    .position(|(i, r)| !used[i] && r == gram)
                {
                    used[pos] = true;
                    matched += 1;
                }
            }
            if matched == 0 {
                return 0.0;
            }
            product *= libm::pow(matched as f64 / cand_grams.len() as f64, 1.0 / n as f64);
        }
        let bp = if candidate.len() < reference.len() {
            libm::exp(1.0 - reference.len() as f64 / candidate.len() as f64)
        } else {
            1.0
        };
        bp * product
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let sent = ["a", "b", "c", "d", "e"];
        for n in 1..=4 {
            assert!((bleu_n(&sent, &sent, n) - 1.0).abs() < 1e-12);
        }
        let other = ["x", "y", "z", "w", "v"];
        for n in 1..=4 {
            assert_eq!(bleu_n(&sent, &other, n), 0.0);
        }
        assert_eq!(bleu_n::<&str>(&[], &sent, 1), 0.0);
    }

    #[test]
    fn bleu_clips_repeated_grams() {
        // "a a a" vs "a b c": one clipped unigram match out of three.
        let cand = ["a", "a", "a"];
        let reference = ["a", "b", "c"];
        assert!((bleu_n(&cand, &reference, 1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_brevity_penalty_applies_to_short_candidates() {
        let cand = ["a", "b"];
        let reference = ["a", "b", "c", "d"];
        let expected = libm::exp(1.0 - 2.0) * 1.0;
        assert!((bleu_n(&cand, &reference, 1) - expected).abs() < 1e-12);
    }

    #[test]
    fn bleu_matches_counting_oracle_on_random_strings() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12345);
        for _ in 0..500 {
            let len_c = rng.random_range(0..=10usize);
            let len_r = rng.random_range(1..=10usize);
            let cand: Vec<u8> = (0..len_c).map(|_| rng.random_range(0..4u8)).collect();
            let reference: Vec<u8> = (0..len_r).map(|_| rng.random_range(0..4u8)).collect();
            for n in 1..=4 {
                let got = bleu_n(&cand, &reference, n);
                let want = bleu_oracle(&cand, &reference, n);
                assert!(
                    (got - want).abs() < 1e-12,
                    "cand {cand:?} ref {reference:?} n {n}: {got} vs {want}"
                );
            }
        }
    }

    fn captioned(iv: Interval, tokens: &[&str]) -> (Interval, Vec<&'static str>) {
        let owned: Vec<&'static str> = tokens
            .iter()
            .map(|s| -> &'static str { alloc::boxed::Box::leak(alloc::string::String::from(*s).into_boxed_str()) })
            .collect();
        (iv, owned)
    }

    #[test]
    fn dense_score_perfect_pipeline_is_one() {
        let gts = vec![vec![captioned(iv(1, 8), &["a", "b", "c"])]];
        let report = dense_caption_score(&gts, &gts, 10, &DETECTION_THRESHOLDS).unwrap();
        assert_eq!(report.avg[0], 1.0);
    }

    #[test]
    fn dense_score_no_overlap_is_zero() {
        let preds = vec![vec![captioned(iv(1, 4), &["a", "b"])]];
        let gts = vec![vec![captioned(iv(10, 14), &["a", "b"])]];
        let report = dense_caption_score(&preds, &gts, 10, &DETECTION_THRESHOLDS).unwrap();
        assert_eq!(report.avg, [0.0; 4]);
    }

    #[test]
    fn dense_score_partial_overlap_averages_thresholds() {
        // tIoU 0.6 matches at 0.3 and 0.5 only; identical captions score 1
        // there and 0 elsewhere: (1 + 1 + 0 + 0) / 4 = 0.5.
        let preds = vec![vec![captioned(iv(5, 10), &["a", "b", "c"])]];
        let gts = vec![vec![captioned(iv(1, 10), &["a", "b", "c"])]];
        let report = dense_caption_score(&preds, &gts, 10, &DETECTION_THRESHOLDS).unwrap();
        assert!((report.avg[0] - 0.5).abs() < 1e-12);
    }
}

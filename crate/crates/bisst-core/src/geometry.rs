//! Interval algebra and anchor machinery: temporal IoU, anchor-length
//! clustering, the forward/backward step-to-interval mapping, ground-truth
//! labeling, and non-maximum suppression.
//!
//! Timesteps are the atomic unit: intervals are 1-indexed and inclusive on
//! both ends, and all overlap measures count whole timesteps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

/// A temporal interval `[start, end]` in 1-indexed inclusive timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Interval {
    start: usize,
    end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start == 0 || start > end {
            return Err(CoreError::Contract(alloc::format!(
                "invalid interval [{start}, {end}]"
            )));
        }
        Ok(Interval { start, end })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    /// Number of timesteps covered (inclusive).
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false // start <= end always holds
    }
}

/// Temporal Intersection-over-Union of two intervals, counting inclusive
/// timesteps. Symmetric, in [0, 1], and 1 exactly when the intervals match.
pub fn tiou(a: Interval, b: Interval) -> f64 {
    let lo = a.start.max(b.start);
    let hi = a.end.min(b.end);
    let inter = if hi >= lo { hi - lo + 1 } else { 0 };
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Sweep direction of a sequence encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Consumes `v_1 .. v_T`; at step `t` the anchor of length `l` covers
    /// `[t - l + 1, t]`.
    Forward,
    /// Consumes `v_T .. v_1`; at step `j` the anchor of length `l` covers
    /// `[T - j + 1, T - j + l]`.
    Backward,
}

/// The `K` anchor lengths, ascending and distinct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorSet {
    lengths: Vec<usize>,
}

impl AnchorSet {
    pub fn new(lengths: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(CoreError::Contract("anchor set must be non-empty".into()));
        }
        if lengths[0] == 0 || !lengths.windows(2).all(|w| w[0] < w[1]) {
            return Err(CoreError::Contract(alloc::format!(
                "anchor lengths must be positive, ascending, distinct: {lengths:?}"
            )));
        }
        Ok(AnchorSet { lengths })
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }
}

/// Groups ground-truth event lengths into at most `k` anchors with 1-D
/// k-means (centers initialized at evenly spaced quantiles, iterated to
/// convergence, rounded half-up to integers, deduplicated).
///
/// When there are fewer distinct lengths than `k`, the effective cluster
/// count is reduced to the number of distinct lengths; callers can detect
/// the reduction from the returned set's size.
pub fn cluster_anchors(gt_lengths: &[usize], k: usize) -> Result<AnchorSet> {
    if gt_lengths.is_empty() || k == 0 {
        return Err(CoreError::Contract(
            "clustering requires lengths and k >= 1".into(),
        ));
    }
    let mut sorted: Vec<f64> = gt_lengths.iter().map(|&l| l as f64).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("lengths are finite"));
    let mut distinct = sorted.clone();
    distinct.dedup();
    let k = k.min(distinct.len());

    let n = sorted.len();
    let mut centers: Vec<f64> = (0..k)
        .map(|i| {
            let idx = (((i as f64 + 0.5) / k as f64) * n as f64) as usize;
            sorted[idx.min(n - 1)]
        })
        .collect();

    for _ in 0..200 {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for &x in &sorted {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &center) in centers.iter().enumerate() {
                let d = (x - center).abs();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            sums[best] += x;
            counts[best] += 1;
        }
        let next: Vec<f64> = centers
            .iter()
            .enumerate()
            .map(|(c, &old)| if counts[c] > 0 { sums[c] / counts[c] as f64 } else { old })
            .collect();
        if next == centers {
            break;
        }
        centers = next;
    }

    let mut lengths: Vec<usize> = centers
        .iter()
        .map(|&c| libm::floor(c + 0.5).max(1.0) as usize)
        .collect();
    lengths.sort_unstable();
    lengths.dedup();
    AnchorSet::new(lengths)
}

/// Maps an encoder step to the proposal interval of a given anchor length,
/// or `None` when the interval leaves `[1, T]`. Both directions discard
/// out-of-bounds anchors, so they reach exactly the same interval set.
pub fn anchor_interval(
    direction: Direction,
    step: usize,
    length: usize,
    t_len: usize,
) -> Option<Interval> {
    debug_assert!(step >= 1 && step <= t_len && length >= 1);
    match direction {
        Direction::Forward => {
            if step >= length {
                Some(Interval { start: step - length + 1, end: step })
            } else {
                None
            }
        }
        Direction::Backward => {
            if step >= length {
                Some(Interval { start: t_len - step + 1, end: t_len - step + length })
            } else {
                None
            }
        }
    }
}

/// Binary anchor labels for one direction over one video, `T x K` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTensor {
    t_len: usize,
    anchor_count: usize,
    data: Vec<f64>,
}

impl LabelTensor {
    /// Label at 1-indexed step `t` for anchor index `j`.
    pub fn get(&self, step: usize, anchor: usize) -> f64 {
        self.data[(step - 1) * self.anchor_count + anchor]
    }

    /// Row-major `T x K` labels.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn anchor_count(&self) -> usize {
        self.anchor_count
    }

    /// Number of positive labels per anchor.
    pub fn positives_per_anchor(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.anchor_count];
        for row in self.data.chunks_exact(self.anchor_count) {
            for (c, &y) in counts.iter_mut().zip(row) {
                if y == 1.0 {
                    *c += 1;
                }
            }
        }
        counts
    }
}

/// Marks each (step, anchor) pair whose interval has tIoU strictly above
/// `theta` with some ground-truth event. Out-of-bounds anchors stay 0.
pub fn label_anchors(
    t_len: usize,
    anchors: &AnchorSet,
    gt_events: &[Interval],
    direction: Direction,
    theta: f64,
) -> Result<LabelTensor> {
    if !(0.0..1.0).contains(&theta) || theta == 0.0 {
        return Err(CoreError::Contract(alloc::format!(
            "labeling threshold must lie in (0, 1), got {theta}"
        )));
    }
    let k = anchors.len();
    let mut data = vec![0.0; t_len * k];
    for step in 1..=t_len {
        for (j, &len) in anchors.lengths().iter().enumerate() {
            if let Some(interval) = anchor_interval(direction, step, len, t_len) {
                let best = gt_events
                    .iter()
                    .map(|&gt| tiou(interval, gt))
                    .fold(0.0f64, f64::max);
                if best > theta {
                    data[(step - 1) * k + j] = 1.0;
                }
            }
        }
    }
    Ok(LabelTensor { t_len, anchor_count: k, data })
}

/// Greedy non-maximum suppression. Items are visited by descending score
/// (ties: earlier start, then shorter length) and kept when their tIoU with
/// every already-kept item is at most `threshold`. The output preserves
/// score order.
pub fn nms<T: Clone>(
    items: &[T],
    threshold: f64,
    interval_of: impl Fn(&T) -> Interval,
    score_of: impl Fn(&T) -> f64,
) -> Vec<T> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let (ia, ib) = (interval_of(&items[a]), interval_of(&items[b]));
        score_of(&items[b])
            .partial_cmp(&score_of(&items[a]))
            .expect("scores are finite")
            .then(ia.start().cmp(&ib.start()))
            .then(ia.len().cmp(&ib.len()))
    });
    let mut kept: Vec<T> = Vec::new();
    for idx in order {
        let cand = interval_of(&items[idx]);
        if kept.iter().all(|k| tiou(interval_of(k), cand) <= threshold) {
            kept.push(items[idx].clone());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(s: usize, e: usize) -> Interval {
        Interval::new(s, e).unwrap()
    }

    /// Brute-force tIoU by counting timestep membership.
    fn tiou_oracle(a: Interval, b: Interval) -> f64 {
        let max_t = a.end().max(b.end());
        let mut inter = 0;
        let mut union = 0;
        for t in 1..=max_t {
            let in_a = t >= a.start() && t <= a.end();
            let in_b = t >= b.start() && t <= b.end();
            if in_a && in_b {
                inter += 1;
            }
            if in_a || in_b {
                union += 1;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn tiou_examples() {
        assert_eq!(tiou(iv(3, 7), iv(3, 7)), 1.0);
        assert_eq!(tiou(iv(1, 10), iv(11, 20)), 0.0);
        // 5 overlapping timesteps out of 15 in the union.
        assert!((tiou(iv(1, 10), iv(6, 15)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(tiou(iv(1, 10), iv(6, 15)), tiou_oracle(iv(1, 10), iv(6, 15)));
    }

    #[test]
    fn tiou_matches_membership_count_exhaustively() {
        for s1 in 1..=12 {
            for e1 in s1..=12 {
                for s2 in 1..=12 {
                    for e2 in s2..=12 {
                        let (a, b) = (iv(s1, e1), iv(s2, e2));
                        assert_eq!(tiou(a, b), tiou_oracle(a, b));
                        assert_eq!(tiou(a, b), tiou(b, a));
                    }
                }
            }
        }
    }

    /// Optimal 1-D clustering is contiguous in sorted order: enumerate all
    /// contiguous partitions and minimize within-cluster sum of squares.
    fn cluster_oracle(lengths: &[usize], k: usize) -> Vec<usize> {
        let mut sorted: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let cost = |lo: usize, hi: usize| -> f64 {
            let seg = &sorted[lo..hi];
            let mean = seg.iter().sum::<f64>() / seg.len() as f64;
            seg.iter().map(|x| (x - mean) * (x - mean)).sum()
        };
        fn splits(n: usize, k: usize, start: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if k == 1 {
                let mut full = acc.clone();
                full.push(n);
                out.push(full);
                return;
            }
            for cut in start + 1..=n - (k - 1) {
                acc.push(cut);
                splits(n, k - 1, cut, acc, out);
                acc.pop();
            }
        }
        let mut all = Vec::new();
        splits(n, k, 0, &mut Vec::new(), &mut all);
        let mut best: Option<(f64, Vec<usize>)> = None;
        for cuts in all {
            let mut lo = 0;
            let mut total = 0.0;
            let mut centers = Vec::new();
            for &hi in &cuts {
                total += cost(lo, hi);
                let seg = &sorted[lo..hi];
                centers.push(seg.iter().sum::<f64>() / seg.len() as f64);
                lo = hi;
            }
            if best.as_ref().map_or(true, |(c, _)| total < *c) {
                best = Some((
                    total,
                    centers.iter().map(|&c| libm::floor(c + 0.5).max(1.0) as usize).collect(),
                ));
            }
        }
        let mut rounded = best.unwrap().1;
        rounded.sort_unstable();
        rounded.dedup();
        rounded
    }

    #[test]
    fn clustering_recovers_well_separated_groups() {
        let lengths = [2, 2, 2, 10, 10, 10];
        let anchors = cluster_anchors(&lengths, 2).unwrap();
        assert_eq!(anchors.lengths(), &[2, 10]);
        assert_eq!(anchors.lengths(), cluster_oracle(&lengths, 2).as_slice());
    }

    #[test]
    fn clustering_constant_data_single_cluster() {
        let anchors = cluster_anchors(&[5, 5, 5, 5], 1).unwrap();
        assert_eq!(anchors.lengths(), &[5]);
    }

    #[test]
    fn clustering_rounds_half_up() {
        // Centers converge to 1.5 and 9.5.
        let lengths = [1, 2, 9, 10];
        let anchors = cluster_anchors(&lengths, 2).unwrap();
        assert_eq!(anchors.lengths(), &[2, 10]);
        assert_eq!(anchors.lengths(), cluster_oracle(&lengths, 2).as_slice());
    }

    #[test]
    fn clustering_reduces_k_to_distinct_count() {
        let anchors = cluster_anchors(&[4, 4, 8, 8], 3).unwrap();
        assert_eq!(anchors.lengths(), &[4, 8]);
    }

    #[test]
    fn anchor_interval_examples() {
        assert_eq!(anchor_interval(Direction::Forward, 7, 5, 10), Some(iv(3, 7)));
        // Backward step 3 would cover [8, 12], which exceeds T = 10.
        assert_eq!(anchor_interval(Direction::Backward, 3, 5, 10), None);
        // Backward step 8 mirrors the forward example.
        assert_eq!(anchor_interval(Direction::Backward, 8, 5, 10), Some(iv(3, 7)));
        assert_eq!(anchor_interval(Direction::Forward, 4, 5, 10), None);
    }

    #[test]
    fn forward_and_backward_reach_the_same_interval_set() {
        let anchors = AnchorSet::new(alloc::vec![2, 3, 7]).unwrap();
        for t_len in [3usize, 8, 15] {
            let collect = |dir: Direction| {
                let mut set: Vec<Interval> = (1..=t_len)
                    .flat_map(|s| {
                        anchors
                            .lengths()
                            .iter()
                            .filter_map(move |&l| anchor_interval(dir, s, l, t_len))
                            .collect::<Vec<_>>()
                    })
                    .collect();
                set.sort();
                set
            };
            assert_eq!(collect(Direction::Forward), collect(Direction::Backward));
        }
    }

    /// Brute-force labeling: loop over every step, anchor, and event.
    fn label_oracle(
        t_len: usize,
        anchors: &AnchorSet,
        gt: &[Interval],
        dir: Direction,
        theta: f64,
    ) -> Vec<f64> {
        let mut out = alloc::vec![0.0; t_len * anchors.len()];
        for step in 1..=t_len {
            for (j, &l) in anchors.lengths().iter().enumerate() {
                if let Some(interval) = anchor_interval(dir, step, l, t_len) {
                    for &g in gt {
                        if tiou(interval, g) > theta {
                            out[(step - 1) * anchors.len() + j] = 1.0;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn labeling_single_event_window() {
        let anchors = AnchorSet::new(alloc::vec![5]).unwrap();
        let gt = [iv(3, 7)];
        let labels = label_anchors(10, &anchors, &gt, Direction::Forward, 0.5).unwrap();
        // Steps 6, 7, 8 give tIoU 4/6, 1, 4/6; everything else <= 0.5.
        for step in 1..=10 {
            let expected = if (6..=8).contains(&step) { 1.0 } else { 0.0 };
            assert_eq!(labels.get(step, 0), expected, "step {step}");
        }
        assert_eq!(
            labels.data(),
            label_oracle(10, &anchors, &gt, Direction::Forward, 0.5).as_slice()
        );
    }

    #[test]
    fn labeling_empty_ground_truth_is_all_zero() {
        let anchors = AnchorSet::new(alloc::vec![2, 4]).unwrap();
        let labels = label_anchors(6, &anchors, &[], Direction::Backward, 0.5).unwrap();
        assert!(labels.data().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn labeling_out_of_bounds_anchor_is_all_zero() {
        let anchors = AnchorSet::new(alloc::vec![20]).unwrap();
        let labels =
            label_anchors(10, &anchors, &[iv(1, 10)], Direction::Forward, 0.5).unwrap();
        assert!(labels.data().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn labeling_matches_oracle_on_random_configurations() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let t_len = rng.random_range(2..=30);
            let mut lens: Vec<usize> = (0..rng.random_range(1..=4usize))
                .map(|_| rng.random_range(1..=t_len))
                .collect();
            lens.sort_unstable();
            lens.dedup();
            let anchors = AnchorSet::new(lens).unwrap();
            let gt: Vec<Interval> = (0..rng.random_range(0..=3usize))
                .map(|_| {
                    let s = rng.random_range(1..=t_len);
                    let e = rng.random_range(s..=t_len);
                    iv(s, e)
                })
                .collect();
            for dir in [Direction::Forward, Direction::Backward] {
                let labels = label_anchors(t_len, &anchors, &gt, dir, 0.5).unwrap();
                assert_eq!(labels.data(), label_oracle(t_len, &anchors, &gt, dir, 0.5).as_slice());
            }
        }
    }

    #[test]
    fn nms_suppresses_duplicates_and_keeps_disjoint() {
        let items = alloc::vec![(iv(1, 10), 0.9), (iv(1, 10), 0.8), (iv(20, 25), 0.5)];
        let kept = nms(&items, 0.8, |x| x.0, |x| x.1);
        assert_eq!(kept, alloc::vec![(iv(1, 10), 0.9), (iv(20, 25), 0.5)]);
    }

    #[test]
    fn nms_keeps_pairs_below_threshold() {
        // tIoU([1,10],[3,12]) = 8/12 <= 0.8, so both survive.
        let items = alloc::vec![(iv(1, 10), 0.9), (iv(3, 12), 0.8)];
        let kept = nms(&items, 0.8, |x| x.0, |x| x.1);
        assert_eq!(kept.len(), 2);
        assert!((tiou(iv(1, 10), iv(3, 12)) - 8.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn nms_output_is_pairwise_below_threshold_and_maximal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let items: Vec<(Interval, f64)> = (0..rng.random_range(1..=12usize))
                .map(|_| {
                    let s = rng.random_range(1..=20);
                    let e = rng.random_range(s..=20);
                    (iv(s, e), rng.random_range(0.0..1.0))
                })
                .collect();
            let threshold = 0.5;
            let kept = nms(&items, threshold, |x| x.0, |x| x.1);
            for (i, a) in kept.iter().enumerate() {
                for b in &kept[i + 1..] {
                    assert!(tiou(a.0, b.0) <= threshold);
                }
            }
            // No discarded item could be added back.
            for item in &items {
                if !kept.iter().any(|k| k.0 == item.0 && k.1 == item.1) {
                    let earlier: Vec<_> = kept
                        .iter()
                        .filter(|k| {
                            k.1 > item.1
                                || (k.1 == item.1
                                    && (k.0.start(), k.0.len()) <= (item.0.start(), item.0.len()))
                        })
                        .collect();
                    assert!(
                        earlier.iter().any(|k| tiou(k.0, item.0) > threshold),
                        "discarded item {item:?} conflicts with no earlier-kept item"
                    );
                }
            }
        }
    }
}

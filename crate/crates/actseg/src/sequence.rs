//! Stage 2: run-length segment extraction, transition tabulation, and simple
//! per-video sequence features.

use std::collections::BTreeSet;

use crate::domain::{Segment, SegmentList, Timeline, BACKGROUND, NUM_ACTIONS};
use crate::error::{Error, Result};

/// Default minimum segment duration in frames (one second at 25 fps).
pub const DEFAULT_MIN_FRAMES: usize = 25;

/// Label ids counted as screen interaction.
pub const SCREEN_LABELS: [u8; 2] = [4, 6];

/// Raw run-length encoding: every maximal constant run, background included.
pub fn raw_runs(t: &Timeline) -> SegmentList {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < t.labels.len() {
        let label = t.labels[i];
        let start = i;
        while i < t.labels.len() && t.labels[i] == label {
            i += 1;
        }
        runs.push(Segment::new(label, start, i - start));
    }
    runs
}

/// Rebuilds the frame-level label vector from an unfiltered run list.
pub fn decode_runs(runs: &[Segment]) -> Vec<u8> {
    let len = runs.last().map(Segment::end).unwrap_or(0);
    let mut labels = vec![BACKGROUND; len];
    for r in runs {
        for l in &mut labels[r.start..r.end()] {
            *l = r.label;
        }
    }
    labels
}

/// Clinical action segments: maximal runs with sub-threshold runs dropped
/// first and background runs stripped second. Equal-label segments separated
/// by dropped material are kept apart.
pub fn run_length_encode(t: &Timeline, min_frames: usize) -> SegmentList {
    raw_runs(t)
        .into_iter()
        .filter(|r| r.duration >= min_frames.max(1))
        .filter(|r| r.label != BACKGROUND)
        .collect()
}

/// Pairwise transition counts over the 16 clinical actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    counts: Vec<Vec<u64>>,
    pub total_segments: usize,
}

impl TransitionCounts {
    pub fn count(&self, from: u8, to: u8) -> u64 {
        self.counts[from as usize - 1][to as usize - 1]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Tallies consecutive segment pairs.
pub fn transitions(segs: &[Segment]) -> TransitionCounts {
    let n = NUM_ACTIONS as usize;
    let mut counts = vec![vec![0u64; n]; n];
    for w in segs.windows(2) {
        counts[w[0].label as usize - 1][w[1].label as usize - 1] += 1;
    }
    TransitionCounts {
        counts,
        total_segments: segs.len(),
    }
}

/// Simple sequence-level features.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeatures {
    pub transition_count: usize,
    pub unique_action_count: usize,
    /// Fraction of non-background frames on either screen label.
    pub screen_time_ratio: f64,
}

/// Derives features from a segment list and its source timeline.
pub fn sequence_features(segs: &[Segment], t: &Timeline) -> SequenceFeatures {
    let unique: BTreeSet<u8> = segs.iter().map(|s| s.label).collect();
    let mut non_bg = 0usize;
    let mut screen = 0usize;
    for &l in &t.labels {
        if l == BACKGROUND {
            continue;
        }
        non_bg += 1;
        if SCREEN_LABELS.contains(&l) {
            screen += 1;
        }
    }
    SequenceFeatures {
        transition_count: segs.len().saturating_sub(1),
        unique_action_count: unique.len(),
        screen_time_ratio: if non_bg == 0 {
            0.0
        } else {
            screen as f64 / non_bg as f64
        },
    }
}

pub const SEGMENTS_CSV_HEADER: &str = "label,start_frame,duration_frames";

pub fn segments_to_csv(segs: &[Segment]) -> String {
    let mut out = String::from(SEGMENTS_CSV_HEADER);
    out.push('\n');
    for s in segs {
        out.push_str(&format!("{},{},{}\n", s.label, s.start, s.duration));
    }
    out
}

pub fn segments_from_csv(text: &str) -> Result<SegmentList> {
    let mut segs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != SEGMENTS_CSV_HEADER {
                return Err(Error::Validation(format!(
                    "unexpected segments header {line:?}"
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Validation(format!("bad segments row {}: {line:?}", i + 1)));
        }
        let parse = |s: &str| -> Result<usize> {
            s.trim()
                .parse()
                .map_err(|_| Error::Validation(format!("bad segments row {}: {line:?}", i + 1)))
        };
        segs.push(Segment::new(parse(parts[0])? as u8, parse(parts[1])?, parse(parts[2])?));
    }
    Ok(segs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tl(labels: Vec<u8>) -> Timeline {
        Timeline::new("t", labels).unwrap()
    }

    #[test]
    fn rle_direct_runs() {
        let t = tl(vec![1, 1, 1, 0, 2, 2]);
        let segs = run_length_encode(&t, 2);
        assert_eq!(
            segs,
            vec![Segment::new(1, 0, 3), Segment::new(2, 4, 2)]
        );
    }

    #[test]
    fn rle_preserves_gaps_between_equal_labels() {
        let t = tl(vec![1, 0, 1]);
        let segs = run_length_encode(&t, 1);
        assert_eq!(
            segs,
            vec![Segment::new(1, 0, 1), Segment::new(1, 2, 1)]
        );
    }

    #[test]
    fn rle_drops_short_runs() {
        let t = tl(vec![1, 1, 2, 1, 1]);
        let segs = run_length_encode(&t, 2);
        assert_eq!(
            segs,
            vec![Segment::new(1, 0, 2), Segment::new(1, 3, 2)]
        );
    }

    #[test]
    fn transitions_examples() {
        assert_eq!(transitions(&[]).total(), 0);
        let segs = vec![
            Segment::new(1, 0, 2),
            Segment::new(2, 2, 2),
            Segment::new(1, 4, 2),
        ];
        let t = transitions(&segs);
        assert_eq!(t.count(1, 2), 1);
        assert_eq!(t.count(2, 1), 1);
        assert_eq!(t.total(), 2);
    }

    #[test]
    fn features_examples() {
        let t = tl(vec![4, 4, 4]);
        let segs = run_length_encode(&t, 1);
        let f = sequence_features(&segs, &t);
        assert_eq!(f.screen_time_ratio, 1.0);

        let t2 = tl(vec![1, 1, 2, 2, 3, 3]);
        let segs2 = run_length_encode(&t2, 1);
        let f2 = sequence_features(&segs2, &t2);
        assert_eq!(f2.transition_count, 2);
        assert_eq!(f2.unique_action_count, 3);

        let t3 = tl(vec![4, 4, 1, 1]);
        let f3 = sequence_features(&run_length_encode(&t3, 1), &t3);
        assert!((f3.screen_time_ratio - 0.5).abs() < 1e-12);

        let t4 = tl(vec![0, 0]);
        let f4 = sequence_features(&run_length_encode(&t4, 1), &t4);
        assert_eq!(f4.screen_time_ratio, 0.0);
    }

    #[test]
    fn segments_csv_round_trip() {
        let segs = vec![Segment::new(3, 10, 40), Segment::new(5, 60, 25)];
        let text = segments_to_csv(&segs);
        assert_eq!(segments_from_csv(&text).unwrap(), segs);
    }

    proptest! {
        #[test]
        fn raw_rle_round_trips(labels in proptest::collection::vec(0u8..=16, 1..200)) {
            let t = tl(labels.clone());
            let runs = raw_runs(&t);
            prop_assert_eq!(decode_runs(&runs), labels);
        }

        #[test]
        fn filtering_is_monotone(labels in proptest::collection::vec(0u8..=4, 1..200), min in 1usize..10) {
            let t = tl(labels);
            let lo = run_length_encode(&t, min);
            let hi = run_length_encode(&t, min + 1);
            prop_assert!(hi.len() <= lo.len());
        }

        #[test]
        fn labeled_run_lengths_sum_to_labeled_frames(labels in proptest::collection::vec(0u8..=3, 1..200)) {
            let t = tl(labels.clone());
            let total: usize = run_length_encode(&t, 1).iter().map(|s| s.duration).sum();
            let labeled = labels.iter().filter(|&&l| l != 0).count();
            prop_assert_eq!(total, labeled);
        }
    }
}

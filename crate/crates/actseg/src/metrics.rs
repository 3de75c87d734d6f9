//! Frame- and segment-level recognition metrics plus inter-rater agreement.

use std::collections::{BTreeMap, BTreeSet};

use crate::domain::{Segment, Timeline, BACKGROUND};
use crate::error::{Error, Result};

/// Per-session recognition summary.
///
/// Serializes to CSV as `session_id,mof,miou,f1,evaluated_frames,gt_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionReport {
    pub session_id: String,
    pub mof: f64,
    pub miou: f64,
    pub f1: f64,
    pub evaluated_frames: usize,
    pub gt_classes: usize,
}

impl RecognitionReport {
    pub const CSV_HEADER: &'static str = "session_id,mof,miou,f1,evaluated_frames,gt_classes";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.session_id, self.mof, self.miou, self.f1, self.evaluated_frames, self.gt_classes
        )
    }
}

fn check_lengths(pred: &Timeline, gt: &Timeline) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Validation(format!(
            "timeline lengths differ: pred {} vs gt {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// Fraction of evaluated frames where pred equals gt. By default only frames
/// with a non-background ground-truth label are evaluated.
pub fn mof(pred: &Timeline, gt: &Timeline, include_background: bool) -> Result<f64> {
    check_lengths(pred, gt)?;
    let mut evaluated = 0usize;
    let mut correct = 0usize;
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        if !include_background && g == BACKGROUND {
            continue;
        }
        evaluated += 1;
        if p == g {
            correct += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::EmptyEvaluation(
            "no labeled frames to evaluate".into(),
        ));
    }
    Ok(correct as f64 / evaluated as f64)
}

/// Unweighted mean over gt-present classes of per-class frame-set IoU.
pub fn miou(pred: &Timeline, gt: &Timeline, include_background: bool) -> Result<f64> {
    check_lengths(pred, gt)?;
    let classes: Vec<u8> = if include_background {
        gt.present_labels()
    } else {
        gt.present_actions()
    };
    if classes.is_empty() {
        return Err(Error::EmptyEvaluation("no ground-truth classes".into()));
    }
    let mut total = 0.0;
    for &c in &classes {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
            let in_p = p == c;
            let in_g = g == c;
            if in_p && in_g {
                inter += 1;
            }
            if in_p || in_g {
                union += 1;
            }
        }
        total += inter as f64 / union as f64; // union >= 1 since c occurs in gt
    }
    Ok(total / classes.len() as f64)
}

fn temporal_iou(a: &Segment, b: &Segment) -> f64 {
    let inter_start = a.start.max(b.start);
    let inter_end = a.end().min(b.end());
    let inter = inter_end.saturating_sub(inter_start);
    let union = a.end().max(b.end()) - a.start.min(b.start);
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Segmental F1 under greedy one-to-one matching: candidate pairs share a
/// label and clear the IoU threshold, and are consumed in descending-IoU
/// order (ties by earlier gt start, then earlier pred start).
pub fn segmental_f1(pred: &[Segment], gt: &[Segment], iou_threshold: f64) -> f64 {
    if pred.is_empty() && gt.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gt.is_empty() {
        return 0.0;
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, p) in pred.iter().enumerate() {
        for (gi, g) in gt.iter().enumerate() {
            if p.label != g.label {
                continue;
            }
            let iou = temporal_iou(p, g);
            if iou >= iou_threshold {
                candidates.push((iou, gi, pi));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(gt[a.1].start.cmp(&gt[b.1].start))
            .then(pred[a.2].start.cmp(&pred[b.2].start))
    });
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut tp = 0usize;
    for (_, gi, pi) in candidates {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            tp += 1;
        }
    }
    let fp = pred.len() - tp;
    let fn_ = gt.len() - tp;
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Chance-corrected agreement between two raters' timelines, computed at
/// `hz` after subsampling and restricted to samples where at least one rater
/// placed a non-background label.
pub fn cohens_kappa(t1: &Timeline, t2: &Timeline, hz: f64, fps: f64) -> Result<f64> {
    if t1.len() != t2.len() {
        return Err(Error::Validation(format!(
            "timeline lengths differ: {} vs {}",
            t1.len(),
            t2.len()
        )));
    }
    if !(hz > 0.0) || fps < hz {
        return Err(Error::Validation(format!(
            "sampling requires fps >= hz > 0 (fps {fps}, hz {hz})"
        )));
    }
    let stride = ((fps / hz).round() as usize).max(1);
    let mut pairs: Vec<(u8, u8)> = Vec::new();
    let mut t = 0;
    while t < t1.len() {
        let (a, b) = (t1.labels[t], t2.labels[t]);
        if a != BACKGROUND || b != BACKGROUND {
            pairs.push((a, b));
        }
        t += stride;
    }
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation(
            "no samples where either rater placed a label".into(),
        ));
    }
    let n = pairs.len() as f64;
    let agree = pairs.iter().filter(|(a, b)| a == b).count() as f64;
    let po = agree / n;
    let mut marg1: BTreeMap<u8, f64> = BTreeMap::new();
    let mut marg2: BTreeMap<u8, f64> = BTreeMap::new();
    for &(a, b) in &pairs {
        *marg1.entry(a).or_default() += 1.0;
        *marg2.entry(b).or_default() += 1.0;
    }
    let mut pe = 0.0;
    for (label, c1) in &marg1 {
        if let Some(c2) = marg2.get(label) {
            pe += (c1 / n) * (c2 / n);
        }
    }
    if (1.0 - pe).abs() < 1e-15 {
        // Both raters constant and equal.
        return Ok(1.0);
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Jaccard index of the sets of non-background labels used by each timeline.
pub fn label_set_jaccard(t1: &Timeline, t2: &Timeline) -> f64 {
    let a: BTreeSet<u8> = t1.present_actions().into_iter().collect();
    let b: BTreeSet<u8> = t2.present_actions().into_iter().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(&b).count() as f64;
    let union = a.union(&b).count() as f64;
    inter / union
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tl(labels: Vec<u8>) -> Timeline {
        Timeline::new("t", labels).unwrap()
    }

    fn seg(label: u8, start: usize, dur: usize) -> Segment {
        Segment::new(label, start, dur)
    }

    #[test]
    fn mof_perfect_and_hand_count() {
        let gt = tl(vec![1, 1, 2, 0]);
        assert_eq!(mof(&gt, &gt, false).unwrap(), 1.0);
        let pred = tl(vec![1, 2, 2, 9]);
        assert!((mof(&pred, &gt, false).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mof_all_background_errors() {
        let gt = tl(vec![0, 0, 0]);
        let pred = tl(vec![1, 1, 1]);
        assert!(matches!(
            mof(&pred, &gt, false),
            Err(Error::EmptyEvaluation(_))
        ));
        assert_eq!(mof(&pred, &gt, true).unwrap(), 0.0);
    }

    #[test]
    fn miou_hand_set_arithmetic() {
        let gt = tl(vec![1, 1, 2, 2]);
        let pred = tl(vec![1, 2, 2, 2]);
        assert!((miou(&pred, &gt, false).unwrap() - 7.0 / 12.0).abs() < 1e-12);
        assert_eq!(miou(&gt, &gt, false).unwrap(), 1.0);
    }

    #[test]
    fn miou_zero_when_pred_never_overlaps() {
        let gt = tl(vec![1, 1, 2, 2]);
        let pred = tl(vec![9, 9, 9, 9]);
        assert_eq!(miou(&pred, &gt, false).unwrap(), 0.0);
    }

    #[test]
    fn perfect_prediction_chain() {
        let gt = tl(vec![1, 1, 1, 0, 2, 2, 3, 3, 3, 3]);
        assert_eq!(mof(&gt, &gt, false).unwrap(), 1.0);
        assert_eq!(miou(&gt, &gt, false).unwrap(), 1.0);
        let segs = crate::sequence::run_length_encode(&gt, 1);
        for thr in [0.1, 0.25, 0.5, 0.9] {
            assert_eq!(segmental_f1(&segs, &segs, thr), 1.0);
        }
    }

    #[test]
    fn label_permutation_leaves_metrics_unchanged() {
        let gt = tl(vec![1, 1, 2, 2, 0, 3]);
        let pred = tl(vec![1, 2, 2, 3, 3, 3]);
        let permute = |t: &Timeline| {
            let map = |l: u8| match l {
                1 => 7,
                2 => 4,
                3 => 11,
                other => other,
            };
            tl(t.labels.iter().map(|&l| map(l)).collect())
        };
        let (gp, pp) = (permute(&gt), permute(&pred));
        assert_eq!(
            mof(&pred, &gt, false).unwrap(),
            mof(&pp, &gp, false).unwrap()
        );
        assert_eq!(
            miou(&pred, &gt, false).unwrap(),
            miou(&pp, &gp, false).unwrap()
        );
    }

    #[test]
    fn f1_iou_thresholding() {
        let gt = vec![seg(1, 0, 10)];
        let pred = vec![seg(1, 5, 10)];
        // IoU = 5/15.
        assert_eq!(segmental_f1(&pred, &gt, 0.5), 0.0);
        assert_eq!(segmental_f1(&pred, &gt, 0.25), 1.0);
    }

    #[test]
    fn f1_empty_conventions() {
        assert_eq!(segmental_f1(&[], &[], 0.5), 1.0);
        assert_eq!(segmental_f1(&[seg(1, 0, 5)], &[], 0.5), 0.0);
        assert_eq!(segmental_f1(&[], &[seg(1, 0, 5)], 0.5), 0.0);
    }

    #[test]
    fn f1_greedy_one_to_one() {
        let gt = vec![seg(1, 0, 10)];
        let pred = vec![seg(1, 0, 6), seg(1, 7, 3)];
        // First pred matches (IoU 0.6); second is left unmatched (IoU 0.3).
        assert!((segmental_f1(&pred, &gt, 0.5) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_identical_and_checkerboard() {
        let a = tl(vec![1, 1, 2, 2]);
        assert_eq!(cohens_kappa(&a, &a, 1.0, 1.0).unwrap(), 1.0);
        let b = tl(vec![1, 2, 1, 2]);
        assert!(cohens_kappa(&a, &b, 1.0, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kappa_all_background_errors() {
        let a = tl(vec![0, 0]);
        assert!(matches!(
            cohens_kappa(&a, &a, 1.0, 1.0),
            Err(Error::EmptyEvaluation(_))
        ));
    }

    #[test]
    fn kappa_constant_equal_raters_is_one() {
        let a = tl(vec![1, 1, 1, 1]);
        assert_eq!(cohens_kappa(&a, &a, 1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn kappa_is_symmetric() {
        let a = tl(vec![1, 1, 0, 0]);
        let b = tl(vec![0, 1, 1, 0]);
        let k1 = cohens_kappa(&a, &b, 1.0, 1.0).unwrap();
        let k2 = cohens_kappa(&b, &a, 1.0, 1.0).unwrap();
        assert!((k1 - k2).abs() < 1e-12);
        assert!((k1 + 0.5).abs() < 1e-12); // hand table: po 1/3, pe 5/9
    }

    #[test]
    fn kappa_subsamples_at_given_rate() {
        let a = tl(vec![1, 2, 1, 2]);
        let b = tl(vec![1, 9, 1, 9]);
        // At 2 fps and 1 Hz only frames 0 and 2 are sampled.
        assert_eq!(cohens_kappa(&a, &b, 1.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn jaccard_examples() {
        let ab = tl(vec![1, 2]);
        let bc = tl(vec![2, 3]);
        assert_eq!(label_set_jaccard(&ab, &ab), 1.0);
        assert!((label_set_jaccard(&ab, &bc) - 1.0 / 3.0).abs() < 1e-12);
        let a = tl(vec![1]);
        let empty = tl(vec![0]);
        assert_eq!(label_set_jaccard(&a, &empty), 0.0);
        assert_eq!(label_set_jaccard(&empty, &empty), 1.0);
    }
}

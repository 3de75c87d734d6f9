//! Evaluation protocols: within-sample and leave-one-out recognition,
//! competency association, per-item analysis, and confound computation.

use std::collections::BTreeSet;

use crate::domain::{CompetencyRecord, SegmentList, Timeline, BACKGROUND};
use crate::error::{Error, Result};
use crate::fewshot::{
    clustered_prototypes, mean_prototypes, sample_support, similarity_scores, PrototypeSet,
    PrototypeStrategy,
};
use crate::hmm::{emission_log_probs, viterbi, TransitionModel};
use crate::ingest::{Dataset, SessionData};
use crate::metrics::{mof, miou, segmental_f1, RecognitionReport};
use crate::seeds;
use crate::sequence::run_length_encode;
use crate::stats::{partial_spearman, pearson, spearman, CorrelationResult};

/// Default k for the clustered prototype strategy.
pub const DEFAULT_KMEANS_K: usize = 3;

/// Knobs shared by both evaluation protocols.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub shots: usize,
    pub strategy: PrototypeStrategy,
    pub kmeans_k: usize,
    pub tau: f64,
    pub alpha: f64,
    pub min_seg_frames: usize,
    /// Thresholds reported in the per-threshold F1 table.
    pub f1_thresholds: Vec<f64>,
    /// Threshold behind the report's `f1` column.
    pub primary_f1_threshold: f64,
    pub include_background: bool,
    pub seed: u64,
    /// Support redraws per session in the within-sample protocol.
    pub replicates: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            shots: 10,
            strategy: PrototypeStrategy::Mean,
            kmeans_k: DEFAULT_KMEANS_K,
            tau: crate::hmm::DEFAULT_TAU,
            alpha: crate::hmm::DEFAULT_ALPHA,
            min_seg_frames: crate::sequence::DEFAULT_MIN_FRAMES,
            f1_thresholds: vec![0.1, 0.25, 0.5],
            primary_f1_threshold: 0.5,
            include_background: false,
            seed: 0,
            replicates: 5,
        }
    }
}

/// One decoded-vs-ground-truth evaluation.
#[derive(Debug, Clone)]
pub struct SessionEval {
    pub report: RecognitionReport,
    pub f1_by_threshold: Vec<(f64, f64)>,
}

/// Segment lists used for segmental F1: the prediction is duration-filtered,
/// the ground truth keeps every labeled run.
pub fn evaluation_segments(pred: &Timeline, gt: &Timeline, min_seg_frames: usize) -> (SegmentList, SegmentList) {
    (
        run_length_encode(pred, min_seg_frames),
        run_length_encode(gt, 1),
    )
}

/// Scores a prediction against ground truth.
pub fn evaluate_timeline(pred: &Timeline, gt: &Timeline, cfg: &EvalConfig) -> Result<SessionEval> {
    let mof_v = mof(pred, gt, cfg.include_background)?;
    let miou_v = miou(pred, gt, cfg.include_background)?;
    let (pred_segs, gt_segs) = evaluation_segments(pred, gt, cfg.min_seg_frames);
    let f1_primary = segmental_f1(&pred_segs, &gt_segs, cfg.primary_f1_threshold);
    let f1_by_threshold: Vec<(f64, f64)> = cfg
        .f1_thresholds
        .iter()
        .map(|&thr| (thr, segmental_f1(&pred_segs, &gt_segs, thr)))
        .collect();
    let evaluated_frames = if cfg.include_background {
        gt.len()
    } else {
        gt.labels.iter().filter(|&&l| l != BACKGROUND).count()
    };
    Ok(SessionEval {
        report: RecognitionReport {
            session_id: gt.session_id.clone(),
            mof: mof_v,
            miou: miou_v,
            f1: f1_primary,
            evaluated_frames,
            gt_classes: gt.present_actions().len(),
        },
        f1_by_threshold,
    })
}

fn build_prototypes(
    supports: &[crate::fewshot::SupportSet<f64>],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<PrototypeSet<f64>> {
    match cfg.strategy {
        PrototypeStrategy::Mean => mean_prototypes(supports),
        PrototypeStrategy::Clustered => clustered_prototypes(supports, cfg.kmeans_k, seed),
    }
}

/// Decodes query features with the given prototypes and transition model.
pub fn decode(
    feats_normalized: &crate::domain::FeatureSequence<f64>,
    protos: &PrototypeSet<f64>,
    model: &TransitionModel<f64>,
) -> Result<Timeline> {
    let scores = similarity_scores(feats_normalized, protos)?;
    let log_b = emission_log_probs(&scores, model.tau);
    let labels = viterbi(&log_b, model)?;
    Timeline::new(feats_normalized.session_id.clone(), labels)
}

/// Within-sample result: per-metric mean ± population std over replicates.
#[derive(Debug, Clone)]
pub struct WithinReport {
    pub session_id: String,
    pub replicates: usize,
    pub mof_mean: f64,
    pub mof_std: f64,
    pub miou_mean: f64,
    pub miou_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

impl WithinReport {
    pub const CSV_HEADER: &'static str =
        "session_id,mof_mean,mof_std,miou_mean,miou_std,f1_mean,f1_std,replicates";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.session_id,
            self.mof_mean,
            self.mof_std,
            self.miou_mean,
            self.miou_std,
            self.f1_mean,
            self.f1_std,
            self.replicates
        )
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn masked(t: &Timeline, support_frames: &[usize]) -> Timeline {
    let mut labels = t.labels.clone();
    for &f in support_frames {
        labels[f] = BACKGROUND;
    }
    Timeline {
        session_id: t.session_id.clone(),
        labels,
    }
}

/// Within-sample protocol: per replicate, sample `shots` support frames per
/// class from the session itself, fit prototypes and HMM statistics on that
/// session, decode, and score the remaining labeled frames.
pub fn within_sample_eval(session: &SessionData, cfg: &EvalConfig) -> Result<WithinReport> {
    if session.gt.present_actions().is_empty() {
        return Err(Error::EmptyEvaluation(format!(
            "session {} has no labeled classes",
            session.gt.session_id
        )));
    }
    let feats = session.features.normalized()?;
    let sid_hash = seeds::hash_str(&session.gt.session_id);
    let mut mofs = Vec::with_capacity(cfg.replicates);
    let mut mious = Vec::with_capacity(cfg.replicates);
    let mut f1s = Vec::with_capacity(cfg.replicates);
    for rep in 0..cfg.replicates.max(1) {
        let rep_seed = seeds::derive(cfg.seed, &[2, sid_hash, rep as u64]);
        let support = sample_support(&session.gt, &feats, cfg.shots, rep_seed)?;
        let support_frames = support.sampled_frames();
        let protos = build_prototypes(
            std::slice::from_ref(&support),
            cfg,
            seeds::derive(rep_seed, &[0]),
        )?;
        let labels = protos.labels();
        let model = TransitionModel::estimate(
            &[&session.gt],
            &labels,
            cfg.alpha,
            cfg.tau,
        )?;
        let pred = decode(&feats, &protos, &model)?;
        // Support frames leave the query set on both sides.
        let pred_q = masked(&pred, &support_frames);
        let gt_q = masked(&session.gt, &support_frames);
        let eval = evaluate_timeline(&pred_q, &gt_q, cfg)?;
        mofs.push(eval.report.mof);
        mious.push(eval.report.miou);
        f1s.push(eval.report.f1);
    }
    let (mof_mean, mof_std) = mean_std(&mofs);
    let (miou_mean, miou_std) = mean_std(&mious);
    let (f1_mean, f1_std) = mean_std(&f1s);
    Ok(WithinReport {
        session_id: session.gt.session_id.clone(),
        replicates: cfg.replicates.max(1),
        mof_mean,
        mof_std,
        miou_mean,
        miou_std,
        f1_mean,
        f1_std,
    })
}

/// Runs the within-sample protocol over every session.
pub fn within_sample_eval_all(dataset: &Dataset, cfg: &EvalConfig) -> Result<Vec<WithinReport>> {
    dataset
        .sessions
        .iter()
        .map(|s| within_sample_eval(s, cfg))
        .collect()
}

/// One leave-one-out fold's decoded timeline and label bookkeeping.
#[derive(Debug, Clone)]
pub struct FoldDecode {
    pub pred: Timeline,
    /// Labels decodable in this fold (present in some support session).
    pub label_set: Vec<u8>,
    /// Ground-truth labels of the held-out session absent from every support
    /// session, hence unreachable for the decoder.
    pub unreachable: Vec<u8>,
}

/// Decodes fold `held_out` of the leave-one-out protocol.
pub fn loo_decode_fold(dataset: &Dataset, held_out: usize, cfg: &EvalConfig) -> Result<FoldDecode> {
    if dataset.len() < 2 {
        return Err(Error::Validation(
            "leave-one-out needs at least 2 sessions".into(),
        ));
    }
    let target = &dataset.sessions[held_out];
    let mut supports = Vec::with_capacity(dataset.len() - 1);
    let mut support_timelines = Vec::with_capacity(dataset.len() - 1);
    for (j, s) in dataset.sessions.iter().enumerate() {
        if j == held_out {
            continue;
        }
        let feats = s.features.normalized()?;
        let seed = seeds::derive(cfg.seed, &[3, held_out as u64, j as u64]);
        supports.push(sample_support(&s.gt, &feats, cfg.shots, seed)?);
        support_timelines.push(&s.gt);
    }
    let protos = build_prototypes(
        &supports,
        cfg,
        seeds::derive(cfg.seed, &[4, held_out as u64]),
    )?;
    let label_set = protos.labels();
    let known: BTreeSet<u8> = label_set.iter().copied().collect();
    let unreachable: Vec<u8> = target
        .gt
        .present_labels()
        .into_iter()
        .filter(|l| !known.contains(l))
        .collect();
    let model = TransitionModel::estimate(&support_timelines, &label_set, cfg.alpha, cfg.tau)?;
    let feats = target.features.normalized()?;
    let pred = decode(&feats, &protos, &model)?;
    Ok(FoldDecode {
        pred,
        label_set,
        unreachable,
    })
}

/// One fold's evaluation.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub eval: SessionEval,
    pub unreachable: Vec<u8>,
}

/// Cross-sample summary over folds.
#[derive(Debug, Clone)]
pub struct CrossEval {
    pub folds: Vec<FoldResult>,
    pub mof_mean: f64,
    pub mof_std: f64,
    pub miou_mean: f64,
    pub miou_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

impl CrossEval {
    pub fn reports(&self) -> Vec<&RecognitionReport> {
        self.folds.iter().map(|f| &f.eval.report).collect()
    }

    pub fn reports_csv(&self) -> String {
        let mut out = String::from(RecognitionReport::CSV_HEADER);
        out.push('\n');
        for f in &self.folds {
            out.push_str(&f.eval.report.to_csv_row());
            out.push('\n');
        }
        out
    }

    pub fn f1_thresholds_csv(&self) -> String {
        let mut out = String::from("session_id,threshold,f1\n");
        for f in &self.folds {
            for (thr, v) in &f.eval.f1_by_threshold {
                out.push_str(&format!("{},{},{}\n", f.eval.report.session_id, thr, v));
            }
        }
        out
    }
}

/// Parses the report CSV schema written by [`CrossEval::reports_csv`].
pub fn parse_reports_csv(text: &str) -> Result<Vec<RecognitionReport>> {
    let mut reports = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != RecognitionReport::CSV_HEADER {
                return Err(Error::Validation(format!(
                    "unexpected reports header {line:?}"
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::Validation(format!("bad reports row {}: {line:?}", i + 1)));
        }
        let bad = |field: &str| Error::Validation(format!("bad {field} in reports row {}", i + 1));
        reports.push(RecognitionReport {
            session_id: parts[0].trim().to_string(),
            mof: parts[1].trim().parse().map_err(|_| bad("mof"))?,
            miou: parts[2].trim().parse().map_err(|_| bad("miou"))?,
            f1: parts[3].trim().parse().map_err(|_| bad("f1"))?,
            evaluated_frames: parts[4].trim().parse().map_err(|_| bad("evaluated_frames"))?,
            gt_classes: parts[5].trim().parse().map_err(|_| bad("gt_classes"))?,
        });
    }
    Ok(reports)
}

/// Leave-one-out evaluation across the whole dataset.
pub fn cross_sample_eval(dataset: &Dataset, cfg: &EvalConfig) -> Result<CrossEval> {
    let mut folds = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let decoded = loo_decode_fold(dataset, i, cfg)?;
        let eval = evaluate_timeline(&decoded.pred, &dataset.sessions[i].gt, cfg)?;
        folds.push(FoldResult {
            eval,
            unreachable: decoded.unreachable,
        });
    }
    let mofs: Vec<f64> = folds.iter().map(|f| f.eval.report.mof).collect();
    let mious: Vec<f64> = folds.iter().map(|f| f.eval.report.miou).collect();
    let f1s: Vec<f64> = folds.iter().map(|f| f.eval.report.f1).collect();
    let (mof_mean, mof_std) = mean_std(&mofs);
    let (miou_mean, miou_std) = mean_std(&mious);
    let (f1_mean, f1_std) = mean_std(&f1s);
    Ok(CrossEval {
        folds,
        mof_mean,
        mof_std,
        miou_mean,
        miou_std,
        f1_mean,
        f1_std,
    })
}

/// One association-table row; `status` explains a missing statistic.
#[derive(Debug, Clone)]
pub struct AssocRow {
    pub feature: String,
    pub n: usize,
    pub rho: Option<f64>,
    pub p: Option<f64>,
    pub pearson_r: Option<f64>,
    pub status: Option<String>,
}

impl AssocRow {
    pub const CSV_HEADER: &'static str = "feature,rho,p,pearson_r,n";

    pub fn to_csv_row(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.feature,
            fmt(self.rho),
            fmt(self.p),
            fmt(self.pearson_r),
            self.n
        )
    }
}

fn assoc_row(feature: &str, xs: &[f64], ys: &[f64]) -> AssocRow {
    let sp = spearman(xs, ys);
    let pe = pearson(xs, ys);
    match (sp, pe) {
        (Ok(s), Ok(p)) => AssocRow {
            feature: feature.to_string(),
            n: s.n,
            rho: Some(s.statistic),
            p: Some(s.p_value),
            pearson_r: Some(p.statistic),
            status: None,
        },
        (sp, pe) => {
            let err = sp.err().or(pe.err()).expect("one side failed");
            AssocRow {
                feature: feature.to_string(),
                n: xs.len(),
                rho: None,
                p: None,
                pearson_r: None,
                status: Some(err.to_string()),
            }
        }
    }
}

/// Pairs reports with competency records by session id, in report order.
pub fn join_sessions<'a>(
    reports: &'a [RecognitionReport],
    records: &'a [CompetencyRecord],
) -> Vec<(&'a RecognitionReport, &'a CompetencyRecord)> {
    reports
        .iter()
        .filter_map(|r| {
            records
                .iter()
                .find(|c| c.session_id == r.session_id)
                .map(|c| (r, c))
        })
        .collect()
}

/// Spearman + Pearson association of each recognition feature with the
/// video-observable competency percentage.
pub fn competency_analysis(
    reports: &[RecognitionReport],
    records: &[CompetencyRecord],
) -> Result<Vec<AssocRow>> {
    let joined = join_sessions(reports, records);
    if joined.len() < 3 {
        return Err(Error::Validation(format!(
            "need at least 3 sessions with both a report and a record, got {}",
            joined.len()
        )));
    }
    let pct: Vec<f64> = joined.iter().map(|(_, c)| c.video_observable_pct).collect();
    let features: [(&str, Vec<f64>); 6] = [
        ("miou", joined.iter().map(|(r, _)| r.miou).collect()),
        ("mof", joined.iter().map(|(r, _)| r.mof).collect()),
        ("f1", joined.iter().map(|(r, _)| r.f1).collect()),
        (
            "frame_error_rate",
            joined.iter().map(|(r, _)| 1.0 - r.mof).collect(),
        ),
        (
            "gt_classes",
            joined.iter().map(|(r, _)| r.gt_classes as f64).collect(),
        ),
        (
            "evaluated_frames",
            joined
                .iter()
                .map(|(r, _)| r.evaluated_frames as f64)
                .collect(),
        ),
    ];
    Ok(features
        .iter()
        .map(|(name, xs)| assoc_row(name, xs, &pct))
        .collect())
}

/// Per-session sequence statistics used as confound controls.
#[derive(Debug, Clone)]
pub struct ConfoundRecord {
    pub session_id: String,
    pub coverage: f64,
    pub gt_segments: usize,
    pub unique_actions: usize,
    pub avg_segment_s: f64,
    pub duration_s: f64,
    pub total_annotations: usize,
}

pub const CONFOUND_NAMES: [&str; 6] = [
    "coverage",
    "gt_segments",
    "unique_actions",
    "avg_segment_s",
    "duration_s",
    "total_annotations",
];

impl ConfoundRecord {
    pub const CSV_HEADER: &'static str =
        "session_id,coverage,gt_segments,unique_actions,avg_segment_s,duration_s,total_annotations";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.session_id,
            self.coverage,
            self.gt_segments,
            self.unique_actions,
            self.avg_segment_s,
            self.duration_s,
            self.total_annotations
        )
    }

    pub fn value(&self, name: &str) -> f64 {
        match name {
            "coverage" => self.coverage,
            "gt_segments" => self.gt_segments as f64,
            "unique_actions" => self.unique_actions as f64,
            "avg_segment_s" => self.avg_segment_s,
            "duration_s" => self.duration_s,
            "total_annotations" => self.total_annotations as f64,
            other => panic!("unknown confound {other}"),
        }
    }
}

/// Computes annotation-side confounds from ground truth. Total annotations
/// equals the action-layer segment count here; other annotation layers are
/// out of scope.
pub fn compute_confounds(dataset: &Dataset) -> Vec<ConfoundRecord> {
    dataset
        .sessions
        .iter()
        .map(|s| {
            let t = s.gt.len();
            let fps = s.features.fps;
            let segs = run_length_encode(&s.gt, 1);
            let labeled = s.gt.labels.iter().filter(|&&l| l != BACKGROUND).count();
            let unique: BTreeSet<u8> = segs.iter().map(|x| x.label).collect();
            let avg_frames = if segs.is_empty() {
                0.0
            } else {
                segs.iter().map(|x| x.duration).sum::<usize>() as f64 / segs.len() as f64
            };
            ConfoundRecord {
                session_id: s.gt.session_id.clone(),
                coverage: labeled as f64 / t as f64,
                gt_segments: segs.len(),
                unique_actions: unique.len(),
                avg_segment_s: avg_frames / fps,
                duration_s: t as f64 / fps,
                total_annotations: segs.len(),
            }
        })
        .collect()
}

/// One robustness row: MOF-competency association controlling one variable,
/// plus that variable's own association with MOF.
#[derive(Debug, Clone)]
pub struct ConfoundRow {
    pub control: String,
    pub n: usize,
    pub partial_rho: Option<f64>,
    pub partial_p: Option<f64>,
    pub var_mof_rho: Option<f64>,
    pub var_mof_p: Option<f64>,
    pub status: Option<String>,
}

impl ConfoundRow {
    pub const CSV_HEADER: &'static str = "control,partial_rho,partial_p,var_mof_rho,var_mof_p,n";

    pub fn to_csv_row(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.control,
            fmt(self.partial_rho),
            fmt(self.partial_p),
            fmt(self.var_mof_rho),
            fmt(self.var_mof_p),
            self.n
        )
    }
}

/// Partial-association robustness table: the baseline row has no control.
pub fn confound_analysis(
    reports: &[RecognitionReport],
    records: &[CompetencyRecord],
    confounds: &[ConfoundRecord],
) -> Result<Vec<ConfoundRow>> {
    let joined = join_sessions(reports, records);
    if joined.len() < 4 {
        return Err(Error::Validation(
            "confound analysis needs at least 4 joined sessions".into(),
        ));
    }
    let mofs: Vec<f64> = joined.iter().map(|(r, _)| r.mof).collect();
    let pct: Vec<f64> = joined.iter().map(|(_, c)| c.video_observable_pct).collect();
    let mut rows = Vec::new();
    let baseline = spearman(&mofs, &pct);
    rows.push(match baseline {
        Ok(r) => ConfoundRow {
            control: "none".into(),
            n: r.n,
            partial_rho: Some(r.statistic),
            partial_p: Some(r.p_value),
            var_mof_rho: None,
            var_mof_p: None,
            status: None,
        },
        Err(e) => ConfoundRow {
            control: "none".into(),
            n: joined.len(),
            partial_rho: None,
            partial_p: None,
            var_mof_rho: None,
            var_mof_p: None,
            status: Some(e.to_string()),
        },
    });
    for &name in &CONFOUND_NAMES {
        let control: Option<Vec<f64>> = joined
            .iter()
            .map(|(r, _)| {
                confounds
                    .iter()
                    .find(|c| c.session_id == r.session_id)
                    .map(|c| c.value(name))
            })
            .collect();
        let Some(control) = control else {
            rows.push(ConfoundRow {
                control: name.into(),
                n: joined.len(),
                partial_rho: None,
                partial_p: None,
                var_mof_rho: None,
                var_mof_p: None,
                status: Some("missing confound values".into()),
            });
            continue;
        };
        let partial = partial_spearman(&mofs, &pct, std::slice::from_ref(&control));
        let bivariate = spearman(&control, &mofs);
        let (partial_rho, partial_p, mut status) = match partial {
            Ok(r) => (Some(r.statistic), Some(r.p_value), None),
            Err(e) => (None, None, Some(e.to_string())),
        };
        let (var_rho, var_p) = match bivariate {
            Ok(r) => (Some(r.statistic), Some(r.p_value)),
            Err(e) => {
                if status.is_none() {
                    status = Some(e.to_string());
                }
                (None, None)
            }
        };
        rows.push(ConfoundRow {
            control: name.into(),
            n: joined.len(),
            partial_rho,
            partial_p,
            var_mof_rho: var_rho,
            var_mof_p: var_p,
            status,
        });
    }
    Ok(rows)
}

/// One per-item association row.
#[derive(Debug, Clone)]
pub struct ItemRow {
    pub item: usize,
    pub name: &'static str,
    pub n: usize,
    pub rho: Option<f64>,
    pub p: Option<f64>,
    pub status: Option<String>,
}

impl ItemRow {
    pub const CSV_HEADER: &'static str = "item,name,rho,p,n";

    pub fn to_csv_row(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},\"{}\",{},{},{}",
            self.item,
            self.name,
            fmt(self.rho),
            fmt(self.p),
            self.n
        )
    }
}

/// Spearman between per-video MOF and each rubric item, with pairwise
/// deletion of missing ratings. Rows are sorted by |rho| descending; rows
/// without a statistic sink to the bottom.
pub fn per_item_analysis(
    reports: &[RecognitionReport],
    records: &[CompetencyRecord],
) -> Result<Vec<ItemRow>> {
    let joined = join_sessions(reports, records);
    if joined.len() < 3 {
        return Err(Error::Validation(format!(
            "need at least 3 sessions with both a report and a record, got {}",
            joined.len()
        )));
    }
    let mut rows = Vec::with_capacity(crate::domain::NUM_RUBRIC_ITEMS);
    for item in 1..=crate::domain::NUM_RUBRIC_ITEMS {
        let pairs: Vec<(f64, f64)> = joined
            .iter()
            .filter_map(|(r, c)| c.items[item - 1].map(|s| (r.mof, f64::from(s))))
            .collect();
        let name = crate::domain::RUBRIC_ITEM_NAMES[item - 1];
        if pairs.len() < 3 {
            rows.push(ItemRow {
                item,
                name,
                n: pairs.len(),
                rho: None,
                p: None,
                status: Some(format!("insufficient data (N={})", pairs.len())),
            });
            continue;
        }
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        match spearman(&xs, &ys) {
            Ok(r) => rows.push(ItemRow {
                item,
                name,
                n: r.n,
                rho: Some(r.statistic),
                p: Some(r.p_value),
                status: None,
            }),
            Err(e) => rows.push(ItemRow {
                item,
                name,
                n: pairs.len(),
                rho: None,
                p: None,
                status: Some(e.to_string()),
            }),
        }
    }
    rows.sort_by(|a, b| {
        match (a.rho, b.rho) {
            (Some(x), Some(y)) => y.abs().partial_cmp(&x.abs()).unwrap(),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then(a.item.cmp(&b.item))
    });
    Ok(rows)
}

/// Convenience: the bivariate Spearman between per-fold MOF and competency,
/// the quantity the synthetic cohort is built to probe.
pub fn mof_competency_spearman(
    reports: &[RecognitionReport],
    records: &[CompetencyRecord],
) -> Result<CorrelationResult> {
    let joined = join_sessions(reports, records);
    let mofs: Vec<f64> = joined.iter().map(|(r, _)| r.mof).collect();
    let pct: Vec<f64> = joined.iter().map(|(_, c)| c.video_observable_pct).collect();
    spearman(&mofs, &pct)
}

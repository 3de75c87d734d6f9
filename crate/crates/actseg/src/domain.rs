//! Domain types shared by every pipeline stage: the 16+1 action taxonomy,
//! per-frame feature sequences and timelines, segments, the 23-item rubric,
//! and the macro-category mapping used for process models.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::num::{norm, Real};

/// Number of clinical action classes (background excluded).
pub const NUM_ACTIONS: u8 = 16;
/// Background label id.
pub const BACKGROUND: u8 = 0;
/// Number of rubric items.
pub const NUM_RUBRIC_ITEMS: usize = 23;
/// Default recording rate in frames per second.
pub const DEFAULT_FPS: f64 = 25.0;

/// One entry of the action taxonomy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionLabel {
    pub id: u8,
    pub name: String,
}

const DEFAULT_TAXONOMY: [(&str, Option<&str>); 17] = [
    ("Background", None),
    ("Perform Hand Hygiene", Some("Hygiene")),
    ("Put on Gloves", Some("Hygiene")),
    ("Check Patient Wristband", None),
    ("Check Patient History Screen", Some("Screen")),
    ("Examine Med Bottle", Some("Med Bottle")),
    ("Review Vital Signs Screen", Some("Screen")),
    ("Assess Vital Signs (Palpate Wrist)", Some("Examination")),
    ("Auscultate Lung Sounds", Some("Examination")),
    ("Measure Apical Pulse", Some("Examination")),
    ("Measure Temperature", Some("Examination")),
    ("Measure Blood Pressure", Some("Examination")),
    ("Writing", Some("Writing")),
    ("Use Calculator", Some("Calculator")),
    ("Check Phone", None),
    ("Prepare Medication", Some("Prep Med")),
    ("Apply Medication to Patient", Some("Apply Med")),
];

/// The label vocabulary: ids 0..=16 with id 0 reserved for background.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    labels: Vec<ActionLabel>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy {
            labels: DEFAULT_TAXONOMY
                .iter()
                .enumerate()
                .map(|(id, (name, _))| ActionLabel {
                    id: id as u8,
                    name: (*name).to_string(),
                })
                .collect(),
        }
    }
}

impl Taxonomy {
    pub fn labels(&self) -> &[ActionLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn name_of(&self, id: u8) -> Option<&str> {
        self.labels.get(id as usize).map(|l| l.name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<u8> {
        self.labels.iter().find(|l| l.name == name).map(|l| l.id)
    }

    /// Loads a taxonomy + macro mapping override from a `id,name,macro` CSV.
    ///
    /// All 17 ids must appear exactly once; the macro column may be empty for
    /// labels outside any macro-category (background always is).
    pub fn from_csv(path: &Path) -> Result<(Taxonomy, MacroMapping)> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        let mut names: Vec<Option<String>> = vec![None; 17];
        let mut mapping = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, format!("row {}: {e}", i + 2)))?;
            if rec.len() < 3 {
                return Err(Error::parse(path, format!("row {}: expected id,name,macro", i + 2)));
            }
            let id: u8 = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, format!("row {}: bad id {:?}", i + 2, &rec[0])))?;
            if id > NUM_ACTIONS {
                return Err(Error::parse(path, format!("row {}: id {id} out of 0..=16", i + 2)));
            }
            if names[id as usize].is_some() {
                return Err(Error::parse(path, format!("row {}: duplicate id {id}", i + 2)));
            }
            names[id as usize] = Some(rec[1].trim().to_string());
            let mac = rec[2].trim();
            if !mac.is_empty() {
                if id == BACKGROUND {
                    return Err(Error::parse(path, format!("row {}: background cannot join a macro", i + 2)));
                }
                mapping.insert(id, mac.to_string());
            }
        }
        let labels = names
            .into_iter()
            .enumerate()
            .map(|(id, name)| {
                name.map(|name| ActionLabel { id: id as u8, name })
                    .ok_or_else(|| Error::parse(path, format!("missing id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let names: BTreeSet<_> = labels.iter().map(|l| &l.name).collect();
        if names.len() != labels.len() {
            return Err(Error::parse(path, "duplicate label name".to_string()));
        }
        Ok((Taxonomy { labels }, MacroMapping { map: mapping }))
    }
}

/// Assignment of clinical action ids to macro-category names.
///
/// The default grouping covers the 14 actions that belong to the eight
/// macro-categories; Check Patient Wristband and Check Phone stay unmapped
/// and are rejected by macro aggregation unless an override maps them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacroMapping {
    map: BTreeMap<u8, String>,
}

impl Default for MacroMapping {
    fn default() -> Self {
        let map = DEFAULT_TAXONOMY
            .iter()
            .enumerate()
            .filter_map(|(id, (_, mac))| mac.map(|m| (id as u8, m.to_string())))
            .collect();
        MacroMapping { map }
    }
}

impl MacroMapping {
    pub fn get(&self, id: u8) -> Option<&str> {
        self.map.get(&id).map(String::as_str)
    }

    pub fn contains(&self, id: u8) -> bool {
        self.map.contains_key(&id)
    }

    /// Distinct macro names in sorted order.
    pub fn macro_names(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.map.values().map(String::as_str).collect();
        set.into_iter().collect()
    }

    /// Sizes of the macro groups, sorted descending.
    pub fn partition_sizes(&self) -> Vec<usize> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for mac in self.map.values() {
            *counts.entry(mac).or_default() += 1;
        }
        let mut sizes: Vec<usize> = counts.into_values().collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }
}

/// A session's T×D matrix of per-frame feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<F: Real> {
    pub session_id: String,
    pub fps: f64,
    dim: usize,
    data: Vec<F>,
}

impl<F: Real> FeatureSequence<F> {
    pub fn new(session_id: impl Into<String>, dim: usize, data: Vec<F>, fps: f64) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Validation(format!(
                "feature matrix must be non-empty with len divisible by dim (len {}, dim {dim})",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature value at flat index {pos}"
            )));
        }
        Ok(FeatureSequence {
            session_id: session_id.into(),
            fps,
            dim,
            data,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[F] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn raw(&self) -> &[F] {
        &self.data
    }

    /// Returns a copy with every row scaled to unit L2 norm.
    pub fn normalized(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (t, row) in data.chunks_exact_mut(self.dim).enumerate() {
            let n = norm(row);
            if n <= F::zero() {
                return Err(Error::Degenerate(format!(
                    "zero-norm feature row at frame {t} of session {}",
                    self.session_id
                )));
            }
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        Ok(FeatureSequence {
            session_id: self.session_id.clone(),
            fps: self.fps,
            dim: self.dim,
            data,
        })
    }
}

/// Length-T vector of action label ids for one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    pub session_id: String,
    pub labels: Vec<u8>,
}

impl Timeline {
    pub fn new(session_id: impl Into<String>, labels: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l > NUM_ACTIONS) {
            return Err(Error::Validation(format!("label id {bad} out of 0..=16")));
        }
        Ok(Timeline {
            session_id: session_id.into(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Distinct non-background labels, ascending.
    pub fn present_actions(&self) -> Vec<u8> {
        let set: BTreeSet<u8> = self.labels.iter().copied().filter(|&l| l != BACKGROUND).collect();
        set.into_iter().collect()
    }

    /// Distinct labels including background, ascending.
    pub fn present_labels(&self) -> Vec<u8> {
        let set: BTreeSet<u8> = self.labels.iter().copied().collect();
        set.into_iter().collect()
    }
}

/// A maximal constant-label run after filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub label: u8,
    pub start: usize,
    pub duration: usize,
}

impl Segment {
    pub fn new(label: u8, start: usize, duration: usize) -> Self {
        Segment { label, start, duration }
    }

    pub fn end(&self) -> usize {
        self.start + self.duration
    }
}

pub type SegmentList = Vec<Segment>;

/// Indices (1-based) of the video-observable rubric items.
pub const VIDEO_OBSERVABLE_ITEMS: [usize; 11] = [1, 2, 6, 9, 12, 13, 18, 19, 20, 21, 22];

/// Rubric item names, index 0 holding item 1.
pub const RUBRIC_ITEM_NAMES: [&str; NUM_RUBRIC_ITEMS] = [
    "Obtains pertinent data",
    "Performs follow-up assessments as needed",
    "Assesses the environment",
    "Communicates effectively with team",
    "Communicates effectively with patient",
    "Documents clearly, concisely, and accurately",
    "Responds to abnormal findings appropriately",
    "Promotes professionalism",
    "Interprets vital signs",
    "Interprets laboratory results",
    "Interprets subjective/objective data",
    "Prioritizes appropriately",
    "Performs evidence-based interventions",
    "Provides evidence-based rationale for interventions",
    "Evaluates evidence-based interventions and outcomes",
    "Reflects on clinical experience",
    "Delegates appropriately",
    "Uses patient identifiers",
    "Utilizes standardized practices and precautions",
    "Administers medications safely",
    "Manages technology and equipment",
    "Performs procedures correctly",
    "Reflects on potential hazards and errors",
];

/// Default boolean mask over the 23 items, true for video-observable ones.
pub fn video_observable_flags() -> [bool; NUM_RUBRIC_ITEMS] {
    let mut flags = [false; NUM_RUBRIC_ITEMS];
    for &item in &VIDEO_OBSERVABLE_ITEMS {
        flags[item - 1] = true;
    }
    flags
}

/// Instructor ratings for one session: 23 optional 1..=5 scores plus the
/// derived video-observable percentage.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetencyRecord {
    pub session_id: String,
    pub items: [Option<u8>; NUM_RUBRIC_ITEMS],
    pub video_observable_pct: f64,
}

impl CompetencyRecord {
    /// Builds a record, deriving the percentage from the default flag set.
    pub fn new(session_id: impl Into<String>, items: [Option<u8>; NUM_RUBRIC_ITEMS]) -> Result<Self> {
        let session_id = session_id.into();
        for (i, score) in items.iter().enumerate() {
            if let Some(s) = score {
                if !(1..=5).contains(s) {
                    return Err(Error::Validation(format!(
                        "item_{} score {s} outside 1..=5 for session {session_id}",
                        i + 1
                    )));
                }
            }
        }
        let pct = video_observable_pct_for(&session_id, &items, &video_observable_flags())?;
        Ok(CompetencyRecord {
            session_id,
            items,
            video_observable_pct: pct,
        })
    }
}

/// 100 × (mean of the present flagged scores) / 5.
///
/// Missing items are skipped rather than imputed; an all-missing flag set is
/// an error.
pub fn video_observable_pct(
    record: &CompetencyRecord,
    flags: &[bool; NUM_RUBRIC_ITEMS],
) -> Result<f64> {
    video_observable_pct_for(&record.session_id, &record.items, flags)
}

fn video_observable_pct_for(
    session_id: &str,
    items: &[Option<u8>; NUM_RUBRIC_ITEMS],
    flags: &[bool; NUM_RUBRIC_ITEMS],
) -> Result<f64> {
    let mut sum = 0u32;
    let mut count = 0u32;
    for (score, flag) in items.iter().zip(flags) {
        if let (Some(s), true) = (score, flag) {
            sum += u32::from(*s);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoObservableItems(session_id.to_string()));
    }
    Ok(100.0 * (f64::from(sum) / f64::from(count)) / 5.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_has_17_dense_unique_labels() {
        let tax = Taxonomy::default();
        assert_eq!(tax.len(), 17);
        assert_eq!(tax.name_of(0), Some("Background"));
        for id in 0..=16u8 {
            let name = tax.name_of(id).unwrap();
            assert_eq!(tax.id_of(name), Some(id));
        }
    }

    #[test]
    fn default_macro_partition_matches_expected_sizes() {
        let map = MacroMapping::default();
        assert_eq!(map.macro_names().len(), 8);
        assert_eq!(map.partition_sizes(), vec![5, 2, 2, 1, 1, 1, 1, 1]);
        assert_eq!(map.get(7), Some("Examination"));
        assert_eq!(map.get(9), Some("Examination"));
        assert_eq!(map.get(8), Some("Examination"));
        assert_eq!(map.get(10), Some("Examination"));
        assert_eq!(map.get(11), Some("Examination"));
        assert_eq!(map.get(1), Some("Hygiene"));
        assert_eq!(map.get(2), Some("Hygiene"));
        assert_eq!(map.get(4), Some("Screen"));
        assert_eq!(map.get(6), Some("Screen"));
        assert_eq!(map.get(12), Some("Writing"));
        assert_eq!(map.get(13), Some("Calculator"));
        assert_eq!(map.get(5), Some("Med Bottle"));
        assert_eq!(map.get(15), Some("Prep Med"));
        assert_eq!(map.get(16), Some("Apply Med"));
        assert_eq!(map.get(3), None);
        assert_eq!(map.get(14), None);
        assert_eq!(map.get(0), None);
    }

    fn record_with(scores: &[(usize, u8)]) -> CompetencyRecord {
        let mut items = [None; NUM_RUBRIC_ITEMS];
        for &(item, s) in scores {
            items[item - 1] = Some(s);
        }
        CompetencyRecord::new("s", items).unwrap()
    }

    #[test]
    fn pct_all_fives_is_100() {
        let scores: Vec<(usize, u8)> = VIDEO_OBSERVABLE_ITEMS.iter().map(|&i| (i, 5)).collect();
        let rec = record_with(&scores);
        assert_eq!(rec.video_observable_pct, 100.0);
    }

    #[test]
    fn pct_all_ones_is_20() {
        let scores: Vec<(usize, u8)> = VIDEO_OBSERVABLE_ITEMS.iter().map(|&i| (i, 1)).collect();
        let rec = record_with(&scores);
        assert_eq!(rec.video_observable_pct, 20.0);
    }

    #[test]
    fn pct_mixed_hand_arithmetic() {
        // Flagged scores {4,4,3,4,4,3,4,4,4,3,4}; sum 41 over 11 items.
        let pattern = [4, 4, 3, 4, 4, 3, 4, 4, 4, 3, 4];
        let scores: Vec<(usize, u8)> = VIDEO_OBSERVABLE_ITEMS
            .iter()
            .zip(pattern)
            .map(|(&i, s)| (i, s))
            .collect();
        let rec = record_with(&scores);
        let expected = 100.0 * (41.0 / 11.0) / 5.0;
        assert!((rec.video_observable_pct - expected).abs() < 1e-12);
        assert!((rec.video_observable_pct - 74.5454545).abs() < 1e-6);
    }

    #[test]
    fn pct_errors_when_all_flagged_missing() {
        let mut items = [None; NUM_RUBRIC_ITEMS];
        items[2] = Some(4); // item 3 is not video-observable
        let err = CompetencyRecord::new("s", items).unwrap_err();
        assert!(matches!(err, Error::NoObservableItems(_)));
    }

    #[test]
    fn pct_is_monotone_in_any_present_item() {
        let flags = video_observable_flags();
        let base = record_with(&[(1, 3), (2, 2), (6, 4)]);
        let before = base.video_observable_pct;
        for &item in &VIDEO_OBSERVABLE_ITEMS {
            let mut items = base.items;
            if let Some(s) = items[item - 1] {
                if s < 5 {
                    items[item - 1] = Some(s + 1);
                    let bumped = CompetencyRecord::new("s", items).unwrap();
                    assert!(video_observable_pct(&bumped, &flags).unwrap() >= before);
                }
            }
        }
    }

    #[test]
    fn score_out_of_range_rejected() {
        let mut items = [None; NUM_RUBRIC_ITEMS];
        items[0] = Some(6);
        assert!(matches!(
            CompetencyRecord::new("s", items),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn feature_sequence_rejects_non_finite() {
        let res = FeatureSequence::new("s", 2, vec![1.0f64, f64::NAN], DEFAULT_FPS);
        assert!(matches!(res, Err(Error::Validation(_))));
    }

    #[test]
    fn normalized_rows_are_unit() {
        let fs = FeatureSequence::new("s", 2, vec![3.0f64, 4.0, 5.0, 12.0], DEFAULT_FPS).unwrap();
        let n = fs.normalized().unwrap();
        for row in n.rows() {
            assert!((crate::num::norm(row) - 1.0).abs() < 1e-12);
        }
        assert_eq!(n.row(0), &[0.6, 0.8]);
    }

    #[test]
    fn timeline_rejects_out_of_range_ids() {
        assert!(Timeline::new("s", vec![0, 17]).is_err());
        assert!(Timeline::new("s", vec![0, 16]).is_ok());
    }
}

//! Readers and writers for feature sequences, interval annotations, and
//! competency CSVs, plus dataset assembly.
//!
//! The binary feature format is `FSEQ`, little-endian u32 version (1), u32 T,
//! u32 D, then T·D IEEE-754 f32 values row-major. CSV features
//! (`frame,f0,f1,...`) are supported for hand-made fixtures.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::domain::{
    CompetencyRecord, FeatureSequence, Timeline, DEFAULT_FPS, NUM_ACTIONS, NUM_RUBRIC_ITEMS,
};
use crate::error::{Error, Result};
use crate::num::Real;

const MAGIC: &[u8; 4] = b"FSEQ";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Reads a feature file, dispatching on content: files starting with the
/// `FSEQ` magic are binary, anything else is parsed as CSV. Rows are returned
/// as stored, not normalized.
pub fn read_features<F: Real>(path: &Path) -> Result<FeatureSequence<F>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() >= 4 && &bytes[..4] == MAGIC {
        read_features_binary(path, &bytes)
    } else {
        read_features_csv(path, &bytes)
    }
}

fn session_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "session".to_string())
}

fn read_features_binary<F: Real>(path: &Path, bytes: &[u8]) -> Result<FeatureSequence<F>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(
            path,
            format!("header truncated: expected {HEADER_LEN} bytes, got {}", bytes.len()),
        ));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::parse(
            path,
            format!("unsupported version {version} at byte offset 4"),
        ));
    }
    let t = u32_at(8) as usize;
    let d = u32_at(12) as usize;
    if t == 0 || d == 0 {
        return Err(Error::parse(path, format!("empty matrix: T={t}, D={d}")));
    }
    let expected = HEADER_LEN + t * d * 4;
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            format!(
                "payload length mismatch: T={t}, D={d} requires {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(t * d);
    for i in 0..t * d {
        let off = HEADER_LEN + i * 4;
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::parse(
                path,
                format!("non-finite value at byte offset {off}"),
            ));
        }
        data.push(F::from_f32(v).unwrap());
    }
    FeatureSequence::new(session_id_of(path), d, data, DEFAULT_FPS)
}

fn read_features_csv<F: Real>(path: &Path, bytes: &[u8]) -> Result<FeatureSequence<F>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty file".to_string()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0].trim() != "frame" {
        return Err(Error::parse(
            path,
            format!("expected header frame,f0,... got {header:?}"),
        ));
    }
    let d = cols.len() - 1;
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (lineno, line) in lines {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != d + 1 {
            return Err(Error::parse(
                path,
                format!("row {}: expected {} fields, got {}", lineno + 1, d + 1, parts.len()),
            ));
        }
        let frame: usize = parts[0].trim().parse().map_err(|_| {
            Error::parse(path, format!("row {}: bad frame index {:?}", lineno + 1, parts[0]))
        })?;
        if frame != rows {
            return Err(Error::parse(
                path,
                format!("row {}: frame index {frame}, expected {rows}", lineno + 1),
            ));
        }
        for p in &parts[1..] {
            let v: f64 = p.trim().parse().map_err(|_| {
                Error::parse(path, format!("row {}: bad float {p:?}", lineno + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    format!("row {}: non-finite value", lineno + 1),
                ));
            }
            data.push(F::from_f64(v).unwrap());
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::parse(path, "no data rows".to_string()));
    }
    FeatureSequence::new(session_id_of(path), d, data, DEFAULT_FPS)
}

/// Writes the binary feature format; values are stored as f32.
pub fn write_features<F: Real>(path: &Path, feats: &FeatureSequence<F>) -> Result<()> {
    let t = feats.num_frames() as u32;
    let d = feats.dim() as u32;
    let mut bytes = Vec::with_capacity(HEADER_LEN + feats.raw().len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&t.to_le_bytes());
    bytes.extend_from_slice(&d.to_le_bytes());
    for v in feats.raw() {
        bytes.extend_from_slice(&(v.to_f32().unwrap()).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Reads `start_frame,end_frame,action_id` intervals into a frame timeline.
/// Intervals are half-open, must not overlap, and every uncovered frame is
/// background.
pub fn read_annotations(path: &Path, num_frames: usize) -> Result<Timeline> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = vec![0u8; num_frames];
    let mut intervals: Vec<(usize, usize, u8, usize)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            let h = line.trim();
            if h != "start_frame,end_frame,action_id" {
                return Err(Error::parse(path, format!("unexpected header {h:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::parse(
                path,
                format!("row {}: expected start,end,action", lineno + 1),
            ));
        }
        let start: usize = parts[0].trim().parse().map_err(|_| {
            Error::parse(path, format!("row {}: bad start {:?}", lineno + 1, parts[0]))
        })?;
        let end: usize = parts[1].trim().parse().map_err(|_| {
            Error::parse(path, format!("row {}: bad end {:?}", lineno + 1, parts[1]))
        })?;
        let action: u8 = parts[2].trim().parse().map_err(|_| {
            Error::parse(path, format!("row {}: bad action id {:?}", lineno + 1, parts[2]))
        })?;
        if end <= start {
            return Err(Error::parse(
                path,
                format!("row {}: end {end} must exceed start {start}", lineno + 1),
            ));
        }
        if end > num_frames {
            return Err(Error::parse(
                path,
                format!("row {}: end {end} exceeds num_frames {num_frames}", lineno + 1),
            ));
        }
        if action == 0 || action > NUM_ACTIONS {
            return Err(Error::parse(
                path,
                format!("row {}: action id {action} outside 1..=16", lineno + 1),
            ));
        }
        intervals.push((start, end, action, lineno + 1));
    }
    intervals.sort_by_key(|&(s, ..)| s);
    let mut prev_end = 0usize;
    for &(start, end, action, row) in &intervals {
        if start < prev_end {
            return Err(Error::parse(
                path,
                format!("row {row}: interval [{start},{end}) overlaps a previous one"),
            ));
        }
        for l in &mut labels[start..end] {
            *l = action;
        }
        prev_end = end;
    }
    Timeline::new(session_id_of(path), labels)
}

/// Writes a timeline back to interval CSV (maximal non-background runs).
pub fn write_annotations(path: &Path, timeline: &Timeline) -> Result<()> {
    let mut out = String::from("start_frame,end_frame,action_id\n");
    for seg in crate::sequence::run_length_encode(timeline, 1) {
        out.push_str(&format!("{},{},{}\n", seg.start, seg.end(), seg.label));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn competency_header() -> String {
    let mut h = String::from("session_id");
    for i in 1..=NUM_RUBRIC_ITEMS {
        h.push_str(&format!(",item_{i}"));
    }
    h
}

/// Reads the competency CSV (`session_id,item_1,...,item_23`; empty cells are
/// missing ratings). Each record's video-observable percentage is derived on
/// load.
pub fn read_competency(path: &Path) -> Result<Vec<CompetencyRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let expected_header = competency_header();
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != expected_header {
                return Err(Error::parse(
                    path,
                    format!("unexpected header; expected {expected_header:?}"),
                ));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != NUM_RUBRIC_ITEMS + 1 {
            return Err(Error::parse(
                path,
                format!(
                    "row {}: expected {} fields, got {}",
                    lineno + 1,
                    NUM_RUBRIC_ITEMS + 1,
                    parts.len()
                ),
            ));
        }
        let mut items = [None; NUM_RUBRIC_ITEMS];
        for (i, cell) in parts[1..].iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            let score: u8 = cell.parse().map_err(|_| {
                Error::parse(path, format!("row {}: bad score {cell:?}", lineno + 1))
            })?;
            if !(1..=5).contains(&score) {
                return Err(Error::Validation(format!(
                    "row {} of {}: item_{} score {score} outside 1..=5",
                    lineno + 1,
                    path.display(),
                    i + 1
                )));
            }
            items[i] = Some(score);
        }
        records.push(CompetencyRecord::new(parts[0].trim(), items)?);
    }
    Ok(records)
}

/// Writes competency records in the schema `read_competency` expects.
pub fn write_competency(path: &Path, records: &[CompetencyRecord]) -> Result<()> {
    let mut out = competency_header();
    out.push('\n');
    for r in records {
        out.push_str(&r.session_id);
        for item in &r.items {
            match item {
                Some(s) => out.push_str(&format!(",{s}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One session's aligned inputs.
#[derive(Debug, Clone)]
pub struct SessionData {
    pub features: FeatureSequence<f64>,
    pub gt: Timeline,
    pub competency: Option<CompetencyRecord>,
}

/// All loaded sessions, ordered by session id.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub sessions: Vec<SessionData>,
}

impl Dataset {
    pub fn push(&mut self, session: SessionData) -> Result<()> {
        if session.gt.len() != session.features.num_frames() {
            return Err(Error::Validation(format!(
                "session {}: timeline length {} != feature frames {}",
                session.features.session_id,
                session.gt.len(),
                session.features.num_frames()
            )));
        }
        if self
            .sessions
            .iter()
            .any(|s| s.features.session_id == session.features.session_id)
        {
            return Err(Error::Validation(format!(
                "duplicate session id {}",
                session.features.session_id
            )));
        }
        self.sessions.push(session);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Loads features and annotations from sibling directories, matching
    /// files by stem, with an optional competency CSV.
    pub fn load(
        features_dir: &Path,
        annotations_dir: &Path,
        competency_csv: Option<&Path>,
        fps: f64,
    ) -> Result<Dataset> {
        let mut feature_files: Vec<PathBuf> = fs::read_dir(features_dir)
            .map_err(|e| Error::io(features_dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("fseq") | Some("csv")
                )
            })
            .collect();
        feature_files.sort();
        if feature_files.is_empty() {
            return Err(Error::Validation(format!(
                "no .fseq or .csv feature files in {}",
                features_dir.display()
            )));
        }
        let records = match competency_csv {
            Some(p) => read_competency(p)?,
            None => Vec::new(),
        };
        let mut dataset = Dataset::default();
        let mut seen = BTreeSet::new();
        for file in feature_files {
            let mut features: FeatureSequence<f64> = read_features(&file)?;
            features.fps = fps;
            let stem = session_id_of(&file);
            if !seen.insert(stem.clone()) {
                return Err(Error::Validation(format!("duplicate session id {stem}")));
            }
            let ann = annotations_dir.join(format!("{stem}.csv"));
            if !ann.exists() {
                return Err(Error::Validation(format!(
                    "missing annotation file {}",
                    ann.display()
                )));
            }
            let gt = read_annotations(&ann, features.num_frames())?;
            let competency = records
                .iter()
                .find(|r| r.session_id == stem)
                .cloned();
            dataset.push(SessionData {
                features,
                gt,
                competency,
            })?;
        }
        Ok(dataset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    #[test]
    fn binary_identity_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.fseq");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"FSEQ");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for v in [1.0f32, 0.0, 0.0, 0.0, 1.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, bytes).unwrap();
        let f: FeatureSequence<f64> = read_features(&path).unwrap();
        assert_eq!(f.num_frames(), 2);
        assert_eq!(f.dim(), 3);
        assert_eq!(f.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(f.row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(f.session_id, "a");
    }

    #[test]
    fn csv_features_echo() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("b.csv");
        fs::write(&path, "frame,f0,f1\n0,0.5,0.5\n1,0.1,0.9\n").unwrap();
        let f: FeatureSequence<f64> = read_features(&path).unwrap();
        assert_eq!(f.num_frames(), 2);
        assert_eq!(f.dim(), 2);
        assert_eq!(f.row(1), &[0.1, 0.9]);
    }

    #[test]
    fn truncated_binary_names_expected_and_actual_bytes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.fseq");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"FSEQ");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&10u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        for _ in 0..9 * 2 {
            bytes.extend_from_slice(&1.0f32.to_le_bytes());
        }
        fs::write(&path, &bytes).unwrap();
        let err = read_features::<f64>(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("96"), "expected byte count in {msg}");
        assert!(msg.contains("88"), "actual byte count in {msg}");
    }

    #[test]
    fn bad_magic_falls_through_to_csv_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.fseq");
        fs::write(&path, b"NOPE....").unwrap();
        assert!(read_features::<f64>(&path).is_err());
    }

    #[test]
    fn non_finite_binary_value_reports_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("n.fseq");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"FSEQ");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        let msg = read_features::<f64>(&path).unwrap_err().to_string();
        assert!(msg.contains("offset 20"), "{msg}");
    }

    #[test]
    fn annotations_direct_construction() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.csv");
        fs::write(&path, "start_frame,end_frame,action_id\n0,2,3\n4,6,5\n").unwrap();
        let t = read_annotations(&path, 6).unwrap();
        assert_eq!(t.labels, vec![3, 3, 0, 0, 5, 5]);
    }

    #[test]
    fn annotations_empty_file_is_all_background() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("e.csv");
        fs::write(&path, "start_frame,end_frame,action_id\n").unwrap();
        let t = read_annotations(&path, 4).unwrap();
        assert_eq!(t.labels, vec![0, 0, 0, 0]);
    }

    #[test]
    fn annotations_reject_overlap() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("o.csv");
        fs::write(&path, "start_frame,end_frame,action_id\n0,3,1\n2,5,2\n").unwrap();
        let msg = read_annotations(&path, 6).unwrap_err().to_string();
        assert!(msg.contains("overlap"), "{msg}");
        assert!(msg.contains("row 3"), "{msg}");
    }

    #[test]
    fn annotations_reject_bad_rows() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("r1.csv");
        fs::write(&p1, "start_frame,end_frame,action_id\n0,2,17\n").unwrap();
        assert!(read_annotations(&p1, 6).is_err());
        let p2 = dir.path().join("r2.csv");
        fs::write(&p2, "start_frame,end_frame,action_id\n3,3,1\n").unwrap();
        assert!(read_annotations(&p2, 6).is_err());
        let p3 = dir.path().join("r3.csv");
        fs::write(&p3, "start_frame,end_frame,action_id\n0,9,1\n").unwrap();
        assert!(read_annotations(&p3, 6).is_err());
    }

    #[test]
    fn annotation_run_lengths_match_interval_lengths() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(
            &path,
            "start_frame,end_frame,action_id\n0,5,1\n7,9,2\n10,16,1\n",
        )
        .unwrap();
        let t = read_annotations(&path, 20).unwrap();
        let total: usize = crate::sequence::run_length_encode(&t, 1)
            .iter()
            .map(|s| s.duration)
            .sum();
        assert_eq!(total, 5 + 2 + 6);
    }

    fn comp_row(values: &[&str]) -> String {
        let mut header = String::from("session_id");
        for i in 1..=NUM_RUBRIC_ITEMS {
            header.push_str(&format!(",item_{i}"));
        }
        format!("{header}\ns1,{}\n", values.join(","))
    }

    #[test]
    fn competency_all_fives_is_100() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, comp_row(&["5"; 23])).unwrap();
        let recs = read_competency(&path).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].video_observable_pct, 100.0);
    }

    #[test]
    fn competency_missing_non_observable_item_has_no_effect() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut cells = vec!["3"; 23];
        cells[3] = ""; // item_4 is not video-observable
        fs::write(&path, comp_row(&cells)).unwrap();
        let recs = read_competency(&path).unwrap();
        assert_eq!(recs[0].video_observable_pct, 60.0);
        assert_eq!(recs[0].items[3], None);
    }

    #[test]
    fn competency_rejects_out_of_range_score() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut cells = vec!["3"; 23];
        cells[17] = "7"; // item_18
        fs::write(&path, comp_row(&cells)).unwrap();
        assert!(matches!(
            read_competency(&path),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn annotations_round_trip_through_write() {
        let t = Timeline::new("s", vec![0, 1, 1, 0, 0, 5, 5, 5, 0]).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("w.csv");
        write_annotations(&path, &t).unwrap();
        let back = read_annotations(&path, t.len()).unwrap();
        assert_eq!(back.labels, t.labels);
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_byte_identical(
            t in 1usize..20,
            d in 1usize..8,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..t * d)
                .map(|_| (rng.random::<f32>() * 10.0 - 5.0) as f64)
                .collect();
            let f = FeatureSequence::new("p", d, data, DEFAULT_FPS).unwrap();
            let dir = tempdir().unwrap();
            let p1 = dir.path().join("p.fseq");
            write_features(&p1, &f).unwrap();
            let bytes1 = fs::read(&p1).unwrap();
            let back: FeatureSequence<f64> = read_features(&p1).unwrap();
            let p2 = dir.path().join("q.fseq");
            write_features(&p2, &back).unwrap();
            let bytes2 = fs::read(&p2).unwrap();
            prop_assert_eq!(bytes1, bytes2);
            prop_assert_eq!(back.raw(), f.raw());
        }
    }
}

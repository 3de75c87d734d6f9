//! Process mining over macro-categories: directly-follows models with
//! conditional transition probabilities, model diffing, and DOT export.

use std::collections::{BTreeMap, BTreeSet};

use crate::domain::{MacroMapping, Segment};
use crate::error::{Error, Result};

/// Default display threshold for diffed edges.
pub const DEFAULT_DISPLAY_THRESHOLD: f64 = 0.05;

/// A segment relabeled to its macro-category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacroSegment {
    pub name: String,
    pub start: usize,
    pub duration: usize,
}

/// Relabels segments by macro-category and merges adjacent equal-macro
/// segments, summing durations. Unmapped labels are an error.
pub fn to_macro(segs: &[Segment], mapping: &MacroMapping) -> Result<Vec<MacroSegment>> {
    let mut out: Vec<MacroSegment> = Vec::new();
    for seg in segs {
        let name = mapping
            .get(seg.label)
            .ok_or(Error::UnmappedLabel(seg.label))?;
        match out.last_mut() {
            Some(last) if last.name == name => last.duration += seg.duration,
            _ => out.push(MacroSegment {
                name: name.to_string(),
                start: seg.start,
                duration: seg.duration,
            }),
        }
    }
    Ok(out)
}

/// Macro-name sequence without merging; consecutive equal names survive and
/// become self-loop counts when a model is built with the micro flag on.
pub fn to_macro_sequence(segs: &[Segment], mapping: &MacroMapping) -> Result<Vec<String>> {
    segs.iter()
        .map(|seg| {
            mapping
                .get(seg.label)
                .map(str::to_string)
                .ok_or(Error::UnmappedLabel(seg.label))
        })
        .collect()
}

/// Directly-follows graph with occurrence counts and conditional transition
/// probabilities P(to | from).
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    /// Node occurrence counts.
    pub nodes: BTreeMap<String, u64>,
    /// (from, to) -> raw count.
    pub counts: BTreeMap<(String, String), u64>,
}

impl ProcessModel {
    pub fn probability(&self, from: &str, to: &str) -> f64 {
        let count = match self.counts.get(&(from.to_string(), to.to_string())) {
            Some(&c) => c as f64,
            None => return 0.0,
        };
        count / self.outgoing_total(from) as f64
    }

    fn outgoing_total(&self, from: &str) -> u64 {
        self.counts
            .iter()
            .filter(|((f, _), _)| f == from)
            .map(|(_, &c)| c)
            .sum()
    }

    /// All edges as (from, to, count, probability), sorted by (from, to).
    pub fn edges(&self) -> Vec<(String, String, u64, f64)> {
        let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
        for ((from, _), &c) in &self.counts {
            *totals.entry(from).or_default() += c;
        }
        self.counts
            .iter()
            .map(|((from, to), &c)| {
                let p = c as f64 / totals[from.as_str()] as f64;
                (from.clone(), to.clone(), c, p)
            })
            .collect()
    }

    pub fn edges_csv(&self) -> String {
        let mut out = String::from("from,to,count,probability\n");
        for (from, to, c, p) in self.edges() {
            out.push_str(&format!("{from},{to},{c},{p}\n"));
        }
        out
    }
}

/// Pools consecutive-pair counts across sessions of macro-name sequences.
///
/// With `count_self_loops_from_micro` set, consecutive equal names count as
/// self-loop transitions; otherwise runs of equal names are collapsed first
/// and no self-loops can appear.
pub fn build_model(sessions: &[Vec<String>], count_self_loops_from_micro: bool) -> Result<ProcessModel> {
    if sessions.iter().all(|s| s.is_empty()) {
        return Err(Error::Validation(
            "cannot build a process model from no segments".into(),
        ));
    }
    let mut nodes: BTreeMap<String, u64> = BTreeMap::new();
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    for session in sessions {
        let seq: Vec<&String> = if count_self_loops_from_micro {
            session.iter().collect()
        } else {
            let mut collapsed: Vec<&String> = Vec::new();
            for name in session {
                if collapsed.last().map(|l| *l == name) != Some(true) {
                    collapsed.push(name);
                }
            }
            collapsed
        };
        for name in &seq {
            *nodes.entry((*name).clone()).or_default() += 1;
        }
        for w in seq.windows(2) {
            *counts.entry((w[0].clone(), w[1].clone())).or_default() += 1;
        }
    }
    Ok(ProcessModel { nodes, counts })
}

/// An edge present in a diff, with its probability in each model.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffEdge {
    pub from: String,
    pub to: String,
    pub p1: f64,
    pub p2: f64,
}

/// Edges displayed (probability at or above threshold) in both models vs
/// exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDiff {
    pub threshold: f64,
    pub shared: Vec<DiffEdge>,
    pub unique_to_first: Vec<DiffEdge>,
    pub unique_to_second: Vec<DiffEdge>,
}

/// Compares two models edge-wise at a display threshold.
pub fn diff_models(m1: &ProcessModel, m2: &ProcessModel, display_threshold: f64) -> ModelDiff {
    let mut keys: BTreeSet<(String, String)> = BTreeSet::new();
    keys.extend(m1.counts.keys().cloned());
    keys.extend(m2.counts.keys().cloned());
    let mut shared = Vec::new();
    let mut unique_to_first = Vec::new();
    let mut unique_to_second = Vec::new();
    for (from, to) in keys {
        let p1 = m1.probability(&from, &to);
        let p2 = m2.probability(&from, &to);
        let edge = DiffEdge {
            from,
            to,
            p1,
            p2,
        };
        match (p1 >= display_threshold, p2 >= display_threshold) {
            (true, true) => shared.push(edge),
            (true, false) => unique_to_first.push(edge),
            (false, true) => unique_to_second.push(edge),
            (false, false) => {}
        }
    }
    ModelDiff {
        threshold: display_threshold,
        shared,
        unique_to_first,
        unique_to_second,
    }
}

fn pct_label(p: f64) -> String {
    format!("{}%", (p * 100.0).round() as i64)
}

fn quoted(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\\\""))
}

/// Deterministic DOT text for a single model: nodes sorted lexicographically,
/// edges sorted by (from, to), probabilities as whole percents.
pub fn export_dot(model: &ProcessModel, graph_name: &str) -> String {
    let mut out = format!("digraph {} {{\n", quoted(graph_name));
    for (name, count) in &model.nodes {
        out.push_str(&format!(
            "  {} [label=\"{} ({})\"];\n",
            quoted(name),
            name,
            count
        ));
    }
    for (from, to, _, p) in model.edges() {
        out.push_str(&format!(
            "  {} -> {} [label=\"{}\"];\n",
            quoted(&from),
            quoted(&to),
            pct_label(p)
        ));
    }
    out.push_str("}\n");
    out
}

/// DOT text for a diff: shared edges green, unique edges red, labels showing
/// both probabilities for shared edges.
pub fn export_dot_diff(diff: &ModelDiff, graph_name: &str) -> String {
    let mut nodes: BTreeSet<&str> = BTreeSet::new();
    let all_edges = diff
        .shared
        .iter()
        .map(|e| (e, "shared"))
        .chain(diff.unique_to_first.iter().map(|e| (e, "first")))
        .chain(diff.unique_to_second.iter().map(|e| (e, "second")));
    let mut lines: Vec<String> = Vec::new();
    for (edge, side) in all_edges {
        nodes.insert(&edge.from);
        nodes.insert(&edge.to);
        let (color, label) = match side {
            "shared" => (
                "green",
                format!("{} | {}", pct_label(edge.p1), pct_label(edge.p2)),
            ),
            "first" => ("red", pct_label(edge.p1)),
            _ => ("red", pct_label(edge.p2)),
        };
        lines.push(format!(
            "  {} -> {} [label=\"{}\", color={}];\n",
            quoted(&edge.from),
            quoted(&edge.to),
            label,
            color
        ));
    }
    lines.sort();
    let mut out = format!("digraph {} {{\n", quoted(graph_name));
    for name in nodes {
        out.push_str(&format!("  {};\n", quoted(name)));
    }
    for line in lines {
        out.push_str(&line);
    }
    out.push_str("}\n");
    out
}

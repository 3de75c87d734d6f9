//! `actseg`: few-shot action timeline recognition and competency analytics.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 i/o error. Diagnostics
//! go to stderr; data goes to the files named by `--out`.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use actseg::domain::{MacroMapping, Taxonomy, Timeline};
use actseg::harness::{
    competency_analysis, compute_confounds, confound_analysis, cross_sample_eval,
    loo_decode_fold, parse_reports_csv, per_item_analysis, within_sample_eval_all, AssocRow,
    ConfoundRecord, ConfoundRow, EvalConfig, ItemRow, WithinReport,
};
use actseg::ingest::{read_annotations, read_competency, Dataset};
use actseg::metrics::{cohens_kappa, label_set_jaccard, miou};
use actseg::procmodel::{
    build_model, diff_models, export_dot, export_dot_diff, to_macro_sequence,
};
use actseg::sequence::{run_length_encode, segments_to_csv, sequence_features};
use actseg::stats::median_split;
use actseg::synth::{generate_cohort, write_cohort, SynthConfig};
use actseg::{Error, Result};

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(
    name = "actseg",
    version,
    about = "Few-shot action timeline recognition, sequence analytics, and competency association"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a deterministic synthetic cohort
    Synth(SynthArgs),
    /// Leave-one-out decode of sessions into predicted segments and timelines
    Decode(DecodeArgs),
    /// Within-sample few-shot evaluation (support and query from the same session)
    EvalWithin(EvalWithinArgs),
    /// Cross-sample leave-one-out evaluation
    EvalCross(EvalCrossArgs),
    /// Extract segments and sequence features from timelines
    Sequence(SequenceArgs),
    /// Associate per-session recognition metrics with competency
    Correlate(CorrelateArgs),
    /// Per-rubric-item association with per-session MOF
    PerItem(PerItemArgs),
    /// Per-session annotation confound variables
    Confounds(ConfoundsArgs),
    /// Build and diff macro-category process models across competency groups
    Procmodel(ProcmodelArgs),
    /// Inter-rater reliability between two annotation directories
    Irr(IrrArgs),
}

/// Stage-1/2 flags shared by the decoding and evaluation subcommands.
#[derive(Args, Debug, Clone, Serialize)]
struct EvalFlags {
    /// Softmax temperature for emission log-probabilities
    #[arg(long, default_value_t = 5.0)]
    tau: f64,
    /// Laplace pseudo-count for transitions and priors
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Support frames per class (per support session in cross-sample)
    #[arg(long, default_value_t = 10)]
    shots: usize,
    /// Prototype strategy: mean | clustered
    #[arg(long, default_value = "mean")]
    proto: String,
    /// Sub-centroids per class for the clustered strategy
    #[arg(long, default_value_t = 3)]
    kmeans_k: usize,
    /// Minimum predicted segment duration in frames
    #[arg(long, default_value_t = 25)]
    min_seg_frames: usize,
    /// Segmental F1 overlap thresholds for the per-threshold table
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.25, 0.5])]
    f1_thresholds: Vec<f64>,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recording frame rate
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
    /// Evaluate background frames too
    #[arg(long)]
    include_background: bool,
}

impl EvalFlags {
    fn eval_config(&self, replicates: usize) -> Result<EvalConfig> {
        Ok(EvalConfig {
            shots: self.shots,
            strategy: self.proto.parse()?,
            kmeans_k: self.kmeans_k,
            tau: self.tau,
            alpha: self.alpha,
            min_seg_frames: self.min_seg_frames,
            f1_thresholds: self.f1_thresholds.clone(),
            primary_f1_threshold: 0.5,
            include_background: self.include_background,
            seed: self.seed,
            replicates,
        })
    }
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    /// Output directory for features/, annotations/, and competency.csv
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 22)]
    sessions: usize,
    #[arg(long, default_value_t = 14)]
    classes: u8,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 2700)]
    frames_min: usize,
    #[arg(long, default_value_t = 3300)]
    frames_max: usize,
    #[arg(long, default_value_t = 75.0)]
    mean_seg_frames: f64,
    #[arg(long, default_value_t = 50.0)]
    mean_gap_frames: f64,
    /// Feature noise std at competency 0
    #[arg(long, default_value_t = 0.3)]
    sigma0: f64,
    /// Additional feature noise std at competency 100
    #[arg(long, default_value_t = 0.6)]
    sigma1: f64,
    /// Uniform transition mixing at competency 0
    #[arg(long, default_value_t = 0.05)]
    eps0: f64,
    /// Additional uniform transition mixing at competency 100
    #[arg(long, default_value_t = 0.4)]
    eps1: f64,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
}

#[derive(Args, Debug, Serialize)]
struct DecodeArgs {
    /// Directory of .fseq/.csv feature files
    #[arg(long)]
    features: PathBuf,
    /// Directory of interval annotation CSVs (one per session, same stem)
    #[arg(long)]
    annotations: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Decode only this session id
    #[arg(long)]
    session: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    flags: EvalFlags,
}

#[derive(Args, Debug, Serialize)]
struct EvalWithinArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Support redraws per session
    #[arg(long, default_value_t = 5)]
    replicates: usize,
    #[command(flatten)]
    #[serde(flatten)]
    flags: EvalFlags,
}

#[derive(Args, Debug, Serialize)]
struct EvalCrossArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Output CSV path (per-session reports; `<stem>_f1.csv` sits beside it)
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    flags: EvalFlags,
}

#[derive(Args, Debug, Serialize)]
struct SequenceArgs {
    /// Directory of `<id>.timeline.csv` files (e.g. from decode)
    #[arg(long, conflicts_with_all = ["features", "annotations"])]
    timelines: Option<PathBuf>,
    /// Feature directory (ground-truth route)
    #[arg(long, requires = "annotations")]
    features: Option<PathBuf>,
    /// Annotation directory (ground-truth route)
    #[arg(long, requires = "features")]
    annotations: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 25)]
    min_seg_frames: usize,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
}

#[derive(Args, Debug, Serialize)]
struct CorrelateArgs {
    /// Per-session reports CSV (from eval-cross)
    #[arg(long)]
    reports: PathBuf,
    /// Competency CSV
    #[arg(long)]
    competency: PathBuf,
    /// Output CSV path (`<stem>_groups.csv` and `<stem>_confounds.csv` sit beside it)
    #[arg(long)]
    out: PathBuf,
    /// Feature directory, enables the confound-control table
    #[arg(long, requires = "annotations")]
    features: Option<PathBuf>,
    /// Annotation directory, enables the confound-control table
    #[arg(long, requires = "features")]
    annotations: Option<PathBuf>,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
}

#[derive(Args, Debug, Serialize)]
struct PerItemArgs {
    #[arg(long)]
    reports: PathBuf,
    #[arg(long)]
    competency: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ConfoundsArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
}

#[derive(Args, Debug, Serialize)]
struct ProcmodelArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    competency: PathBuf,
    /// Output directory for higher/lower/diff DOT files and edge CSVs
    #[arg(long)]
    out: PathBuf,
    /// Minimum edge probability for an edge to be displayed in the diff
    #[arg(long, default_value_t = 0.05)]
    display_threshold: f64,
    #[arg(long, default_value_t = 25)]
    min_seg_frames: usize,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
    /// Count same-macro micro transitions as self-loops (on unless disabled)
    #[arg(long)]
    no_micro_self_loops: bool,
    /// Skip segments whose label has no macro-category instead of failing
    #[arg(long)]
    skip_unmapped: bool,
    /// Taxonomy + macro mapping override CSV (id,name,macro)
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct IrrArgs {
    /// First rater's annotation directory
    #[arg(long)]
    annotations_a: PathBuf,
    /// Second rater's annotation directory
    #[arg(long)]
    annotations_b: PathBuf,
    /// Feature directory (supplies frame counts)
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Agreement sampling rate in Hz
    #[arg(long, default_value_t = 1.0)]
    hz: f64,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Decode(args) => run_decode(args),
        Command::EvalWithin(args) => run_eval_within(args),
        Command::EvalCross(args) => run_eval_cross(args),
        Command::Sequence(args) => run_sequence(args),
        Command::Correlate(args) => run_correlate(args),
        Command::PerItem(args) => run_per_item(args),
        Command::Confounds(args) => run_confounds(args),
        Command::Procmodel(args) => run_procmodel(args),
        Command::Irr(args) => run_irr(args),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// `rpt.csv` + `_f1` -> `rpt_f1.csv`, next to the original.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|s| format!(".{}", s.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}{ext}"))
}

fn timeline_csv(t: &Timeline) -> String {
    let mut out = String::from("frame,label\n");
    for (i, l) in t.labels.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    out
}

fn read_timeline_csv(path: &Path) -> Result<Timeline> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "frame,label" {
                return Err(Error::parse(path, format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::parse(path, format!("bad row {}", i + 1)));
        }
        let frame: usize = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, format!("bad frame on row {}", i + 1)))?;
        if frame != labels.len() {
            return Err(Error::parse(
                path,
                format!("row {}: frame {frame} out of order", i + 1),
            ));
        }
        let label: u8 = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, format!("bad label on row {}", i + 1)))?;
        labels.push(label);
    }
    let stem = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
        .trim_end_matches(".timeline.csv")
        .to_string();
    Timeline::new(stem, labels)
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_sessions: args.sessions,
        n_classes: args.classes,
        feat_dim: args.dim,
        frames_min: args.frames_min,
        frames_max: args.frames_max,
        base_transitions: None,
        sigma0: args.sigma0,
        sigma1: args.sigma1,
        eps0: args.eps0,
        eps1: args.eps1,
        mean_seg_frames: args.mean_seg_frames,
        mean_gap_frames: args.mean_gap_frames,
        fps: args.fps,
        seed: args.seed,
    };
    let dataset = generate_cohort(&cfg)?;
    create_dir(&args.out)?;
    write_cohort(&dataset, &args.out)?;
    let manifest = RunManifest::new("synth", Some(args.seed), &args)?;
    manifest.write_inside(&args.out)?;
    let total_frames: usize = dataset.sessions.iter().map(|s| s.gt.len()).sum();
    println!(
        "synth: wrote {} sessions ({} frames, dim {}) to {}",
        dataset.len(),
        total_frames,
        args.dim,
        args.out.display()
    );
    Ok(())
}

fn load_dataset(features: &Path, annotations: &Path, competency: Option<&Path>, fps: f64) -> Result<Dataset> {
    Dataset::load(features, annotations, competency, fps)
}

fn run_decode(args: DecodeArgs) -> Result<()> {
    let cfg = args.flags.eval_config(1)?;
    let dataset = load_dataset(&args.features, &args.annotations, None, args.flags.fps)?;
    create_dir(&args.out)?;
    let indices: Vec<usize> = match &args.session {
        Some(id) => {
            let i = dataset
                .sessions
                .iter()
                .position(|s| &s.features.session_id == id)
                .ok_or_else(|| Error::Validation(format!("unknown session {id:?}")))?;
            vec![i]
        }
        None => (0..dataset.len()).collect(),
    };
    for i in indices {
        let decoded = loo_decode_fold(&dataset, i, &cfg)?;
        let id = &dataset.sessions[i].features.session_id;
        let segs = run_length_encode(&decoded.pred, cfg.min_seg_frames);
        write_file(&args.out.join(format!("{id}.segments.csv")), &segments_to_csv(&segs))?;
        write_file(
            &args.out.join(format!("{id}.timeline.csv")),
            &timeline_csv(&decoded.pred),
        )?;
        let note = if decoded.unreachable.is_empty() {
            String::new()
        } else {
            format!(" (unreachable labels: {:?})", decoded.unreachable)
        };
        println!("decode: {id}: {} segments{note}", segs.len());
    }
    let mut manifest = RunManifest::new("decode", Some(args.flags.seed), &args)?;
    manifest.add_dir(&args.features)?;
    manifest.add_dir(&args.annotations)?;
    manifest.write_inside(&args.out)?;
    Ok(())
}

fn run_eval_within(args: EvalWithinArgs) -> Result<()> {
    let cfg = args.flags.eval_config(args.replicates)?;
    let dataset = load_dataset(&args.features, &args.annotations, None, args.flags.fps)?;
    let reports = within_sample_eval_all(&dataset, &cfg)?;
    let mut csv = String::from(WithinReport::CSV_HEADER);
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    write_file(&args.out, &csv)?;
    let mut manifest = RunManifest::new("eval-within", Some(args.flags.seed), &args)?;
    manifest.add_dir(&args.features)?;
    manifest.add_dir(&args.annotations)?;
    manifest.write_beside(&args.out)?;
    let mofs: Vec<f64> = reports.iter().map(|r| r.mof_mean).collect();
    let (mean, std) = actseg::harness::mean_std(&mofs);
    println!(
        "eval-within: {} sessions, shots {}, MOF {:.3} ± {:.3}",
        reports.len(),
        cfg.shots,
        mean,
        std
    );
    Ok(())
}

fn run_eval_cross(args: EvalCrossArgs) -> Result<()> {
    let cfg = args.flags.eval_config(1)?;
    let dataset = load_dataset(&args.features, &args.annotations, None, args.flags.fps)?;
    let cross = cross_sample_eval(&dataset, &cfg)?;
    write_file(&args.out, &cross.reports_csv())?;
    write_file(&sibling(&args.out, "_f1"), &cross.f1_thresholds_csv())?;
    let mut manifest = RunManifest::new("eval-cross", Some(args.flags.seed), &args)?;
    manifest.add_dir(&args.features)?;
    manifest.add_dir(&args.annotations)?;
    manifest.write_beside(&args.out)?;
    println!(
        "eval-cross: {} folds, shots {}, proto {}: MOF {:.3} ± {:.3}, mIoU {:.3} ± {:.3}, F1 {:.3} ± {:.3}",
        cross.folds.len(),
        cfg.shots,
        args.flags.proto,
        cross.mof_mean,
        cross.mof_std,
        cross.miou_mean,
        cross.miou_std,
        cross.f1_mean,
        cross.f1_std
    );
    for f in &cross.folds {
        if !f.unreachable.is_empty() {
            eprintln!(
                "note: session {} has labels absent from every support session: {:?}",
                f.eval.report.session_id, f.unreachable
            );
        }
    }
    Ok(())
}

fn run_sequence(args: SequenceArgs) -> Result<()> {
    let timelines: Vec<Timeline> = match (&args.timelines, &args.features, &args.annotations) {
        (Some(dir), None, None) => {
            let mut files: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(".timeline.csv"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::Validation(format!(
                    "no *.timeline.csv files in {}",
                    dir.display()
                )));
            }
            files.iter().map(|f| read_timeline_csv(f)).collect::<Result<_>>()?
        }
        (None, Some(features), Some(annotations)) => {
            let dataset = load_dataset(features, annotations, None, args.fps)?;
            dataset.sessions.into_iter().map(|s| s.gt).collect()
        }
        _ => {
            return Err(Error::Validation(
                "sequence needs either --timelines or both --features and --annotations".into(),
            ))
        }
    };
    create_dir(&args.out)?;
    let mut feat_csv = String::from("session_id,transition_count,unique_action_count,screen_time_ratio\n");
    for t in &timelines {
        let segs = run_length_encode(t, args.min_seg_frames);
        write_file(
            &args.out.join(format!("{}.segments.csv", t.session_id)),
            &segments_to_csv(&segs),
        )?;
        let f = sequence_features(&segs, t);
        feat_csv.push_str(&format!(
            "{},{},{},{}\n",
            t.session_id, f.transition_count, f.unique_action_count, f.screen_time_ratio
        ));
    }
    write_file(&args.out.join("sequence_features.csv"), &feat_csv)?;
    let mut manifest = RunManifest::new("sequence", None, &args)?;
    if let Some(dir) = &args.timelines {
        manifest.add_dir(dir)?;
    }
    if let (Some(f), Some(a)) = (&args.features, &args.annotations) {
        manifest.add_dir(f)?;
        manifest.add_dir(a)?;
    }
    manifest.write_inside(&args.out)?;
    println!("sequence: processed {} sessions into {}", timelines.len(), args.out.display());
    Ok(())
}

fn assoc_csv(rows: &[AssocRow]) -> String {
    let mut out = String::from(AssocRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

fn run_correlate(args: CorrelateArgs) -> Result<()> {
    let reports_text = fs::read_to_string(&args.reports).map_err(|e| Error::io(&args.reports, e))?;
    let reports = parse_reports_csv(&reports_text)?;
    let records = read_competency(&args.competency)?;
    let rows = competency_analysis(&reports, &records)?;
    write_file(&args.out, &assoc_csv(&rows))?;

    // Median-split group comparison over the joined sessions.
    let joined = actseg::harness::join_sessions(&reports, &records);
    let scores: Vec<f64> = joined.iter().map(|(_, c)| c.video_observable_pct).collect();
    let metrics = vec![
        ("competency".to_string(), scores.clone()),
        ("mof".to_string(), joined.iter().map(|(r, _)| r.mof).collect()),
        ("miou".to_string(), joined.iter().map(|(r, _)| r.miou).collect()),
        ("f1".to_string(), joined.iter().map(|(r, _)| r.f1).collect()),
    ];
    let groups = median_split(&scores, &metrics)?;
    let mut gcsv = String::from("metric,group,mean,std,n\n");
    for m in &groups.metrics {
        if let Some(s) = m.higher {
            gcsv.push_str(&format!("{},higher,{},{},{}\n", m.name, s.mean, s.std, s.n));
        }
        if let Some(s) = m.lower {
            gcsv.push_str(&format!("{},lower,{},{},{}\n", m.name, s.mean, s.std, s.n));
        }
    }
    write_file(&sibling(&args.out, "_groups"), &gcsv)?;

    let mut manifest = RunManifest::new("correlate", None, &args)?;
    manifest.add_file(&args.reports)?;
    manifest.add_file(&args.competency)?;

    if let (Some(features), Some(annotations)) = (&args.features, &args.annotations) {
        let dataset = load_dataset(features, annotations, None, args.fps)?;
        let confounds = compute_confounds(&dataset);
        let crows = confound_analysis(&reports, &records, &confounds)?;
        let mut ccsv = String::from(ConfoundRow::CSV_HEADER);
        ccsv.push('\n');
        for r in &crows {
            ccsv.push_str(&r.to_csv_row());
            ccsv.push('\n');
        }
        write_file(&sibling(&args.out, "_confounds"), &ccsv)?;
        manifest.add_dir(features)?;
        manifest.add_dir(annotations)?;
    }
    manifest.write_beside(&args.out)?;

    println!("correlate: split at {:.2}% ({} higher / {} lower)", groups.split_value, groups.higher_n, groups.lower_n);
    for r in &rows {
        match (r.rho, r.p, r.pearson_r) {
            (Some(rho), Some(p), Some(pr)) => {
                println!("  {:<18} rho {:+.3}  p {:.4}  r {:+.3}  (n {})", r.feature, rho, p, pr, r.n)
            }
            _ => println!(
                "  {:<18} {}",
                r.feature,
                r.status.as_deref().unwrap_or("unavailable")
            ),
        }
    }
    Ok(())
}

fn run_per_item(args: PerItemArgs) -> Result<()> {
    let reports_text = fs::read_to_string(&args.reports).map_err(|e| Error::io(&args.reports, e))?;
    let reports = parse_reports_csv(&reports_text)?;
    let records = read_competency(&args.competency)?;
    let rows = per_item_analysis(&reports, &records)?;
    let mut csv = String::from(ItemRow::CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    write_file(&args.out, &csv)?;
    let mut manifest = RunManifest::new("per-item", None, &args)?;
    manifest.add_file(&args.reports)?;
    manifest.add_file(&args.competency)?;
    manifest.write_beside(&args.out)?;
    println!("per-item: wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn run_confounds(args: ConfoundsArgs) -> Result<()> {
    let dataset = load_dataset(&args.features, &args.annotations, None, args.fps)?;
    let confounds = compute_confounds(&dataset);
    let mut csv = String::from(ConfoundRecord::CSV_HEADER);
    csv.push('\n');
    for c in &confounds {
        csv.push_str(&c.to_csv_row());
        csv.push('\n');
    }
    write_file(&args.out, &csv)?;
    let mut manifest = RunManifest::new("confounds", None, &args)?;
    manifest.add_dir(&args.features)?;
    manifest.add_dir(&args.annotations)?;
    manifest.write_beside(&args.out)?;
    println!("confounds: wrote {} sessions to {}", confounds.len(), args.out.display());
    Ok(())
}

fn run_procmodel(args: ProcmodelArgs) -> Result<()> {
    let mapping = match &args.taxonomy {
        Some(path) => Taxonomy::from_csv(path)?.1,
        None => MacroMapping::default(),
    };
    let dataset = load_dataset(
        &args.features,
        &args.annotations,
        Some(&args.competency),
        args.fps,
    )?;
    let rated: Vec<_> = dataset
        .sessions
        .iter()
        .filter(|s| s.competency.is_some())
        .collect();
    if rated.len() < 2 {
        return Err(Error::Validation(
            "process models need at least 2 sessions with competency records".into(),
        ));
    }
    let scores: Vec<f64> = rated
        .iter()
        .map(|s| s.competency.as_ref().unwrap().video_observable_pct)
        .collect();
    let split = median_split(&scores, &[])?;
    let mut higher = Vec::new();
    let mut lower = Vec::new();
    for (s, &score) in rated.iter().zip(&scores) {
        let mut segs = run_length_encode(&s.gt, args.min_seg_frames);
        if args.skip_unmapped {
            segs.retain(|seg| mapping.contains(seg.label));
        }
        let seq = to_macro_sequence(&segs, &mapping)?;
        if score >= split.split_value {
            higher.push(seq);
        } else {
            lower.push(seq);
        }
    }
    let self_loops = !args.no_micro_self_loops;
    let higher_model = build_model(&higher, self_loops)?;
    let lower_model = build_model(&lower, self_loops)?;
    let diff = diff_models(&higher_model, &lower_model, args.display_threshold);
    create_dir(&args.out)?;
    write_file(&args.out.join("higher.dot"), &export_dot(&higher_model, "higher"))?;
    write_file(&args.out.join("lower.dot"), &export_dot(&lower_model, "lower"))?;
    write_file(&args.out.join("diff.dot"), &export_dot_diff(&diff, "diff"))?;
    write_file(&args.out.join("higher_edges.csv"), &higher_model.edges_csv())?;
    write_file(&args.out.join("lower_edges.csv"), &lower_model.edges_csv())?;
    let mut manifest = RunManifest::new("procmodel", None, &args)?;
    manifest.add_dir(&args.features)?;
    manifest.add_dir(&args.annotations)?;
    manifest.add_file(&args.competency)?;
    if let Some(t) = &args.taxonomy {
        manifest.add_file(t)?;
    }
    manifest.write_inside(&args.out)?;
    println!(
        "procmodel: split at {:.2}% ({} higher / {} lower); {} shared, {} unique-to-higher, {} unique-to-lower edges",
        split.split_value,
        higher.len(),
        lower.len(),
        diff.shared.len(),
        diff.unique_to_first.len(),
        diff.unique_to_second.len()
    );
    Ok(())
}

fn run_irr(args: IrrArgs) -> Result<()> {
    let mut feature_files: Vec<PathBuf> = fs::read_dir(&args.features)
        .map_err(|e| Error::io(&args.features, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("fseq") | Some("csv")
            )
        })
        .collect();
    feature_files.sort();
    let mut csv = String::from("session_id,kappa,per_class_iou,label_set_jaccard\n");
    let mut kappas = Vec::new();
    let mut processed = 0usize;
    for file in feature_files {
        let stem = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let a_path = args.annotations_a.join(format!("{stem}.csv"));
        let b_path = args.annotations_b.join(format!("{stem}.csv"));
        if !a_path.exists() || !b_path.exists() {
            continue;
        }
        let feats: actseg::domain::FeatureSequence<f64> = actseg::ingest::read_features(&file)?;
        let a = read_annotations(&a_path, feats.num_frames())?;
        let b = read_annotations(&b_path, feats.num_frames())?;
        let kappa = cohens_kappa(&a, &b, args.hz, args.fps)?;
        let iou = miou(&b, &a, false)?;
        let jac = label_set_jaccard(&a, &b);
        csv.push_str(&format!("{stem},{kappa},{iou},{jac}\n"));
        kappas.push(kappa);
        processed += 1;
    }
    if processed == 0 {
        return Err(Error::Validation(
            "no sessions annotated by both raters".into(),
        ));
    }
    write_file(&args.out, &csv)?;
    let mut manifest = RunManifest::new("irr", None, &args)?;
    manifest.add_dir(&args.annotations_a)?;
    manifest.add_dir(&args.annotations_b)?;
    manifest.add_dir(&args.features)?;
    manifest.write_beside(&args.out)?;
    let (mean, std) = actseg::harness::mean_std(&kappas);
    println!("irr: {processed} sessions, mean kappa {mean:.3} ± {std:.3}");
    Ok(())
}

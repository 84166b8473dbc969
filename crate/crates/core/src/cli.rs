//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 invalid input data.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::{ConfigFile, Level};
use crate::metrics::{pct, EvaluationCounts, MetricsReport};
use crate::mot_io::{self, DetectionSet, MotIoError};
use crate::pipeline::{run_sequence, Pipeline};
use crate::synth::Scenario;
use crate::trackers::{TrackedDetection, TrackerKind};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Io(_) => 2,
            Self::Data(_) => 3,
        }
    }
}

impl From<MotIoError> for CliError {
    fn from(e: MotIoError) -> Self {
        if e.is_io() {
            Self::Io(e.to_string())
        } else {
            Self::Data(e.to_string())
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "windowtrack", version, about = "Windowed two-level multi-object tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track a MOT detection file and write MOT results.
    Track(TrackArgs),
    /// Score result files against ground truth.
    Eval(EvalArgs),
    /// Compare a base tracker with WindowTracker at several window sizes.
    Sweep(SweepArgs),
    /// Generate a synthetic sequence (gt.txt and det.txt).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Sort,
    Bytetrack,
    Ocsort,
}

impl From<KindArg> for TrackerKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Sort => Self::Sort,
            KindArg::Bytetrack => Self::ByteTrack,
            KindArg::Ocsort => Self::OcSort,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum L2Arg {
    Bytetrack,
    Ocsort,
}

impl From<L2Arg> for TrackerKind {
    fn from(k: L2Arg) -> Self {
        match k {
            L2Arg::Bytetrack => Self::ByteTrack,
            L2Arg::Ocsort => Self::OcSort,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Csv,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// MOT detection file.
    #[arg(long)]
    pub det: PathBuf,
    /// Output results file.
    #[arg(long)]
    pub out: PathBuf,
    /// Base (L1) tracker. Falls back to the config file.
    #[arg(long, value_enum)]
    pub l1: Option<KindArg>,
    /// Correction (L2) tracker; enables WindowTracker.
    #[arg(long, value_enum, requires = "k")]
    pub l2: Option<L2Arg>,
    /// Window size in frames.
    #[arg(short, long, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: Option<u32>,
    /// TOML tracker config.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth file; repeat together with --res to pool sequences.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Results file, paired with --gt by position.
    #[arg(long, required = true)]
    pub res: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Detection file; repeat together with --gt to pool sequences.
    #[arg(long, required = true)]
    pub det: Vec<PathBuf>,
    /// Ground-truth file, paired with --det by position.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub l1: Option<KindArg>,
    #[arg(long, value_enum)]
    pub l2: Option<L2Arg>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "2,3,5,10",
        value_parser = clap::value_parser!(u32).range(1..)
    )]
    pub k_values: Vec<u32>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["scenario", "bundled"])))]
pub struct SynthArgs {
    /// Scenario TOML file, or the name of a built-in scenario.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Name of a built-in scenario.
    #[arg(long)]
    pub bundled: Option<String>,
    /// Directory for gt.txt and det.txt; created if missing.
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Parses `args` (program name first), runs, and prints. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns what it prints on success.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Track(a) => track(&a),
        Command::Eval(a) => eval(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Synth(a) => synth(&a),
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ConfigFile::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_detections(path: &Path) -> Result<DetectionSet, CliError> {
    let set = mot_io::read_detections(path)?;
    for d in &set.rejected {
        eprintln!("warning: {}:{}: {}", path.display(), d.line, d.message);
    }
    if set.clamped > 0 {
        eprintln!(
            "warning: {}: {} confidences clamped into [0, 1]",
            path.display(),
            set.clamped
        );
    }
    Ok(set)
}

fn base_pipeline(file: &ConfigFile, l1: Option<KindArg>) -> Result<Pipeline, CliError> {
    let l1 = file
        .resolve(Level::L1, l1.map(Into::into))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Pipeline::Base(l1))
}

fn windowed(file: &ConfigFile, base: &Pipeline, l2: Option<L2Arg>, k: u32) -> Result<Pipeline, CliError> {
    let Pipeline::Base(l1) = *base else {
        unreachable!("base pipeline expected")
    };
    let l2 = file
        .resolve(Level::L2, l2.map(Into::into))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if l2.kind == TrackerKind::Sort {
        return Err(CliError::Usage("L2 must be bytetrack or ocsort".into()));
    }
    Ok(Pipeline::Windowed { l1, l2, k: k as usize })
}

fn run_file(pipeline: &Pipeline, det: &DetectionSet) -> Result<Vec<TrackedDetection>, CliError> {
    run_sequence(pipeline, &det.dense(det.last_frame())).map_err(data)
}

fn track(a: &TrackArgs) -> Result<String, CliError> {
    let file = load_config(a.config.as_deref())?;
    let base = base_pipeline(&file, a.l1)?;
    let pipeline = match a.k {
        Some(k) if a.l2.is_some() || file.has_l2_kind() => windowed(&file, &base, a.l2, k)?,
        Some(_) => return Err(CliError::Usage("-k needs an L2 tracker (--l2 or [l2] kind)".into())),
        None => base,
    };
    let det = read_detections(&a.det)?;
    let out = run_file(&pipeline, &det)?;
    mot_io::write_results(&a.out, &out)?;
    Ok(String::new())
}

fn paired<'a>(a: &'a [PathBuf], b: &'a [PathBuf], what: &str) -> Result<(), CliError> {
    if a.len() != b.len() {
        return Err(CliError::Usage(format!(
            "{what} must be given the same number of times"
        )));
    }
    Ok(())
}

fn gt_of(path: &Path) -> Result<Vec<TrackedDetection>, CliError> {
    Ok(mot_io::read_ground_truth(path)?.to_tracked())
}

fn render(report: &MetricsReport, format: Format) -> String {
    match format {
        Format::Table => report.table(),
        Format::Csv => format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row()),
    }
}

fn eval(a: &EvalArgs) -> Result<String, CliError> {
    paired(&a.gt, &a.res, "--gt and --res")?;
    let mut total = EvaluationCounts::default();
    for (gt, res) in a.gt.iter().zip(&a.res) {
        let gt = gt_of(gt)?;
        let pred = mot_io::read_results(res)?;
        total.merge(&EvaluationCounts::for_sequence(&gt, &pred));
    }
    Ok(render(&total.report().map_err(data)?, a.format))
}

struct SweepRow {
    l1: TrackerKind,
    l2: Option<TrackerKind>,
    k: Option<u32>,
    report: MetricsReport,
}

fn sweep(a: &SweepArgs) -> Result<String, CliError> {
    paired(&a.det, &a.gt, "--det and --gt")?;
    let file = load_config(a.config.as_deref())?;
    let base = base_pipeline(&file, a.l1)?;
    let mut configs = vec![(base, None)];
    for &k in &a.k_values {
        configs.push((windowed(&file, &base, a.l2, k)?, Some(k)));
    }

    let mut sequences = Vec::new();
    for (det, gt) in a.det.iter().zip(&a.gt) {
        sequences.push((read_detections(det)?, gt_of(gt)?));
    }

    let mut rows = Vec::new();
    for (pipeline, k) in &configs {
        let mut total = EvaluationCounts::default();
        for (det, gt) in &sequences {
            // Score what `track` would write, so the base row matches track + eval.
            let out = run_file(pipeline, det)?;
            let written = mot_io::parse_results(&mot_io::format_results(&out)?)?;
            total.merge(&EvaluationCounts::for_sequence(gt, &written));
        }
        let (l1, l2) = match pipeline {
            Pipeline::Base(c) => (c.kind, None),
            Pipeline::Windowed { l1, l2, .. } => (l1.kind, Some(l2.kind)),
        };
        rows.push(SweepRow {
            l1,
            l2,
            k: *k,
            report: total.report().map_err(data)?,
        });
    }
    Ok(render_sweep(&rows, a.format))
}

fn render_sweep(rows: &[SweepRow], format: Format) -> String {
    let dash = || "-".to_string();
    let cells = |r: &SweepRow| {
        [
            r.l1.to_string(),
            r.l2.map_or_else(dash, |k| k.to_string()),
            r.k.map_or_else(dash, |k| k.to_string()),
            pct(r.report.idf1),
            pct(r.report.hota),
            pct(r.report.mota),
            r.report.motp.map_or_else(dash, pct),
            r.report.clear.idsw.to_string(),
        ]
    };
    let header = ["L1", "L2", "k", "IDF1", "HOTA", "MOTA", "MOTP", "IDSW"];
    let mut s = String::new();
    match format {
        Format::Csv => {
            s.push_str(&header.join(","));
            s.push('\n');
            for r in rows {
                s.push_str(&cells(r).join(","));
                s.push('\n');
            }
        }
        Format::Table => {
            let line = |c: &[String]| {
                format!(
                    "{:<10}{:<10}{:>4}{:>8}{:>8}{:>8}{:>8}{:>6}\n",
                    c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]
                )
            };
            s.push_str(&line(&header.map(String::from)));
            for r in rows {
                s.push_str(&line(&cells(r)));
            }
        }
    }
    s
}

fn synth(a: &SynthArgs) -> Result<String, CliError> {
    let scenario = match (&a.scenario, &a.bundled) {
        // A name that is not an existing file may still be a bundled scenario.
        (Some(path), _) if !path.exists() && Scenario::bundled(&path.to_string_lossy()).is_ok() => {
            Scenario::bundled(&path.to_string_lossy()).map_err(data)?
        }
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Scenario::from_toml(&text).map_err(data)?
        }
        (None, Some(name)) => Scenario::bundled(name).map_err(|e| CliError::Usage(e.to_string()))?,
        (None, None) => unreachable!("clap requires one source"),
    };
    let generated = scenario.generate();
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Io(format!("{}: {e}", a.out_dir.display())))?;
    mot_io::write_ground_truth(a.out_dir.join("gt.txt"), &generated.ground_truth)?;
    mot_io::write_detections(a.out_dir.join("det.txt"), generated.all_detections())?;
    Ok(String::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("windowtrack").chain(args.iter().copied()))
    }

    #[test]
    fn k_zero_is_rejected() {
        assert!(parse(&["track", "--det", "d", "--out", "o", "--l1", "sort", "--l2", "ocsort", "-k", "0"]).is_err());
        assert!(parse(&["track", "--det", "d", "--out", "o", "--l1", "sort", "--l2", "ocsort", "-k", "2"]).is_ok());
    }

    #[test]
    fn l2_requires_k() {
        assert!(parse(&["track", "--det", "d", "--out", "o", "--l1", "sort", "--l2", "ocsort"]).is_err());
    }

    #[test]
    fn k_values_split() {
        let Command::Sweep(a) = parse(&["sweep", "--det", "d", "--gt", "g", "--l1", "sort", "--l2", "bytetrack"])
            .unwrap()
            .command
        else {
            panic!()
        };
        assert_eq!(a.k_values, vec![2, 3, 5, 10]);
    }

    #[test]
    fn unknown_kind_is_usage() {
        assert!(parse(&["track", "--det", "d", "--out", "o", "--l1", "deepsort"]).is_err());
    }
}

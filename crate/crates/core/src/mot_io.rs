//! MOTChallenge text files: detections, ground truth and tracking results.
//!
//! Rows are comma separated. Files use 1-based pixel coordinates; in memory
//! boxes are continuous with the origin at 0, so one is subtracted on read and
//! added back on write. Extra trailing columns are ignored.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::BoundingBox;
use crate::trackers::{Detection, TrackId, TrackedDetection};

#[derive(Debug, Error)]
pub enum MotIoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id {id} in frame {frame}")]
    Duplicate { line: usize, frame: u32, id: i64 },
    #[error("record {index} breaks (frame, id) ordering")]
    Unsorted { index: usize },
    #[error("record {index}: {message}")]
    Invalid { index: usize, message: String },
}

impl MotIoError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Self::Io { .. })
    }
}

/// A skipped row and why.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    /// Non-empty frames in increasing order.
    pub frames: Vec<(u32, Vec<Detection>)>,
    /// Rows whose confidence was clamped into [0, 1].
    pub clamped: usize,
    /// Rows dropped for a non-positive width or height.
    pub rejected: Vec<Diagnostic>,
}

impl DetectionSet {
    pub fn last_frame(&self) -> u32 {
        self.frames.last().map_or(0, |&(f, _)| f)
    }

    pub fn len(&self) -> usize {
        self.frames.iter().map(|(_, d)| d.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Every frame `1..=frame_count`, with empty lists where the file had no rows.
    pub fn dense(&self, frame_count: u32) -> Vec<(u32, Vec<Detection>)> {
        let by_frame: BTreeMap<u32, &Vec<Detection>> = self.frames.iter().map(|(f, d)| (*f, d)).collect();
        (1..=frame_count)
            .map(|f| (f, by_frame.get(&f).map(|d| d.to_vec()).unwrap_or_default()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtRecord {
    pub frame: u32,
    pub id: TrackId,
    pub bbox: BoundingBox,
    /// The "consider" flag column; 0 excludes the row from evaluation.
    pub confidence: f64,
    pub class: i32,
    pub visibility: f64,
}

impl GtRecord {
    /// Flagged for evaluation and of the pedestrian class (or unlabelled).
    pub fn is_evaluable(&self) -> bool {
        self.confidence != 0.0 && (self.class == 1 || self.class == -1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData {
    pub name: String,
    pub frame_count: u32,
    pub records: Vec<GtRecord>,
}

impl SequenceData {
    pub fn evaluable(&self) -> impl Iterator<Item = &GtRecord> {
        self.records.iter().filter(|r| r.is_evaluable())
    }

    /// Evaluable rows as tracked detections (confidence 1).
    pub fn to_tracked(&self) -> Vec<TrackedDetection> {
        self.evaluable()
            .map(|r| TrackedDetection {
                detection: Detection {
                    frame: r.frame,
                    bbox: r.bbox,
                    confidence: 1.0,
                },
                track_id: r.id,
            })
            .collect()
    }
}

struct Row<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

impl Row<'_> {
    fn err(&self, message: impl Into<String>) -> MotIoError {
        MotIoError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn float(&self, idx: usize, name: &str) -> Result<f64, MotIoError> {
        let raw = self.fields[idx];
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(format!("field {} ({name}) is not a number: `{raw}`", idx + 1)))
    }

    fn integer(&self, idx: usize, name: &str) -> Result<i64, MotIoError> {
        let raw = self.fields[idx];
        if let Ok(v) = raw.parse::<i64>() {
            return Ok(v);
        }
        match raw.parse::<f64>() {
            Ok(v) if v.fract() == 0.0 && v.abs() < 1e15 => Ok(v as i64),
            _ => Err(self.err(format!("field {} ({name}) is not an integer: `{raw}`", idx + 1))),
        }
    }

    fn frame(&self) -> Result<u32, MotIoError> {
        let f = self.integer(0, "frame")?;
        u32::try_from(f)
            .ok()
            .filter(|&f| f >= 1)
            .ok_or_else(|| self.err(format!("frame {f} must be >= 1")))
    }

    /// `None` when width or height is not positive.
    fn bbox(&self) -> Result<Option<BoundingBox>, MotIoError> {
        let x = self.float(2, "x")?;
        let y = self.float(3, "y")?;
        let w = self.float(4, "w")?;
        let h = self.float(5, "h")?;
        if w <= 0.0 || h <= 0.0 {
            return Ok(None);
        }
        BoundingBox::new(x - 1.0, y - 1.0, w, h)
            .map(Some)
            .map_err(|e| self.err(e.to_string()))
    }
}

fn rows(text: &str, min_fields: usize) -> impl Iterator<Item = Result<Row<'_>, MotIoError>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(move |(i, l)| {
            let row = Row {
                line: i + 1,
                fields: l.split(',').map(str::trim).collect(),
            };
            if row.fields.len() < min_fields {
                Err(row.err(format!(
                    "expected at least {min_fields} fields, found {}",
                    row.fields.len()
                )))
            } else {
                Ok(row)
            }
        })
}

fn read_text(path: &Path) -> Result<String, MotIoError> {
    fs::read_to_string(path).map_err(|e| MotIoError::io(path, e))
}

pub fn parse_detections(text: &str) -> Result<DetectionSet, MotIoError> {
    let mut set = DetectionSet::default();
    let mut grouped: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for row in rows(text, 7) {
        let row = row?;
        let frame = row.frame()?;
        let raw_conf = row.float(6, "confidence")?;
        let Some(bbox) = row.bbox()? else {
            set.rejected.push(Diagnostic {
                line: row.line,
                message: "non-positive width or height".into(),
            });
            continue;
        };
        let confidence = raw_conf.clamp(0.0, 1.0);
        if confidence != raw_conf {
            set.clamped += 1;
        }
        grouped.entry(frame).or_default().push(Detection {
            frame,
            bbox,
            confidence,
        });
    }
    set.frames = grouped.into_iter().collect();
    Ok(set)
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<DetectionSet, MotIoError> {
    parse_detections(&read_text(path.as_ref())?)
}

pub fn parse_ground_truth(text: &str, name: &str) -> Result<SequenceData, MotIoError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in rows(text, 6) {
        let row = row?;
        let frame = row.frame()?;
        let id = row.integer(1, "id")?;
        if id < 1 {
            return Err(row.err(format!("ground-truth id {id} must be >= 1")));
        }
        if !seen.insert((frame, id)) {
            return Err(MotIoError::Duplicate {
                line: row.line,
                frame,
                id,
            });
        }
        let bbox = row.bbox()?.ok_or_else(|| row.err("non-positive width or height"))?;
        let flag = if row.fields.len() > 6 {
            row.float(6, "flag")?
        } else {
            1.0
        };
        let class = if row.fields.len() > 7 {
            row.integer(7, "class")? as i32
        } else {
            -1
        };
        let visibility = if row.fields.len() > 8 {
            row.float(8, "visibility")?
        } else {
            1.0
        };
        records.push(GtRecord {
            frame,
            id: id as TrackId,
            bbox,
            confidence: flag,
            class,
            visibility,
        });
    }
    let frame_count = records.iter().map(|r| r.frame).max().unwrap_or(0);
    Ok(SequenceData {
        name: name.to_string(),
        frame_count,
        records,
    })
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<SequenceData, MotIoError> {
    let path = path.as_ref();
    let name = sequence_name(path);
    parse_ground_truth(&read_text(path)?, &name)
}

fn sequence_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Tracker output rows; ids must be >= 1 and unique per frame.
pub fn parse_results(text: &str) -> Result<Vec<TrackedDetection>, MotIoError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for row in rows(text, 6) {
        let row = row?;
        let frame = row.frame()?;
        let id = row.integer(1, "id")?;
        if id < 1 {
            return Err(row.err(format!("result id {id} must be >= 1")));
        }
        if !seen.insert((frame, id)) {
            return Err(MotIoError::Duplicate {
                line: row.line,
                frame,
                id,
            });
        }
        let bbox = row.bbox()?.ok_or_else(|| row.err("non-positive width or height"))?;
        let confidence = if row.fields.len() > 6 {
            row.float(6, "confidence")?.clamp(0.0, 1.0)
        } else {
            1.0
        };
        out.push(TrackedDetection {
            detection: Detection {
                frame,
                bbox,
                confidence,
            },
            track_id: id as TrackId,
        });
    }
    out.sort_by_key(|t| (t.frame(), t.track_id));
    Ok(out)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<TrackedDetection>, MotIoError> {
    parse_results(&read_text(path.as_ref())?)
}

/// Fixed-point formatting without a negative sign on zero.
fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

fn push_row(out: &mut String, frame: u32, id: i64, b: &BoundingBox, conf: f64) {
    let _ = writeln!(
        out,
        "{frame},{id},{},{},{},{},{},-1,-1,-1",
        fixed(b.x() + 1.0, 2),
        fixed(b.y() + 1.0, 2),
        fixed(b.w(), 2),
        fixed(b.h(), 2),
        fixed(conf, 6),
    );
}

/// Result rows, which must already be ordered by `(frame, id)`.
pub fn format_results(tracked: &[TrackedDetection]) -> Result<String, MotIoError> {
    for (index, pair) in tracked.windows(2).enumerate() {
        if (pair[0].frame(), pair[0].track_id) >= (pair[1].frame(), pair[1].track_id) {
            return Err(MotIoError::Unsorted { index: index + 1 });
        }
    }
    let mut out = String::new();
    for t in tracked {
        if t.track_id < 1 || t.track_id > i64::MAX as u64 {
            return Err(MotIoError::Invalid {
                index: 0,
                message: format!("track id {} out of range", t.track_id),
            });
        }
        push_row(&mut out, t.frame(), t.track_id as i64, t.bbox(), t.confidence());
    }
    Ok(out)
}

pub fn write_results(path: impl AsRef<Path>, tracked: &[TrackedDetection]) -> Result<(), MotIoError> {
    let path = path.as_ref();
    let text = format_results(tracked)?;
    fs::write(path, text).map_err(|e| MotIoError::io(path, e))
}

/// Detection rows with id `-1`, in the order given.
pub fn format_detections<'a>(detections: impl IntoIterator<Item = &'a Detection>) -> String {
    let mut out = String::new();
    for d in detections {
        push_row(&mut out, d.frame, -1, &d.bbox, d.confidence);
    }
    out
}

pub fn write_detections<'a>(
    path: impl AsRef<Path>,
    detections: impl IntoIterator<Item = &'a Detection>,
) -> Result<(), MotIoError> {
    let path = path.as_ref();
    fs::write(path, format_detections(detections)).map_err(|e| MotIoError::io(path, e))
}

/// Ground-truth rows `frame,id,x,y,w,h,flag,class,visibility`.
pub fn format_ground_truth(seq: &SequenceData) -> String {
    let mut out = String::new();
    for r in &seq.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.frame,
            r.id,
            fixed(r.bbox.x() + 1.0, 2),
            fixed(r.bbox.y() + 1.0, 2),
            fixed(r.bbox.w(), 2),
            fixed(r.bbox.h(), 2),
            fixed(r.confidence, 0),
            r.class,
            fixed(r.visibility, 2),
        );
    }
    out
}

pub fn write_ground_truth(path: impl AsRef<Path>, seq: &SequenceData) -> Result<(), MotIoError> {
    let path = path.as_ref();
    fs::write(path, format_ground_truth(seq)).map_err(|e| MotIoError::io(path, e))
}

/// Groups tracked detections by frame, preserving order within each frame.
pub fn group_by_frame(tracked: &[TrackedDetection]) -> BTreeMap<u32, Vec<TrackedDetection>> {
    let mut grouped: BTreeMap<u32, Vec<TrackedDetection>> = BTreeMap::new();
    for t in tracked {
        grouped.entry(t.frame()).or_default().push(*t);
    }
    grouped
}

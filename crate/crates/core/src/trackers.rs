//! Appearance-free SORT-family trackers.
//!
//! All three kinds share one lifecycle: Kalman predict, associate, update matched
//! tracks, age unmatched ones, spawn tentative tracks from leftover detections.
//! They differ only in how association is done and in OC-SORT's re-update on
//! recovery.

use std::fmt;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::assignment::{solve, solve_masked, AssignmentResult};
use crate::geometry::{iou_distance_matrix, BoundingBox, CostMatrix};
use crate::kalman::{KalmanConfig, KalmanFilter, KalmanState};

pub type TrackId = u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("frame {frame} is not after previously stepped frame {last}")]
    OutOfOrder { frame: u32, last: u32 },
    #[error("frame index must be >= 1")]
    ZeroFrame,
    #[error("detection for frame {found} passed while stepping frame {expected}")]
    FrameMismatch { expected: u32, found: u32 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid tracker config: {0}")]
    Invalid(String),
    #[error("unknown tracker kind `{0}` (expected sort, bytetrack or ocsort)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("frame index must be >= 1")]
    ZeroFrame,
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(frame: u32, bbox: BoundingBox, confidence: f64) -> Result<Self, DetectionError> {
        if frame == 0 {
            return Err(DetectionError::ZeroFrame);
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(DetectionError::Confidence(confidence));
        }
        Ok(Self {
            frame,
            bbox,
            confidence,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedDetection {
    pub detection: Detection,
    pub track_id: TrackId,
}

impl TrackedDetection {
    pub fn frame(&self) -> u32 {
        self.detection.frame
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.detection.bbox
    }

    pub fn confidence(&self) -> f64 {
        self.detection.confidence
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackerKind {
    Sort,
    #[serde(alias = "byte")]
    ByteTrack,
    OcSort,
}

impl FromStr for TrackerKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sort" => Ok(Self::Sort),
            "bytetrack" | "byte" => Ok(Self::ByteTrack),
            "ocsort" | "oc-sort" => Ok(Self::OcSort),
            _ => Err(ConfigError::UnknownKind(s.to_string())),
        }
    }
}

impl fmt::Display for TrackerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sort => "sort",
            Self::ByteTrack => "bytetrack",
            Self::OcSort => "ocsort",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub kind: TrackerKind,
    /// Largest IoU distance (1 - IoU) accepted for a match.
    pub iou_gate: f64,
    /// Frames an unmatched track survives before removal.
    pub max_age: u32,
    /// Consecutive hits before a track is confirmed and emitted.
    pub min_hits: u32,
    pub high_conf_threshold: f64,
    pub low_conf_threshold: f64,
    pub ocm_weight: f64,
    pub ocm_delta_t: u32,
    /// OC-SORT observation-centric recovery: re-update on re-association and
    /// last-observation anchoring of lost tracks.
    pub oru: bool,
    pub kalman: KalmanConfig,
}

impl TrackerConfig {
    pub fn new(kind: TrackerKind) -> Self {
        Self {
            kind,
            iou_gate: 0.7,
            max_age: 30,
            min_hits: 3,
            high_conf_threshold: 0.6,
            low_conf_threshold: 0.1,
            ocm_weight: 0.2,
            ocm_delta_t: 3,
            oru: true,
            kalman: KalmanConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if !(0.0..=1.0).contains(&self.iou_gate) {
            return bad(format!("iou_gate {} outside [0, 1]", self.iou_gate));
        }
        if !(0.0 <= self.low_conf_threshold
            && self.low_conf_threshold <= self.high_conf_threshold
            && self.high_conf_threshold <= 1.0)
        {
            return bad(format!(
                "need 0 <= low_conf_threshold ({}) <= high_conf_threshold ({}) <= 1",
                self.low_conf_threshold, self.high_conf_threshold
            ));
        }
        if self.max_age < 1 {
            return bad("max_age must be >= 1".into());
        }
        if self.min_hits < 1 {
            return bad("min_hits must be >= 1".into());
        }
        if !(self.ocm_weight >= 0.0 && self.ocm_weight.is_finite()) {
            return bad(format!("ocm_weight {} must be finite and >= 0", self.ocm_weight));
        }
        if self.ocm_delta_t < 1 {
            return bad("ocm_delta_t must be >= 1".into());
        }
        Ok(())
    }
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self::new(TrackerKind::Sort)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Active,
    Lost,
    Removed,
}

#[derive(Debug, Clone)]
pub struct Tracklet {
    pub id: TrackId,
    pub kf: KalmanState,
    /// Observations, most recent last.
    pub history: Vec<TrackedDetection>,
    pub status: TrackStatus,
    pub frames_since_update: u32,
    pub hit_streak: u32,
    confirmed: bool,
    /// Filter posterior right after the last observation; ORU replays from here.
    last_posterior: KalmanState,
    predicted: Option<BoundingBox>,
}

impl Tracklet {
    pub fn last_observation(&self) -> &TrackedDetection {
        self.history.last().expect("tracklet without observations")
    }

    pub fn is_confirmed(&self) -> bool {
        self.confirmed
    }

    /// Unit direction of observed motion over the last `delta_t` observations.
    fn observed_direction(&self, delta_t: u32) -> Option<(f64, f64)> {
        let n = self.history.len();
        if n < 2 {
            return None;
        }
        let from = n - 1 - (delta_t as usize).min(n - 1);
        let (x0, y0) = self.history[from].bbox().center();
        let (x1, y1) = self.history[n - 1].bbox().center();
        normalized(x1 - x0, y1 - y0)
    }
}

fn normalized(dx: f64, dy: f64) -> Option<(f64, f64)> {
    let norm = dx.hypot(dy);
    (norm > 0.0).then(|| (dx / norm, dy / norm))
}

/// Angle between the track's motion and the track→candidate direction, scaled to [0, 1].
/// Zero when either direction is undefined.
pub fn direction_cost(track_direction: Option<(f64, f64)>, from: &BoundingBox, to: &BoundingBox) -> f64 {
    let Some((tx, ty)) = track_direction else {
        return 0.0;
    };
    let (x0, y0) = from.center();
    let (x1, y1) = to.center();
    let Some((cx, cy)) = normalized(x1 - x0, y1 - y0) else {
        return 0.0;
    };
    (tx * cx + ty * cy).clamp(-1.0, 1.0).acos() / std::f64::consts::PI
}

/// SORT association: IoU distances between predicted track boxes and detections, gated.
pub fn associate_sort(tracks: &[BoundingBox], detections: &[BoundingBox], iou_gate: f64) -> AssignmentResult {
    solve(&iou_distance_matrix(tracks, detections), Some(iou_gate))
}

/// Everything a single step produced, split by track confirmation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub confirmed: Vec<TrackedDetection>,
    /// Tracks matched or spawned this frame that have not reached `min_hits`.
    pub tentative: Vec<TrackedDetection>,
}

impl StepReport {
    /// Every track that received a detection this frame, ordered by id.
    pub fn all(&self) -> Vec<TrackedDetection> {
        let mut all: Vec<_> = self.confirmed.iter().chain(&self.tentative).copied().collect();
        all.sort_by_key(|t| t.track_id);
        all
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    filter: KalmanFilter,
    tracks: Vec<Tracklet>,
    next_id: TrackId,
    last_frame: Option<u32>,
}

struct Association {
    /// `(track index, detection index)`
    matches: Vec<(usize, usize)>,
    spawn: Vec<usize>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            config,
            filter: KalmanFilter::new(config.kalman),
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live tracklets, ordered by id.
    pub fn tracks(&self) -> &[Tracklet] {
        &self.tracks
    }

    pub fn track(&self, id: TrackId) -> Option<&Tracklet> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn filter(&self) -> &KalmanFilter {
        &self.filter
    }

    /// Steps one frame and returns the confirmed tracked detections.
    pub fn step(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<TrackedDetection>, TrackError> {
        Ok(self.step_report(frame, detections)?.confirmed)
    }

    pub fn step_report(&mut self, frame: u32, detections: &[Detection]) -> Result<StepReport, TrackError> {
        if frame == 0 {
            return Err(TrackError::ZeroFrame);
        }
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(TrackError::OutOfOrder { frame, last });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(TrackError::FrameMismatch {
                expected: frame,
                found: d.frame,
            });
        }
        self.last_frame = Some(frame);

        for t in &mut self.tracks {
            t.kf = self.filter.predict(&t.kf);
            t.predicted = t.kf.to_box().ok();
        }

        let assoc = match self.config.kind {
            TrackerKind::Sort => self.associate_all(detections),
            TrackerKind::ByteTrack => self.associate_two_stage(detections),
            TrackerKind::OcSort => self.associate_observation_centric(detections),
        };

        let mut matched = vec![false; self.tracks.len()];
        for &(ti, di) in &assoc.matches {
            matched[ti] = true;
            self.apply_observation(ti, &detections[di]);
        }
        for (t, _) in self.tracks.iter_mut().zip(&matched).filter(|(_, &m)| !m) {
            t.frames_since_update += 1;
            t.hit_streak = 0;
            t.status = if !t.confirmed || t.frames_since_update > self.config.max_age {
                TrackStatus::Removed
            } else {
                TrackStatus::Lost
            };
        }
        self.tracks.retain(|t| t.status != TrackStatus::Removed);

        for &di in &assoc.spawn {
            self.spawn(&detections[di]);
        }

        let mut report = StepReport::default();
        for t in self.tracks.iter().filter(|t| t.frames_since_update == 0) {
            let out = *t.last_observation();
            if t.confirmed {
                report.confirmed.push(out);
            } else {
                report.tentative.push(out);
            }
        }
        Ok(report)
    }

    fn spawn(&mut self, det: &Detection) {
        let id = self.next_id;
        self.next_id += 1;
        let kf = self.filter.initiate(&det.bbox);
        let confirmed = self.config.min_hits <= 1;
        self.tracks.push(Tracklet {
            id,
            last_posterior: kf.clone(),
            kf,
            history: vec![TrackedDetection {
                detection: *det,
                track_id: id,
            }],
            status: if confirmed {
                TrackStatus::Active
            } else {
                TrackStatus::Tentative
            },
            frames_since_update: 0,
            hit_streak: 1,
            confirmed,
            predicted: None,
        });
    }

    fn apply_observation(&mut self, ti: usize, det: &Detection) {
        let use_oru = self.config.kind == TrackerKind::OcSort && self.config.oru;
        let filter = &self.filter;
        let t = &mut self.tracks[ti];
        let gap = det.frame - t.last_observation().frame() - 1;
        t.kf = if use_oru && gap > 0 {
            re_update(filter, &t.last_posterior, t.last_observation().bbox(), &det.bbox, gap)
        } else {
            filter.update(&t.kf, &det.bbox)
        };
        t.last_posterior = t.kf.clone();
        t.history.push(TrackedDetection {
            detection: *det,
            track_id: t.id,
        });
        t.frames_since_update = 0;
        t.hit_streak += 1;
        if t.hit_streak >= self.config.min_hits {
            t.confirmed = true;
        }
        t.status = if t.confirmed {
            TrackStatus::Active
        } else {
            TrackStatus::Tentative
        };
    }

    fn predicted_boxes(&self, indices: &[usize]) -> Vec<BoundingBox> {
        indices
            .iter()
            .map(|&i| {
                self.tracks[i]
                    .predicted
                    .expect("only predictable tracks are candidates")
            })
            .collect()
    }

    fn predictable(&self) -> Vec<usize> {
        (0..self.tracks.len())
            .filter(|&i| self.tracks[i].predicted.is_some())
            .collect()
    }

    fn match_subset(&self, tracks: &[usize], dets: &[usize], all: &[Detection]) -> Vec<(usize, usize)> {
        let boxes: Vec<_> = dets.iter().map(|&d| all[d].bbox).collect();
        associate_sort(&self.predicted_boxes(tracks), &boxes, self.config.iou_gate)
            .matches
            .into_iter()
            .map(|(i, j)| (tracks[i], dets[j]))
            .collect()
    }

    fn associate_all(&self, detections: &[Detection]) -> Association {
        let dets: Vec<usize> = (0..detections.len()).collect();
        let matches = self.match_subset(&self.predictable(), &dets, detections);
        let spawn = unmatched(detections.len(), &matches);
        Association { matches, spawn }
    }

    fn associate_two_stage(&self, detections: &[Detection]) -> Association {
        let (high_t, low_t) = (self.config.high_conf_threshold, self.config.low_conf_threshold);
        let high: Vec<usize> = (0..detections.len())
            .filter(|&d| detections[d].confidence >= high_t)
            .collect();
        let low: Vec<usize> = (0..detections.len())
            .filter(|&d| (low_t..high_t).contains(&detections[d].confidence))
            .collect();

        let candidates = self.predictable();
        let mut matches = self.match_subset(&candidates, &high, detections);

        let taken: Vec<usize> = matches.iter().map(|&(t, _)| t).collect();
        let leftover: Vec<usize> = candidates.into_iter().filter(|t| !taken.contains(t)).collect();
        let second = self.match_subset(&leftover, &low, detections);

        let high_matched: Vec<usize> = matches.iter().map(|&(_, d)| d).collect();
        let spawn = high.into_iter().filter(|d| !high_matched.contains(d)).collect();
        matches.extend(second);
        matches.sort_unstable();
        Association { matches, spawn }
    }

    fn associate_observation_centric(&self, detections: &[Detection]) -> Association {
        let cfg = &self.config;
        let anchors: Vec<(usize, BoundingBox)> = self
            .tracks
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                if cfg.oru && t.frames_since_update > 0 {
                    Some((i, *t.last_observation().bbox()))
                } else {
                    t.predicted.map(|b| (i, b))
                }
            })
            .collect();
        let boxes: Vec<BoundingBox> = anchors.iter().map(|&(_, b)| b).collect();
        let det_boxes: Vec<BoundingBox> = detections.iter().map(|d| d.bbox).collect();
        let iou_dist = iou_distance_matrix(&boxes, &det_boxes);
        let cost = CostMatrix::from_fn(anchors.len(), detections.len(), |i, j| {
            let t = &self.tracks[anchors[i].0];
            let dir = t.observed_direction(cfg.ocm_delta_t);
            iou_dist.get(i, j) + cfg.ocm_weight * direction_cost(dir, t.last_observation().bbox(), &det_boxes[j])
        });
        let matches: Vec<(usize, usize)> = solve_masked(&cost, |i, j| iou_dist.get(i, j) <= cfg.iou_gate)
            .matches
            .into_iter()
            .map(|(i, j)| (anchors[i].0, j))
            .collect();
        let spawn = unmatched(detections.len(), &matches);
        Association { matches, spawn }
    }
}

fn unmatched(n: usize, matches: &[(usize, usize)]) -> Vec<usize> {
    let mut used = vec![false; n];
    for &(_, d) in matches {
        used[d] = true;
    }
    (0..n).filter(|&d| !used[d]).collect()
}

/// Observation-centric re-update: replays the filter from the last observed
/// posterior across `gap` linearly interpolated virtual observations, then
/// applies the real one.
pub fn re_update(
    filter: &KalmanFilter,
    posterior: &KalmanState,
    last: &BoundingBox,
    current: &BoundingBox,
    gap: u32,
) -> KalmanState {
    let mut state = posterior.clone();
    let steps = f64::from(gap + 1);
    for i in 1..=gap {
        let virtual_obs = last.lerp(current, f64::from(i) / steps);
        state = filter.update(&filter.predict(&state), &virtual_obs);
    }
    filter.update(&filter.predict(&state), current)
}

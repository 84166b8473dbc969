//! Deterministic synthetic sequences: ground truth plus degraded detections.
//!
//! Scenarios are TOML. Each target follows a piecewise-linear path through
//! `[frame, x, y, w, h]` waypoints; ranges of frames can be marked occluded
//! (annotated but undetected), absent (out of the scene), confidence dips or
//! dropout windows. Randomness comes from ChaCha8 seeded with `seed`, and every
//! target-frame consumes the same number of draws, so output depends only on
//! the scenario file.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::BoundingBox;
use crate::mot_io::{GtRecord, SequenceData};
use crate::trackers::Detection;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scenario config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario config: {0}")]
    Invalid(String),
    #[error("unknown bundled scenario `{0}`")]
    UnknownBundled(String),
}

/// Inclusive frame range with a value attached.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(from = "(u32, u32, f64)")]
pub struct FrameRangeValue {
    pub start: u32,
    pub end: u32,
    pub value: f64,
}

impl From<(u32, u32, f64)> for FrameRangeValue {
    fn from((start, end, value): (u32, u32, f64)) -> Self {
        Self { start, end, value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(from = "(u32, u32)")]
pub struct FrameRange {
    pub start: u32,
    pub end: u32,
}

impl From<(u32, u32)> for FrameRange {
    fn from((start, end): (u32, u32)) -> Self {
        Self { start, end }
    }
}

fn covers(start: u32, end: u32, frame: u32) -> bool {
    (start..=end).contains(&frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(from = "(u32, f64, f64, f64, f64)")]
pub struct Waypoint {
    pub frame: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<(u32, f64, f64, f64, f64)> for Waypoint {
    fn from((frame, x, y, w, h): (u32, f64, f64, f64, f64)) -> Self {
        Self { frame, x, y, w, h }
    }
}

fn default_confidence() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub id: Option<u64>,
    pub waypoints: Vec<Waypoint>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub occluded: Vec<FrameRange>,
    #[serde(default)]
    pub absent: Vec<FrameRange>,
    #[serde(default)]
    pub dips: Vec<FrameRangeValue>,
    #[serde(default)]
    pub dropout: Vec<FrameRangeValue>,
}

impl Target {
    /// Interpolated box at `frame`, if inside the waypoint span.
    pub fn box_at(&self, frame: u32) -> Option<BoundingBox> {
        let first = self.waypoints.first()?;
        let last = self.waypoints.last()?;
        if frame < first.frame || frame > last.frame {
            return None;
        }
        let seg = self.waypoints.windows(2).find(|w| frame <= w[1].frame);
        let (a, b) = match seg {
            Some(w) => (w[0], w[1]),
            None => (*first, *first),
        };
        let t = if b.frame == a.frame {
            0.0
        } else {
            f64::from(frame - a.frame) / f64::from(b.frame - a.frame)
        };
        let lerp = |u: f64, v: f64| u + (v - u) * t;
        BoundingBox::new(lerp(a.x, b.x), lerp(a.y, b.y), lerp(a.w, b.w), lerp(a.h, b.h)).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub frames: u32,
    /// Standard deviation of the per-coordinate box jitter, in pixels.
    #[serde(default)]
    pub jitter: f64,
    /// Probability of dropping any detection outside explicit dropout ranges.
    #[serde(default)]
    pub dropout: f64,
    #[serde(default, rename = "target")]
    pub targets: Vec<Target>,
}

/// Bundled scenarios as `(name, toml)`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("crossing", include_str!("../scenarios/crossing.toml")),
    ("idswitch", include_str!("../scenarios/idswitch.toml")),
    ("occlusion", include_str!("../scenarios/occlusion.toml")),
    ("dips", include_str!("../scenarios/dips.toml")),
    ("reentry", include_str!("../scenarios/reentry.toml")),
    ("crowd", include_str!("../scenarios/crowd.toml")),
];

/// Generated sequence: ground truth and the detections for every frame `1..=frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub ground_truth: SequenceData,
    pub detections: Vec<(u32, Vec<Detection>)>,
}

impl Generated {
    pub fn all_detections(&self) -> impl Iterator<Item = &Detection> {
        self.detections.iter().flat_map(|(_, d)| d)
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let s: Self = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn bundled(name: &str) -> Result<Self, SynthError> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| SynthError::UnknownBundled(name.to_string()))?;
        let mut s = Self::from_toml(text)?;
        if s.name.is_empty() {
            s.name = name.to_string();
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.frames == 0 {
            return bad("frames must be >= 1".into());
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return bad(format!("jitter {} must be finite and >= 0", self.jitter));
        }
        if !prob(self.dropout) {
            return bad(format!("dropout {} outside [0, 1]", self.dropout));
        }
        let mut ids = std::collections::HashSet::new();
        for (k, t) in self.targets.iter().enumerate() {
            let id = self.target_id(k);
            if id == 0 || !ids.insert(id) {
                return bad(format!("target {} has invalid or duplicate id {id}", k + 1));
            }
            if t.waypoints.is_empty() {
                return bad(format!("target {id} has no waypoints"));
            }
            if t.waypoints.windows(2).any(|w| w[0].frame >= w[1].frame) {
                return bad(format!("target {id}: waypoint frames must increase"));
            }
            if t.waypoints.iter().any(|w| w.frame == 0 || !(w.w > 0.0 && w.h > 0.0)) {
                return bad(format!("target {id}: waypoints need frame >= 1 and positive size"));
            }
            if !prob(t.confidence) || t.dips.iter().any(|d| !prob(d.value)) {
                return bad(format!("target {id}: confidences must lie in [0, 1]"));
            }
            if t.dropout.iter().any(|d| !prob(d.value)) {
                return bad(format!("target {id}: dropout probabilities must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    fn target_id(&self, index: usize) -> u64 {
        self.targets[index].id.unwrap_or(index as u64 + 1)
    }

    pub fn generate(&self) -> Generated {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut records = Vec::new();
        let mut detections = Vec::with_capacity(self.frames as usize);
        for frame in 1..=self.frames {
            let mut dets = Vec::new();
            for (k, target) in self.targets.iter().enumerate() {
                let Some(truth) = target.box_at(frame) else { continue };
                if target.absent.iter().any(|r| covers(r.start, r.end, frame)) {
                    continue;
                }
                let occluded = target.occluded.iter().any(|r| covers(r.start, r.end, frame));
                records.push(GtRecord {
                    frame,
                    id: self.target_id(k),
                    bbox: truth,
                    confidence: 1.0,
                    class: 1,
                    visibility: if occluded { 0.0 } else { 1.0 },
                });

                let u: f64 = rng.gen();
                let noise: [f64; 4] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal) * self.jitter);
                if occluded {
                    continue;
                }
                let drop_p = target
                    .dropout
                    .iter()
                    .filter(|r| covers(r.start, r.end, frame))
                    .map(|r| r.value)
                    .fold(self.dropout, f64::max);
                if u < drop_p {
                    continue;
                }
                let bbox = if self.jitter > 0.0 {
                    BoundingBox::new(
                        truth.x() + noise[0],
                        truth.y() + noise[1],
                        (truth.w() + noise[2]).max(1.0),
                        (truth.h() + noise[3]).max(1.0),
                    )
                    .expect("jittered box stays finite and positive")
                } else {
                    truth
                };
                let confidence = target
                    .dips
                    .iter()
                    .rev()
                    .find(|r| covers(r.start, r.end, frame))
                    .map_or(target.confidence, |r| r.value);
                dets.push(Detection {
                    frame,
                    bbox,
                    confidence,
                });
            }
            detections.push((frame, dets));
        }
        Generated {
            ground_truth: SequenceData {
                name: self.name.clone(),
                frame_count: self.frames,
                records,
            },
            detections,
        }
    }
}

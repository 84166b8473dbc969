//! Two-level windowed ID correction.
//!
//! L1 tracks every frame. Its confirmed output is buffered for `k` frames; then
//! the highest-confidence box of each L1 id is handed to L2 as a single
//! pseudo-frame. Each buffered frame's L1 boxes are matched to the L2 boxes by
//! IoU distance, and matched L1 detections take the L2 id. L1 detections that
//! overlap no L2 box get `FRESH_ID_OFFSET + l1_id` instead.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::assignment::solve_masked;
use crate::geometry::{iou_distance_matrix, BoundingBox};
use crate::trackers::{ConfigError, Detection, TrackError, TrackId, TrackedDetection, Tracker, TrackerConfig};

/// Offset added to L1 ids that found no L2 counterpart.
pub const FRESH_ID_OFFSET: TrackId = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WindowError {
    #[error("window length must be >= 1")]
    ZeroWindow,
    #[error("L1: {0}")]
    L1Config(ConfigError),
    #[error("L2: {0}")]
    L2Config(ConfigError),
    #[error(transparent)]
    Track(#[from] TrackError),
}

#[derive(Debug, Clone)]
pub struct WindowBuffer {
    k: usize,
    frames: Vec<(u32, Vec<TrackedDetection>)>,
    best_per_id: BTreeMap<TrackId, TrackedDetection>,
}

impl WindowBuffer {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            frames: Vec::with_capacity(k),
            best_per_id: BTreeMap::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn frames(&self) -> &[(u32, Vec<TrackedDetection>)] {
        &self.frames
    }

    pub fn best_per_id(&self) -> &BTreeMap<TrackId, TrackedDetection> {
        &self.best_per_id
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() >= self.k
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn push(&mut self, frame: u32, tracked: Vec<TrackedDetection>) {
        debug_assert!(self.frames.last().is_none_or(|&(f, _)| f < frame));
        for t in &tracked {
            // Strict comparison keeps the earliest frame on ties.
            match self.best_per_id.get(&t.track_id) {
                Some(best) if best.confidence() >= t.confidence() => {}
                _ => {
                    self.best_per_id.insert(t.track_id, *t);
                }
            }
        }
        self.frames.push((frame, tracked));
    }

    fn clear(&mut self) {
        self.frames.clear();
        self.best_per_id.clear();
    }
}

/// One maximum-confidence detection per L1 id, ordered by id.
/// Ties go to the earliest frame.
pub fn select_best(buffer: &WindowBuffer) -> Vec<TrackedDetection> {
    buffer.best_per_id.values().copied().collect()
}

/// Relabels one frame's L1 detections with the ids of the L2 boxes they overlap.
///
/// Pairs with zero IoU are never matched; within the frame the mapping is injective.
pub fn relabel_frame(l1: &[TrackedDetection], l2: &[(BoundingBox, TrackId)]) -> Vec<TrackedDetection> {
    let l1_boxes: Vec<BoundingBox> = l1.iter().map(|t| *t.bbox()).collect();
    let l2_boxes: Vec<BoundingBox> = l2.iter().map(|&(b, _)| b).collect();
    let cost = iou_distance_matrix(&l1_boxes, &l2_boxes);
    let assignment = solve_masked(&cost, |i, j| cost.get(i, j) < 1.0);
    l1.iter()
        .enumerate()
        .map(|(i, t)| TrackedDetection {
            detection: t.detection,
            track_id: match assignment.col_for_row(i) {
                Some(j) => l2[j].1,
                None => FRESH_ID_OFFSET + t.track_id,
            },
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct WindowTracker {
    l1: Tracker,
    l2: Tracker,
    buffer: WindowBuffer,
}

impl WindowTracker {
    pub fn new(l1: TrackerConfig, l2: TrackerConfig, k: usize) -> Result<Self, WindowError> {
        if k == 0 {
            return Err(WindowError::ZeroWindow);
        }
        Ok(Self {
            l1: Tracker::new(l1).map_err(WindowError::L1Config)?,
            l2: Tracker::new(l2).map_err(WindowError::L2Config)?,
            buffer: WindowBuffer::new(k),
        })
    }

    pub fn k(&self) -> usize {
        self.buffer.k
    }

    pub fn buffer(&self) -> &WindowBuffer {
        &self.buffer
    }

    pub fn l1(&self) -> &Tracker {
        &self.l1
    }

    pub fn l2(&self) -> &Tracker {
        &self.l2
    }

    /// Steps L1 and buffers its output. Returns the corrected window once `k` frames are buffered.
    pub fn push_frame(
        &mut self,
        frame: u32,
        detections: &[Detection],
    ) -> Result<Option<Vec<TrackedDetection>>, WindowError> {
        let tracked = self.l1.step(frame, detections)?;
        self.buffer.push(frame, tracked);
        if self.buffer.is_full() {
            Ok(Some(self.finalize_window()?))
        } else {
            Ok(None)
        }
    }

    /// Runs L2 over the buffered window and returns the relabelled detections.
    pub fn finalize_window(&mut self) -> Result<Vec<TrackedDetection>, WindowError> {
        let Some(&(pseudo_frame, _)) = self.buffer.frames.last() else {
            return Ok(Vec::new());
        };
        let l2_input: Vec<Detection> = select_best(&self.buffer)
            .into_iter()
            .map(|t| Detection {
                frame: pseudo_frame,
                ..t.detection
            })
            .collect();
        let l2_tracked: Vec<(BoundingBox, TrackId)> = self
            .l2
            .step_report(pseudo_frame, &l2_input)?
            .all()
            .into_iter()
            .map(|t| (*t.bbox(), t.track_id))
            .collect();

        let out = self
            .buffer
            .frames
            .iter()
            .flat_map(|(_, l1)| relabel_frame(l1, &l2_tracked))
            .collect();
        self.buffer.clear();
        Ok(out)
    }

    /// Finalizes a partial trailing window, if any.
    pub fn flush(&mut self) -> Result<Vec<TrackedDetection>, WindowError> {
        self.finalize_window()
    }

    /// Runs a whole sequence of `(frame, detections)` and returns every corrected detection.
    pub fn run<'a>(
        &mut self,
        frames: impl IntoIterator<Item = (u32, &'a [Detection])>,
    ) -> Result<Vec<TrackedDetection>, WindowError> {
        let mut out = Vec::new();
        for (frame, dets) in frames {
            if let Some(window) = self.push_frame(frame, dets)? {
                out.extend(window);
            }
        }
        out.extend(self.flush()?);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trackers::TrackerKind;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn td(frame: u32, id: TrackId, conf: f64, x: f64) -> TrackedDetection {
        TrackedDetection {
            detection: Detection::new(frame, bb(x, 0.0, 10.0, 20.0), conf).unwrap(),
            track_id: id,
        }
    }

    fn sort(min_hits: u32) -> TrackerConfig {
        TrackerConfig {
            min_hits,
            ..TrackerConfig::new(TrackerKind::Sort)
        }
    }

    #[test]
    fn select_best_argmax() {
        let mut buf = WindowBuffer::new(3);
        buf.push(1, vec![td(1, 7, 0.5, 0.0)]);
        buf.push(2, vec![td(2, 7, 0.9, 1.0)]);
        buf.push(3, vec![td(3, 7, 0.7, 2.0)]);
        let best = select_best(&buf);
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].confidence(), 0.9);
        assert_eq!(best[0].frame(), 2);
    }

    #[test]
    fn select_best_two_ids_and_ties() {
        let mut buf = WindowBuffer::new(5);
        buf.push(3, vec![td(3, 1, 0.8, 0.0), td(3, 2, 0.4, 50.0)]);
        buf.push(4, vec![td(4, 2, 0.6, 51.0)]);
        buf.push(5, vec![td(5, 1, 0.8, 9.0)]);
        let best = select_best(&buf);
        assert_eq!(best.len(), 2);
        assert_eq!((best[0].track_id, best[0].frame()), (1, 3));
        assert_eq!((best[1].track_id, best[1].frame()), (2, 4));
        for (id, t) in buf.best_per_id() {
            assert_eq!(*id, t.track_id);
        }
    }

    #[test]
    fn relabel_zero_overlap_gets_fresh_id() {
        let l1 = [td(1, 4, 0.9, 0.0), td(1, 5, 0.9, 100.0)];
        let l2 = [(bb(1.0, 0.0, 10.0, 20.0), 2)];
        let out = relabel_frame(&l1, &l2);
        assert_eq!(out[0].track_id, 2);
        assert_eq!(out[1].track_id, FRESH_ID_OFFSET + 5);
        assert_eq!(out[1].detection, l1[1].detection);
    }

    #[test]
    fn window_cadence() {
        let mut wt = WindowTracker::new(sort(1), sort(1), 2).unwrap();
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let mut emitted = Vec::new();
        for f in 1..=4u32 {
            let d = [Detection::new(f, b, 0.9).unwrap()];
            if let Some(w) = wt.push_frame(f, &d).unwrap() {
                emitted.push((f, w.len()));
            }
        }
        assert_eq!(emitted, vec![(2, 2), (4, 2)]);
        assert!(wt.flush().unwrap().is_empty());
    }

    #[test]
    fn k_one_emits_every_frame_with_l2_ids() {
        let mut wt = WindowTracker::new(sort(1), sort(1), 1).unwrap();
        let b = bb(0.0, 0.0, 10.0, 10.0);
        for f in 1..=3u32 {
            let out = wt
                .push_frame(f, &[Detection::new(f, b, 0.9).unwrap()])
                .unwrap()
                .unwrap();
            assert_eq!(out.len(), 1);
            assert_eq!(out[0].track_id, wt.l2().tracks()[0].id);
        }
    }

    #[test]
    fn empty_frames_count_toward_window() {
        let mut wt = WindowTracker::new(sort(1), sort(1), 3).unwrap();
        assert!(wt.push_frame(1, &[]).unwrap().is_none());
        assert!(wt.push_frame(2, &[]).unwrap().is_none());
        assert_eq!(wt.push_frame(3, &[]).unwrap(), Some(vec![]));
    }

    #[test]
    fn flush_partial_window() {
        let mut wt = WindowTracker::new(sort(1), sort(1), 5).unwrap();
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let mut sizes = Vec::new();
        for f in 1..=7u32 {
            if let Some(w) = wt.push_frame(f, &[Detection::new(f, b, 0.9).unwrap()]).unwrap() {
                sizes.push(w.len());
            }
        }
        sizes.push(wt.flush().unwrap().len());
        assert_eq!(sizes, vec![5, 2]);
        assert!(wt.flush().unwrap().is_empty());
    }

    #[test]
    fn stationary_target_constant_id() {
        let mut wt = WindowTracker::new(sort(1), sort(1), 3).unwrap();
        let b = bb(10.0, 10.0, 20.0, 40.0);
        let frames: Vec<(u32, Vec<Detection>)> = (1..=12)
            .map(|f| (f, vec![Detection::new(f, b, 0.8).unwrap()]))
            .collect();
        let out = wt.run(frames.iter().map(|(f, d)| (*f, d.as_slice()))).unwrap();
        assert_eq!(out.len(), 12);
        assert!(out.iter().all(|t| t.track_id == out[0].track_id));
        assert!(out[0].track_id < FRESH_ID_OFFSET);
    }

    #[test]
    fn rejects_zero_window_and_out_of_order() {
        assert!(matches!(
            WindowTracker::new(sort(1), sort(1), 0),
            Err(WindowError::ZeroWindow)
        ));
        let mut wt = WindowTracker::new(sort(1), sort(1), 2).unwrap();
        wt.push_frame(2, &[]).unwrap();
        assert!(matches!(
            wt.push_frame(1, &[]),
            Err(WindowError::Track(TrackError::OutOfOrder { .. }))
        ));
    }
}

//! Running a base tracker or a WindowTracker over a whole sequence.

use std::fmt;

use crate::trackers::{Detection, TrackedDetection, Tracker, TrackerConfig};
use crate::windowtracker::{WindowError, WindowTracker};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pipeline {
    /// One tracker on its own.
    Base(TrackerConfig),
    /// L1 corrected by L2 every `k` frames.
    Windowed {
        l1: TrackerConfig,
        l2: TrackerConfig,
        k: usize,
    },
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Base(c) => write!(f, "{}", c.kind),
            Self::Windowed { l1, l2, k } => write!(f, "{}+{} k={k}", l1.kind, l2.kind),
        }
    }
}

/// Runs `pipeline` over dense `(frame, detections)` input.
/// Output is sorted by `(frame, id)`.
pub fn run_sequence(
    pipeline: &Pipeline,
    frames: &[(u32, Vec<Detection>)],
) -> Result<Vec<TrackedDetection>, WindowError> {
    let mut out = match pipeline {
        Pipeline::Base(config) => {
            let mut tracker = Tracker::new(*config).map_err(WindowError::L1Config)?;
            let mut out = Vec::new();
            for (frame, dets) in frames {
                out.extend(tracker.step(*frame, dets)?);
            }
            out
        }
        Pipeline::Windowed { l1, l2, k } => {
            let mut wt = WindowTracker::new(*l1, *l2, *k)?;
            wt.run(frames.iter().map(|(f, d)| (*f, d.as_slice())))?
        }
    };
    out.sort_by_key(|t| (t.frame(), t.track_id));
    Ok(out)
}

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use windowtrack::geometry::iou;
use windowtrack::synth::{FrameRange, FrameRangeValue, Scenario, Target, Waypoint};
use windowtrack::trackers::{TrackId, TrackedDetection};

/// A random but valid scenario: a few walkers with noise, dips, dropout and occlusions.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = rng.gen_range(15..=60u32);
    let n = rng.gen_range(1..=4usize);
    let targets = (0..n)
        .map(|_| {
            let start = rng.gen_range(1..=frames / 3);
            let end = rng.gen_range(start..=frames);
            let w = rng.gen_range(20.0..60.0);
            let h = rng.gen_range(50.0..150.0);
            let x0 = rng.gen_range(0.0..600.0);
            let y0 = rng.gen_range(0.0..400.0);
            let span = f64::from(end - start).max(1.0);
            let x1 = x0 + rng.gen_range(-3.0..3.0) * span;
            let y1 = y0 + rng.gen_range(-1.0..1.0) * span;
            let mut waypoints = vec![Waypoint {
                frame: start,
                x: x0,
                y: y0,
                w,
                h,
            }];
            if end > start {
                waypoints.push(Waypoint {
                    frame: end,
                    x: x1,
                    y: y1,
                    w,
                    h,
                });
            }
            let range = |rng: &mut ChaCha8Rng| {
                let a = rng.gen_range(start..=end);
                (a, (a + rng.gen_range(0..8)).min(end))
            };
            let occluded = if rng.gen_bool(0.4) {
                let (a, b) = range(&mut rng);
                vec![FrameRange { start: a, end: b }]
            } else {
                vec![]
            };
            let dips = if rng.gen_bool(0.4) {
                let (a, b) = range(&mut rng);
                vec![FrameRangeValue {
                    start: a,
                    end: b,
                    value: rng.gen_range(0.05..0.6),
                }]
            } else {
                vec![]
            };
            Target {
                id: None,
                waypoints,
                confidence: rng.gen_range(0.5..1.0),
                occluded,
                absent: vec![],
                dips,
                dropout: vec![],
            }
        })
        .collect();
    let scenario = Scenario {
        name: format!("random-{seed}"),
        seed,
        frames,
        jitter: rng.gen_range(0.0..2.0),
        dropout: rng.gen_range(0.0..0.15),
        targets,
    };
    scenario.validate().unwrap();
    scenario
}

/// For each ground-truth id, the set of predicted ids that cover it (IoU >= 0.5) on some frame.
pub fn ids_covering(gt: &[TrackedDetection], pred: &[TrackedDetection]) -> BTreeMap<TrackId, Vec<TrackId>> {
    let mut out: BTreeMap<TrackId, Vec<TrackId>> = BTreeMap::new();
    for g in gt {
        let entry = out.entry(g.track_id).or_default();
        for p in pred.iter().filter(|p| p.frame() == g.frame()) {
            if iou(g.bbox(), p.bbox()) >= 0.5 && !entry.contains(&p.track_id) {
                entry.push(p.track_id);
            }
        }
    }
    out
}

/// Detection content without ids, for comparing outputs that may differ only in labels.
pub fn content(out: &[TrackedDetection]) -> Vec<(u32, [u64; 5])> {
    let mut v: Vec<_> = out
        .iter()
        .map(|t| {
            let b = t.bbox();
            (
                t.frame(),
                [b.x(), b.y(), b.w(), b.h(), t.confidence()].map(f64::to_bits),
            )
        })
        .collect();
    v.sort_unstable();
    v
}

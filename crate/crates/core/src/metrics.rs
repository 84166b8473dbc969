//! CLEAR-MOT (MOTA, MOTP), identity (IDF1) and HOTA metrics.
//!
//! All operations take ground truth and predictions as flat lists of
//! [`TrackedDetection`]s; ids are expected to be unique within a frame.
//! Counts from several sequences pool by addition before scores are computed.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::assignment::solve_masked;
use crate::geometry::{iou, CostMatrix};
use crate::trackers::{TrackId, TrackedDetection};

/// IoU threshold for CLEAR matching and for IDF1 frame-level matches.
pub const MATCH_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("MOTA is undefined without ground-truth detections")]
    NoGroundTruth,
    #[error("MOTP is undefined without true positives")]
    NoTruePositives,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClearCounts {
    pub gt_det: u64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub idsw: u64,
    pub similarity_sum: f64,
}

impl ClearCounts {
    pub fn merge(&mut self, other: &Self) {
        self.gt_det += other.gt_det;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.idsw += other.idsw;
        self.similarity_sum += other.similarity_sum;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IdentityCounts {
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

impl IdentityCounts {
    pub fn merge(&mut self, other: &Self) {
        self.idtp += other.idtp;
        self.idfp += other.idfp;
        self.idfn += other.idfn;
    }

    /// IDTP / (IDTP + IDFN/2 + IDFP/2); zero when there is nothing to score.
    pub fn idf1(&self) -> f64 {
        let denom = self.idtp as f64 + 0.5 * self.idfn as f64 + 0.5 * self.idfp as f64;
        if denom == 0.0 {
            0.0
        } else {
            self.idtp as f64 / denom
        }
    }
}

/// The 19-point α grid 0.05, 0.10, …, 0.95.
pub fn default_alphas() -> Vec<f64> {
    (1..20).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HotaAccumulator {
    pub alphas: Vec<f64>,
    pub tp: Vec<u64>,
    pub fn_: Vec<u64>,
    pub fp: Vec<u64>,
    /// Sum of the association score A(c) over all true positives, per α.
    pub ass_sum: Vec<f64>,
}

impl HotaAccumulator {
    pub fn new(alphas: Vec<f64>) -> Self {
        let n = alphas.len();
        Self {
            alphas,
            tp: vec![0; n],
            fn_: vec![0; n],
            fp: vec![0; n],
            ass_sum: vec![0.0; n],
        }
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.alphas, other.alphas, "cannot pool different α grids");
        for a in 0..self.alphas.len() {
            self.tp[a] += other.tp[a];
            self.fn_[a] += other.fn_[a];
            self.fp[a] += other.fp[a];
            self.ass_sum[a] += other.ass_sum[a];
        }
    }

    pub fn det_a_at(&self, a: usize) -> f64 {
        let denom = self.tp[a] + self.fn_[a] + self.fp[a];
        if denom == 0 {
            0.0
        } else {
            self.tp[a] as f64 / denom as f64
        }
    }

    pub fn ass_a_at(&self, a: usize) -> f64 {
        if self.tp[a] == 0 {
            0.0
        } else {
            self.ass_sum[a] / self.tp[a] as f64
        }
    }

    pub fn hota_at(&self, a: usize) -> f64 {
        (self.det_a_at(a) * self.ass_a_at(a)).sqrt()
    }

    fn mean(&self, f: impl Fn(usize) -> f64) -> f64 {
        if self.alphas.is_empty() {
            return 0.0;
        }
        (0..self.alphas.len()).map(f).sum::<f64>() / self.alphas.len() as f64
    }

    pub fn det_a(&self) -> f64 {
        self.mean(|a| self.det_a_at(a))
    }

    pub fn ass_a(&self) -> f64 {
        self.mean(|a| self.ass_a_at(a))
    }

    /// Mean of HOTA_α over the grid.
    pub fn hota(&self) -> f64 {
        self.mean(|a| self.hota_at(a))
    }
}

impl Default for HotaAccumulator {
    fn default() -> Self {
        Self::new(default_alphas())
    }
}

/// One frame's ids and pairwise IoU.
struct FrameView {
    gt: Vec<TrackId>,
    pred: Vec<TrackId>,
    sim: CostMatrix,
}

impl FrameView {
    fn best_matching(&self, threshold: f64, skip_gt: &[bool], skip_pred: &[bool]) -> Vec<(usize, usize)> {
        let cost = CostMatrix::from_fn(self.gt.len(), self.pred.len(), |i, j| 1.0 - self.sim.get(i, j));
        solve_masked(&cost, |i, j| {
            !skip_gt[i] && !skip_pred[j] && self.sim.get(i, j) >= threshold
        })
        .matches
    }

    fn matching(&self, threshold: f64) -> Vec<(usize, usize)> {
        self.best_matching(threshold, &vec![false; self.gt.len()], &vec![false; self.pred.len()])
    }
}

fn frames(gt: &[TrackedDetection], pred: &[TrackedDetection]) -> Vec<FrameView> {
    let mut grouped: BTreeMap<u32, (Vec<&TrackedDetection>, Vec<&TrackedDetection>)> = BTreeMap::new();
    for g in gt {
        grouped.entry(g.frame()).or_default().0.push(g);
    }
    for p in pred {
        grouped.entry(p.frame()).or_default().1.push(p);
    }
    grouped
        .into_values()
        .map(|(g, p)| FrameView {
            gt: g.iter().map(|t| t.track_id).collect(),
            pred: p.iter().map(|t| t.track_id).collect(),
            sim: CostMatrix::from_fn(g.len(), p.len(), |i, j| iou(g[i].bbox(), p[j].bbox())),
        })
        .collect()
}

fn counts_per_id(tracks: &[TrackedDetection]) -> HashMap<TrackId, u64> {
    let mut counts = HashMap::new();
    for t in tracks {
        *counts.entry(t.track_id).or_insert(0) += 1;
    }
    counts
}

/// CLEAR-MOT matching with correspondence persistence.
pub fn match_clear(gt: &[TrackedDetection], pred: &[TrackedDetection], threshold: f64) -> ClearCounts {
    let mut counts = ClearCounts::default();
    let mut previous_frame: HashMap<TrackId, TrackId> = HashMap::new();
    let mut last_match: HashMap<TrackId, TrackId> = HashMap::new();

    for view in frames(gt, pred) {
        let mut fixed = Vec::new();
        let mut gt_taken = vec![false; view.gt.len()];
        let mut pred_taken = vec![false; view.pred.len()];
        for (i, gid) in view.gt.iter().enumerate() {
            let Some(pid) = previous_frame.get(gid) else { continue };
            if let Some(j) = view.pred.iter().position(|p| p == pid) {
                if !pred_taken[j] && view.sim.get(i, j) >= threshold {
                    gt_taken[i] = true;
                    pred_taken[j] = true;
                    fixed.push((i, j));
                }
            }
        }
        fixed.extend(view.best_matching(threshold, &gt_taken, &pred_taken));

        previous_frame.clear();
        for &(i, j) in &fixed {
            let (gid, pid) = (view.gt[i], view.pred[j]);
            counts.tp += 1;
            counts.similarity_sum += view.sim.get(i, j);
            if let Some(prev) = last_match.insert(gid, pid) {
                if prev != pid {
                    counts.idsw += 1;
                }
            }
            previous_frame.insert(gid, pid);
        }
        let m = fixed.len() as u64;
        counts.gt_det += view.gt.len() as u64;
        counts.fn_ += view.gt.len() as u64 - m;
        counts.fp += view.pred.len() as u64 - m;
    }
    counts
}

/// 1 − (FN + FP + IDSW) / gtDet. May be negative.
pub fn mota(c: &ClearCounts) -> Result<f64, MetricError> {
    if c.gt_det == 0 {
        return Err(MetricError::NoGroundTruth);
    }
    Ok(1.0 - (c.fn_ + c.fp + c.idsw) as f64 / c.gt_det as f64)
}

/// Mean IoU over true positives.
pub fn motp(c: &ClearCounts) -> Result<f64, MetricError> {
    if c.tp == 0 {
        return Err(MetricError::NoTruePositives);
    }
    Ok(c.similarity_sum / c.tp as f64)
}

/// Global identity matching between whole trajectories.
pub fn identity_counts(gt: &[TrackedDetection], pred: &[TrackedDetection]) -> IdentityCounts {
    let gt_len = counts_per_id(gt);
    let pred_len = counts_per_id(pred);
    let gt_ids: Vec<TrackId> = gt_len.keys().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let pred_ids: Vec<TrackId> = pred_len.keys().copied().collect::<BTreeSet<_>>().into_iter().collect();

    let mut overlap: HashMap<(TrackId, TrackId), u64> = HashMap::new();
    for view in frames(gt, pred) {
        for (i, g) in view.gt.iter().enumerate() {
            for (j, p) in view.pred.iter().enumerate() {
                if view.sim.get(i, j) >= MATCH_THRESHOLD {
                    *overlap.entry((*g, *p)).or_insert(0) += 1;
                }
            }
        }
    }

    let (ng, np) = (gt_ids.len(), pred_ids.len());
    let n = ng + np;
    // Rows: gt trajectories then pred dummies. Cols: pred trajectories then gt dummies.
    let cost = CostMatrix::from_fn(n, n, |i, j| match (i < ng, j < np) {
        (true, true) => {
            let ov = overlap.get(&(gt_ids[i], pred_ids[j])).copied().unwrap_or(0);
            (gt_len[&gt_ids[i]] + pred_len[&pred_ids[j]] - 2 * ov) as f64
        }
        (true, false) => gt_len[&gt_ids[i]] as f64,
        (false, true) => pred_len[&pred_ids[j]] as f64,
        (false, false) => 0.0,
    });
    let allowed = |i: usize, j: usize| match (i < ng, j < np) {
        (true, false) => j - np == i,
        (false, true) => i - ng == j,
        _ => true,
    };
    let idtp: u64 = solve_masked(&cost, allowed)
        .matches
        .into_iter()
        .filter(|&(i, j)| i < ng && j < np)
        .map(|(i, j)| overlap.get(&(gt_ids[i], pred_ids[j])).copied().unwrap_or(0))
        .sum();
    IdentityCounts {
        idtp,
        idfn: gt.len() as u64 - idtp,
        idfp: pred.len() as u64 - idtp,
    }
}

pub fn idf1(gt: &[TrackedDetection], pred: &[TrackedDetection]) -> (f64, IdentityCounts) {
    let counts = identity_counts(gt, pred);
    (counts.idf1(), counts)
}

pub fn hota_with_alphas(gt: &[TrackedDetection], pred: &[TrackedDetection], alphas: Vec<f64>) -> HotaAccumulator {
    let gt_len = counts_per_id(gt);
    let pred_len = counts_per_id(pred);
    let views = frames(gt, pred);
    let mut acc = HotaAccumulator::new(alphas);
    for a in 0..acc.alphas.len() {
        let alpha = acc.alphas[a];
        let mut pair_hits: BTreeMap<(TrackId, TrackId), u64> = BTreeMap::new();
        for view in &views {
            let matches = view.matching(alpha);
            let m = matches.len() as u64;
            acc.tp[a] += m;
            acc.fn_[a] += view.gt.len() as u64 - m;
            acc.fp[a] += view.pred.len() as u64 - m;
            for (i, j) in matches {
                *pair_hits.entry((view.gt[i], view.pred[j])).or_insert(0) += 1;
            }
        }
        acc.ass_sum[a] = pair_hits
            .iter()
            .map(|(&(g, p), &tpa)| {
                let fna = gt_len[&g] - tpa;
                let fpa = pred_len[&p] - tpa;
                tpa as f64 * tpa as f64 / (tpa + fna + fpa) as f64
            })
            .sum();
    }
    acc
}

pub fn hota(gt: &[TrackedDetection], pred: &[TrackedDetection]) -> (f64, HotaAccumulator) {
    let acc = hota_with_alphas(gt, pred, default_alphas());
    (acc.hota(), acc)
}

/// Raw counts for one or more sequences; pools by addition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationCounts {
    pub clear: ClearCounts,
    pub identity: IdentityCounts,
    pub hota: HotaAccumulator,
    pub pred_det: u64,
}

impl EvaluationCounts {
    pub fn for_sequence(gt: &[TrackedDetection], pred: &[TrackedDetection]) -> Self {
        Self {
            clear: match_clear(gt, pred, MATCH_THRESHOLD),
            identity: identity_counts(gt, pred),
            hota: hota(gt, pred).1,
            pred_det: pred.len() as u64,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.clear.merge(&other.clear);
        self.identity.merge(&other.identity);
        self.hota.merge(&other.hota);
        self.pred_det += other.pred_det;
    }

    pub fn report(&self) -> Result<MetricsReport, MetricError> {
        Ok(MetricsReport {
            mota: mota(&self.clear)?,
            motp: motp(&self.clear).ok(),
            idf1: self.identity.idf1(),
            hota: self.hota.hota(),
            det_a: self.hota.det_a(),
            ass_a: self.hota.ass_a(),
            clear: self.clear,
            identity: self.identity,
            pred_det: self.pred_det,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mota: f64,
    /// `None` when there are no true positives.
    pub motp: Option<f64>,
    pub idf1: f64,
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub clear: ClearCounts,
    pub identity: IdentityCounts,
    pub pred_det: u64,
}

pub fn evaluate(gt: &[TrackedDetection], pred: &[TrackedDetection]) -> Result<MetricsReport, MetricError> {
    EvaluationCounts::for_sequence(gt, pred).report()
}

/// Pools raw counts over several `(gt, pred)` sequences before scoring.
pub fn evaluate_many<'a>(
    sequences: impl IntoIterator<Item = (&'a [TrackedDetection], &'a [TrackedDetection])>,
) -> Result<MetricsReport, MetricError> {
    let mut total = EvaluationCounts::default();
    for (gt, pred) in sequences {
        total.merge(&EvaluationCounts::for_sequence(gt, pred));
    }
    total.report()
}

/// Percentage with one decimal, as in the report tables.
pub fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "IDF1,HOTA,MOTA,MOTP,DetA,AssA,gtDet,predDet,TP,FP,FN,IDSW,IDTP,IDFP,IDFN";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            pct(self.idf1),
            pct(self.hota),
            pct(self.mota),
            self.motp.map_or_else(|| "-".to_string(), pct),
            pct(self.det_a),
            pct(self.ass_a),
            self.clear.gt_det,
            self.pred_det,
            self.clear.tp,
            self.clear.fp,
            self.clear.fn_,
            self.clear.idsw,
            self.identity.idtp,
            self.identity.idfp,
            self.identity.idfn,
        )
    }

    /// `name value` lines, scores in percent.
    pub fn table(&self) -> String {
        let motp = self.motp.map_or_else(|| "-".to_string(), pct);
        let rows = [
            ("IDF1", pct(self.idf1)),
            ("HOTA", pct(self.hota)),
            ("MOTA", pct(self.mota)),
            ("MOTP", motp),
            ("DetA", pct(self.det_a)),
            ("AssA", pct(self.ass_a)),
            ("gtDet", self.clear.gt_det.to_string()),
            ("predDet", self.pred_det.to_string()),
            ("TP", self.clear.tp.to_string()),
            ("FP", self.clear.fp.to_string()),
            ("FN", self.clear.fn_.to_string()),
            ("IDSW", self.clear.idsw.to_string()),
            ("IDTP", self.identity.idtp.to_string()),
            ("IDFP", self.identity.idfp.to_string()),
            ("IDFN", self.identity.idfn.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k:<8}{v:>8}\n")).collect()
    }
}

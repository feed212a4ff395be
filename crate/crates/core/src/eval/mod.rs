//! Detection evaluation: IoU matching against motion-labelled ground truth,
//! per-class precision/recall/F1, AP per class and mAP.

pub mod ap;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{BoundingBox2D, FusedObject, ModelError};
pub use ap::{AllPoint, ApInterpolation, ApRegistry, ElevenPoint, PrCurve, PrPoint};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CUTOFF_M: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("IoU threshold {0} outside (0, 1]")]
    IouThreshold(f64),
    #[error("cutoff {0} must be positive")]
    Cutoff(f64),
    #[error("unknown AP interpolation method `{0}`")]
    UnknownApMethod(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub trait Longitudinal {
    fn longitudinal_distance(&self) -> Option<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub frame_id: i64,
    pub class_label: String,
    pub bbox: BoundingBox2D,
    pub longitudinal_distance: Option<f64>,
}

impl GroundTruthObject {
    pub fn new(
        frame_id: i64,
        class_label: impl Into<String>,
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        longitudinal_distance: Option<f64>,
    ) -> Result<Self, ModelError> {
        let class_label = class_label.into();
        let bbox = BoundingBox2D::new(class_label.clone(), 1.0, x_min, y_min, x_max, y_max)?;
        Ok(Self {
            frame_id,
            class_label,
            bbox,
            longitudinal_distance,
        })
    }
}

impl Longitudinal for GroundTruthObject {
    fn longitudinal_distance(&self) -> Option<f64> {
        self.longitudinal_distance
    }
}

/// A scored detection in the ground-truth label space.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub frame_id: i64,
    pub class_label: String,
    pub bbox: BoundingBox2D,
    pub longitudinal_distance: Option<f64>,
}

impl Prediction {
    pub fn confidence(&self) -> f64 {
        self.bbox.confidence()
    }
}

impl From<&FusedObject> for Prediction {
    /// Class becomes the motion-qualified label; distance is the forward
    /// grid coordinate.
    fn from(o: &FusedObject) -> Self {
        Self {
            frame_id: o.frame_id(),
            class_label: o.motion_label(),
            bbox: o.source_box().clone(),
            longitudinal_distance: Some(o.position().0),
        }
    }
}

impl Longitudinal for Prediction {
    fn longitudinal_distance(&self) -> Option<f64> {
        self.longitudinal_distance
    }
}

pub fn iou(a: &BoundingBox2D, b: &BoundingBox2D) -> f64 {
    let w = a.x_max().min(b.x_max()) - a.x_min().max(b.x_min());
    let h = a.y_max().min(b.y_max()) - a.y_min().max(b.y_min());
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Keeps objects no farther than `cutoff`; objects without a distance are kept.
pub fn longitudinal_filter<T: Longitudinal + Clone>(
    objects: &[T],
    cutoff: f64,
) -> Result<Vec<T>, EvalError> {
    if !(cutoff > 0.0) {
        return Err(EvalError::Cutoff(cutoff));
    }
    Ok(objects
        .iter()
        .filter(|o| o.longitudinal_distance().is_none_or(|d| d <= cutoff))
        .cloned()
        .collect())
}

/// Indices into the inputs of [`match_frame`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    /// `(prediction, ground truth)` pairs, in matching order.
    pub true_positives: Vec<(usize, usize)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
    /// Predictions in the order they were matched (descending confidence).
    pub ranking: Vec<usize>,
}

fn check_iou_threshold(t: f64) -> Result<(), EvalError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(EvalError::IouThreshold(t))
    }
}

/// Greedy matching of one frame.
///
/// Predictions are visited by descending confidence (input order breaks
/// ties); each takes the still-unmatched same-class ground truth with the
/// highest IoU at or above the threshold, the lowest index winning ties.
pub fn match_frame(
    preds: &[Prediction],
    gts: &[GroundTruthObject],
    iou_threshold: f64,
) -> Result<FrameMatch, EvalError> {
    check_iou_threshold(iou_threshold)?;
    let mut ranking: Vec<usize> = (0..preds.len()).collect();
    ranking.sort_by(|&a, &b| preds[b].confidence().total_cmp(&preds[a].confidence()));

    let mut taken = vec![false; gts.len()];
    let mut out = FrameMatch::default();
    for &pi in &ranking {
        let pred = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if taken[gi] || gt.class_label != pred.class_label {
                continue;
            }
            let overlap = iou(&pred.bbox, &gt.bbox);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((gi, overlap));
            }
        }
        match best {
            Some((gi, _)) => {
                taken[gi] = true;
                out.true_positives.push((pi, gi));
            }
            None => out.false_positives.push(pi),
        }
    }
    out.false_negatives = (0..gts.len()).filter(|&gi| !taken[gi]).collect();
    out.ranking = ranking;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class_label: String,
    /// Percentages in `[0, 100]`.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// A prediction whose class never appears in the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMismatch {
    pub frame_id: i64,
    pub class_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Sorted by class label.
    pub classes: Vec<ClassMetrics>,
    pub curves: Vec<(String, PrCurve)>,
    /// Mean AP over classes with at least one (filtered) ground-truth object.
    pub map: f64,
    pub label_mismatches: Vec<LabelMismatch>,
}

impl EvalReport {
    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.class_label == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    pub iou_threshold: f64,
    pub cutoff_m: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            cutoff_m: DEFAULT_CUTOFF_M,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    confidence: f64,
    frame_id: i64,
    rank: usize,
    hit: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ClassTally {
    n_gt: usize,
    tp: usize,
    fp: usize,
    fn_: usize,
    scored: Vec<Scored>,
}

/// Per-class counts and scored detections gathered frame by frame.
///
/// Merging is associative and commutative, so frames may be matched in any
/// grouping and combined afterwards with identical results.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalAccumulator {
    classes: BTreeMap<String, ClassTally>,
    mismatches: Vec<LabelMismatch>,
}

impl EvalAccumulator {
    /// Matches one frame. `vocabulary` is the set of ground-truth labels of
    /// the whole dataset; predictions outside it are recorded as mismatches
    /// and counted as false positives.
    pub fn add_frame(
        &mut self,
        frame_id: i64,
        preds: &[Prediction],
        gts: &[GroundTruthObject],
        vocabulary: &BTreeSet<String>,
        iou_threshold: f64,
    ) -> Result<(), EvalError> {
        let m = match_frame(preds, gts, iou_threshold)?;
        for gt in gts {
            self.classes.entry(gt.class_label.clone()).or_default().n_gt += 1;
        }
        let mut hit = vec![false; preds.len()];
        for &(pi, _) in &m.true_positives {
            hit[pi] = true;
        }
        for (rank, &pi) in m.ranking.iter().enumerate() {
            let pred = &preds[pi];
            if !vocabulary.contains(&pred.class_label) {
                self.mismatches.push(LabelMismatch {
                    frame_id,
                    class_label: pred.class_label.clone(),
                });
            }
            let tally = self.classes.entry(pred.class_label.clone()).or_default();
            if hit[pi] {
                tally.tp += 1;
            } else {
                tally.fp += 1;
            }
            tally.scored.push(Scored {
                confidence: pred.confidence(),
                frame_id,
                rank,
                hit: hit[pi],
            });
        }
        for &gi in &m.false_negatives {
            self.classes
                .entry(gts[gi].class_label.clone())
                .or_default()
                .fn_ += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: EvalAccumulator) {
        for (label, t) in other.classes {
            let mine = self.classes.entry(label).or_default();
            mine.n_gt += t.n_gt;
            mine.tp += t.tp;
            mine.fp += t.fp;
            mine.fn_ += t.fn_;
            mine.scored.extend(t.scored);
        }
        self.mismatches.extend(other.mismatches);
    }

    pub fn finish(mut self, method: &dyn ApInterpolation) -> EvalReport {
        let mut classes = Vec::new();
        let mut curves = Vec::new();
        let mut ap_sum = 0.0;
        let mut ap_count = 0usize;
        for (label, mut t) in std::mem::take(&mut self.classes) {
            t.scored.sort_by(|a, b| {
                b.confidence
                    .total_cmp(&a.confidence)
                    .then(a.frame_id.cmp(&b.frame_id))
                    .then(a.rank.cmp(&b.rank))
            });
            let ranked: Vec<(f64, bool)> = t.scored.iter().map(|s| (s.confidence, s.hit)).collect();
            let curve = PrCurve::from_ranked(&ranked, t.n_gt);
            let ap = method.area(&curve);
            if t.n_gt > 0 {
                ap_sum += ap;
                ap_count += 1;
            }
            let precision = percentage(t.tp, t.tp + t.fp);
            let recall = percentage(t.tp, t.tp + t.fn_);
            classes.push(ClassMetrics {
                class_label: label.clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                ap,
                tp: t.tp,
                fp: t.fp,
                fn_: t.fn_,
            });
            curves.push((label, curve));
        }
        self.mismatches
            .sort_by(|a, b| a.frame_id.cmp(&b.frame_id).then(a.class_label.cmp(&b.class_label)));
        EvalReport {
            classes,
            curves,
            map: if ap_count == 0 {
                0.0
            } else {
                ap_sum / ap_count as f64
            },
            label_mismatches: self.mismatches,
        }
    }
}

fn percentage(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Ground-truth labels of a dataset, before any distance filtering.
pub fn vocabulary(gts: &[GroundTruthObject]) -> BTreeSet<String> {
    gts.iter().map(|g| g.class_label.clone()).collect()
}

/// Predictions and ground truth of one frame.
pub type FrameGroup = (Vec<Prediction>, Vec<GroundTruthObject>);

/// Groups (already filtered) objects by frame id.
pub fn group_by_frame(
    preds: &[Prediction],
    gts: &[GroundTruthObject],
) -> BTreeMap<i64, FrameGroup> {
    let mut frames: BTreeMap<i64, FrameGroup> = BTreeMap::new();
    for p in preds {
        frames.entry(p.frame_id).or_default().0.push(p.clone());
    }
    for g in gts {
        frames.entry(g.frame_id).or_default().1.push(g.clone());
    }
    frames
}

/// Full evaluation: distance filter on both sides, per-frame matching,
/// aggregation.
pub fn evaluate(
    preds: &[Prediction],
    gts: &[GroundTruthObject],
    params: &EvalParams,
    method: &dyn ApInterpolation,
) -> Result<EvalReport, EvalError> {
    check_iou_threshold(params.iou_threshold)?;
    let vocab = vocabulary(gts);
    let preds = longitudinal_filter(preds, params.cutoff_m)?;
    let gts = longitudinal_filter(gts, params.cutoff_m)?;
    let mut acc = EvalAccumulator::default();
    for (frame_id, (p, g)) in group_by_frame(&preds, &gts) {
        acc.add_frame(frame_id, &p, &g, &vocab, params.iou_threshold)?;
    }
    Ok(acc.finish(method))
}

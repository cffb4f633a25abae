//! VOC-style evaluation of oriented detections.
//!
//! Detections are matched greedily in score order to the highest-IoU
//! unmatched ground truth. Difficult ground truth never counts towards
//! recall: a detection whose best candidate is difficult is ignored rather
//! than scored as a false positive.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Quad;
use crate::nms::{score_order, topk_indices, ScoredBox};
use crate::overlap::ConvexQuad;

pub const DEFAULT_MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtInstance {
    pub quad: Quad,
    pub class_id: usize,
    pub difficult: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchFlag {
    Tp,
    Fp,
    /// Matched only a difficult instance; excluded from precision and recall.
    Ignored,
}

/// Greedy matcher shared by detection matching and proposal recall.
/// Returns, per entry of `order`, the matched ground-truth index or whether
/// a difficult instance absorbed it.
fn greedy_match(
    boxes: &[ScoredBox],
    order: &[usize],
    gts: &[GtInstance],
    iou_thr: f64,
) -> Vec<(usize, MatchFlag)> {
    let gt_shapes: Vec<ConvexQuad> = gts.iter().map(|g| ConvexQuad::hull_of(&g.quad)).collect();
    let mut taken = vec![false; gts.len()];
    let mut out = Vec::with_capacity(order.len());
    for &d in order {
        let shape = ConvexQuad::hull_of(&boxes[d].shape.to_quad());
        let mut best: Option<(f64, usize)> = None;
        let mut hits_difficult = false;
        for (g, gs) in gt_shapes.iter().enumerate() {
            let iou = shape.iou(gs);
            if iou < iou_thr || iou <= 0.0 {
                continue;
            }
            if gts[g].difficult {
                hits_difficult = true;
            } else if !taken[g] && best.is_none_or(|(b, _)| iou > b) {
                best = Some((iou, g));
            }
        }
        let flag = match best {
            Some((_, g)) => {
                taken[g] = true;
                MatchFlag::Tp
            }
            None if hits_difficult => MatchFlag::Ignored,
            None => MatchFlag::Fp,
        };
        out.push((d, flag));
    }
    out
}

/// TP/FP flags for one class in one image, indexed like `dets`.
pub fn match_detections(dets: &[ScoredBox], gts: &[GtInstance], iou_thr: f64) -> Vec<MatchFlag> {
    let order = score_order(dets);
    let mut flags = vec![MatchFlag::Fp; dets.len()];
    for (d, f) in greedy_match(dets, &order, gts, iou_thr) {
        flags[d] = f;
    }
    flags
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrCurve {
    pub precisions: Vec<f64>,
    pub recalls: Vec<f64>,
}

impl PrCurve {
    /// Builds the curve from flags in ranked (descending score) order.
    pub fn from_ranked_flags(flags: &[MatchFlag], n_gt: usize) -> Self {
        let mut curve = PrCurve::default();
        let (mut tp, mut fp) = (0usize, 0usize);
        for f in flags {
            match f {
                MatchFlag::Tp => tp += 1,
                MatchFlag::Fp => fp += 1,
                MatchFlag::Ignored => continue,
            }
            curve.precisions.push(tp as f64 / (tp + fp) as f64);
            curve
                .recalls
                .push(if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 });
        }
        curve
    }

    pub fn is_empty(&self) -> bool {
        self.recalls.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApMetric {
    /// 11-point interpolation at recall 0, 0.1, ..., 1.
    Voc07,
    /// Area under the monotone precision envelope.
    Voc12,
}

pub fn average_precision(pr: &PrCurve, metric: ApMetric) -> f64 {
    if pr.is_empty() {
        return 0.0;
    }
    match metric {
        ApMetric::Voc07 => {
            let mut sum = 0.0;
            for t in 0..=10 {
                let thr = t as f64 / 10.0;
                let p = pr
                    .recalls
                    .iter()
                    .zip(&pr.precisions)
                    .filter(|(r, _)| **r >= thr - 1e-12)
                    .map(|(_, p)| *p)
                    .fold(0.0, f64::max);
                sum += p;
            }
            sum / 11.0
        }
        ApMetric::Voc12 => {
            let mut rec = Vec::with_capacity(pr.recalls.len() + 2);
            let mut prec = Vec::with_capacity(pr.recalls.len() + 2);
            rec.push(0.0);
            prec.push(0.0);
            rec.extend_from_slice(&pr.recalls);
            prec.extend_from_slice(&pr.precisions);
            rec.push(1.0);
            prec.push(0.0);
            for i in (0..prec.len() - 1).rev() {
                prec[i] = prec[i].max(prec[i + 1]);
            }
            (0..rec.len() - 1)
                .filter(|&i| rec[i + 1] != rec[i])
                .map(|i| (rec[i + 1] - rec[i]) * prec[i + 1])
                .sum()
        }
    }
}

/// Detections and annotations of one image (or patch).
#[derive(Debug, Clone, Copy)]
pub struct ImageEval<'a> {
    pub detections: &'a [ScoredBox],
    pub ground_truth: &'a [GtInstance],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    /// AP per class id; `None` for classes without non-difficult ground truth.
    pub per_class: Vec<Option<f64>>,
    pub map: f64,
}

/// Per-class AP and their unweighted mean over classes that have ground truth.
pub fn evaluate_map(images: &[ImageEval<'_>], classes: usize, metric: ApMetric, iou_thr: f64) -> Result<MapReport> {
    for img in images {
        let max_det = img.detections.iter().map(|d| d.class_id).max();
        let max_gt = img.ground_truth.iter().map(|g| g.class_id).max();
        if let Some(c) = max_det.max(max_gt).filter(|&c| c >= classes) {
            return Err(Error::InvalidArgument(format!(
                "class id {c} not below class count {classes}"
            )));
        }
    }
    let per_class: Vec<Option<f64>> = (0..classes)
        .into_par_iter()
        .map(|c| class_ap(images, c, metric, iou_thr))
        .collect();
    let valid: Vec<f64> = per_class.iter().flatten().copied().collect();
    let map = if valid.is_empty() {
        0.0
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    };
    Ok(MapReport { per_class, map })
}

fn class_ap(images: &[ImageEval<'_>], class: usize, metric: ApMetric, iou_thr: f64) -> Option<f64> {
    let mut n_gt = 0;
    // (score, image, detection index) -> flag
    let mut ranked: Vec<(f64, usize, usize, MatchFlag)> = Vec::new();
    for (im, img) in images.iter().enumerate() {
        let gts: Vec<GtInstance> = img
            .ground_truth
            .iter()
            .filter(|g| g.class_id == class)
            .copied()
            .collect();
        n_gt += gts.iter().filter(|g| !g.difficult).count();
        let idx: Vec<usize> = (0..img.detections.len())
            .filter(|&i| img.detections[i].class_id == class)
            .collect();
        let dets: Vec<ScoredBox> = idx.iter().map(|&i| img.detections[i]).collect();
        for (k, f) in match_detections(&dets, &gts, iou_thr).into_iter().enumerate() {
            ranked.push((dets[k].score, im, idx[k], f));
        }
    }
    if n_gt == 0 {
        return None;
    }
    ranked.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let flags: Vec<MatchFlag> = ranked.iter().map(|r| r.3).collect();
    Some(average_precision(&PrCurve::from_ranked_flags(&flags, n_gt), metric))
}

/// Matched and total non-difficult ground truth for the top-`k` proposals.
pub fn proposal_hits(proposals: &[ScoredBox], gts: &[GtInstance], k: usize, iou_thr: f64) -> (usize, usize) {
    let total = gts.iter().filter(|g| !g.difficult).count();
    let order = topk_indices(proposals, k);
    let matched = greedy_match(proposals, &order, gts, iou_thr)
        .into_iter()
        .filter(|(_, f)| *f == MatchFlag::Tp)
        .count();
    (matched, total)
}

/// Fraction of non-difficult ground truth recovered by the top-`k`
/// proposals, one proposal per instance. Vacuously 1 without ground truth.
pub fn proposal_recall(proposals: &[ScoredBox], gts: &[GtInstance], k: usize, iou_thr: f64) -> f64 {
    let (matched, total) = proposal_hits(proposals, gts, k, iou_thr);
    if total == 0 {
        1.0
    } else {
        matched as f64 / total as f64
    }
}

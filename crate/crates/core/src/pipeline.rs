//! Inference-time proposal selection and detection post-processing.

use crate::error::{Error, Result};
use crate::geometry::{vertices_from_midpoint, MidpointBox};
use crate::nms::{nms, per_class_nms, IouKind, ScoredBox, Shape};

pub const DEFAULT_PER_LEVEL: usize = 2000;
pub const DEFAULT_PROPOSAL_NMS: f64 = 0.8;
pub const DEFAULT_MAX_PROPOSALS: usize = 1000;
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.05;
pub const DEFAULT_POLY_NMS: f64 = 0.1;

/// A decoded oriented proposal with its objectness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: MidpointBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalConfig {
    pub per_level: usize,
    pub nms_iou: f64,
    pub max_total: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            per_level: DEFAULT_PER_LEVEL,
            nms_iou: DEFAULT_PROPOSAL_NMS,
            max_total: DEFAULT_MAX_PROPOSALS,
        }
    }
}

/// Survivors of one level: top-k by score, then NMS on external rectangles.
fn level_survivors(level: &[Proposal], cfg: &ProposalConfig) -> Result<Vec<Proposal>> {
    let hboxes = level
        .iter()
        .map(|p| {
            p.bbox.validate()?;
            ScoredBox::new(Shape::H(p.bbox.external_hbox()), p.score, 0)
        })
        .collect::<Result<Vec<_>>>()?;
    let top = crate::nms::topk_indices(&hboxes, cfg.per_level);
    let cand: Vec<ScoredBox> = top.iter().map(|&i| hboxes[i]).collect();
    Ok(nms(&cand, cfg.nms_iou, IouKind::Hbox)
        .into_iter()
        .map(|k| level[top[k]])
        .collect())
}

/// Turns per-level proposals into at most `max_total` quads, best first.
/// Equal scores keep level order, then per-level keep order.
pub fn select_proposals(per_level: &[Vec<Proposal>], cfg: &ProposalConfig) -> Result<Vec<ScoredBox>> {
    let mut merged = Vec::new();
    for level in per_level {
        merged.extend(level_survivors(level, cfg)?);
    }
    merged.sort_by(|a, b| b.score.total_cmp(&a.score));
    merged.truncate(cfg.max_total);
    merged
        .iter()
        .map(|p| ScoredBox::quad(p.score, 0, vertices_from_midpoint(&p.bbox)?))
        .collect()
}

/// Drops detections scoring at or below `score_thr`, then per-class NMS.
pub fn postprocess_detections(dets: &[ScoredBox], score_thr: f64, nms_thr: f64) -> Vec<ScoredBox> {
    let kept: Vec<ScoredBox> = dets.iter().filter(|d| d.score > score_thr).copied().collect();
    per_class_nms(&kept, nms_thr, IouKind::Quad)
        .into_iter()
        .map(|i| kept[i])
        .collect()
}

/// Maps patch detections back to image coordinates and removes duplicates
/// across overlapping patches. Patches are concatenated in `(y, x)` offset
/// order regardless of input order.
pub fn merge_patches(per_patch: &[Vec<ScoredBox>], offsets: &[(u32, u32)], nms_thr: f64) -> Result<Vec<ScoredBox>> {
    if per_patch.len() != offsets.len() {
        return Err(Error::LengthMismatch {
            expected: offsets.len(),
            found: per_patch.len(),
        });
    }
    let mut order: Vec<usize> = (0..offsets.len()).collect();
    order.sort_by_key(|&i| (offsets[i].1, offsets[i].0, i));
    let mut all = Vec::new();
    for i in order {
        let (dx, dy) = (offsets[i].0 as f64, offsets[i].1 as f64);
        all.extend(per_patch[i].iter().map(|d| ScoredBox {
            shape: Shape::Q(d.shape.to_quad().translate(dx, dy)),
            ..*d
        }));
    }
    Ok(per_class_nms(&all, nms_thr, IouKind::Quad)
        .into_iter()
        .map(|i| all[i])
        .collect())
}

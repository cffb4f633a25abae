//! Anchor generation, the six-parameter box coder, and RPN label assignment.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Delta6, HBox, MidpointBox};
use crate::overlap::hbox_iou;

/// Bound on `|dw|` and `|dh|` before exponentiation.
pub fn max_log_scale() -> f64 {
    (1000.0f64 / 16.0).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorLevel {
    pub stride: u32,
    /// Anchor area in px².
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSpec {
    pub levels: Vec<AnchorLevel>,
    /// Height-to-width aspect ratios.
    pub ratios: Vec<f64>,
}

impl Default for AnchorSpec {
    /// Five pyramid levels (strides 4..64, areas 32²..512²), ratios 1:2, 1:1, 2:1.
    fn default() -> Self {
        let levels = [(4, 32.0), (8, 64.0), (16, 128.0), (32, 256.0), (64, 512.0)]
            .into_iter()
            .map(|(stride, side): (u32, f64)| AnchorLevel {
                stride,
                area: side * side,
            })
            .collect();
        Self {
            levels,
            ratios: vec![0.5, 1.0, 2.0],
        }
    }
}

impl AnchorSpec {
    pub fn new(levels: Vec<AnchorLevel>, ratios: Vec<f64>) -> Result<Self> {
        let spec = Self { levels, ratios };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.ratios.is_empty() {
            return Err(Error::Empty("anchor levels or ratios"));
        }
        if self.levels.windows(2).any(|w| w[0].stride >= w[1].stride) {
            return Err(Error::InvalidArgument(
                "anchor strides must be strictly increasing".into(),
            ));
        }
        if self.levels.iter().any(|l| l.stride == 0 || l.area.is_nan() || l.area <= 0.0) {
            return Err(Error::InvalidArgument(
                "anchor strides and areas must be positive".into(),
            ));
        }
        if self.ratios.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument(
                "aspect ratios must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Horizontal anchors for every level, cell-major then ratio order.
///
/// The anchor of cell `(i, j)` is centered at `((j + 0.5) s, (i + 0.5) s)`.
pub fn generate_anchors(spec: &AnchorSpec, level_shapes: &[(usize, usize)]) -> Result<Vec<Vec<HBox>>> {
    spec.validate()?;
    if level_shapes.len() != spec.levels.len() {
        return Err(Error::LengthMismatch {
            expected: spec.levels.len(),
            found: level_shapes.len(),
        });
    }
    let out = spec
        .levels
        .iter()
        .zip(level_shapes)
        .map(|(level, &(rows, cols))| {
            let s = level.stride as f64;
            let sizes: Vec<(f64, f64)> = spec
                .ratios
                .iter()
                .map(|&r| {
                    let w = (level.area / r).sqrt();
                    (w, w * r)
                })
                .collect();
            let mut anchors = Vec::with_capacity(rows * cols * sizes.len());
            for i in 0..rows {
                for j in 0..cols {
                    let (cx, cy) = ((j as f64 + 0.5) * s, (i as f64 + 0.5) * s);
                    anchors.extend(sizes.iter().map(|&(w, h)| HBox { cx, cy, w, h }));
                }
            }
            anchors
        })
        .collect();
    Ok(out)
}

/// Applies regression offsets to an anchor. The vertex offsets scale with
/// the decoded size and are clamped so that the result is always valid.
pub fn decode(anchor: &HBox, d: &Delta6) -> MidpointBox {
    let lim = max_log_scale();
    let w = anchor.w * d.dw.clamp(-lim, lim).exp();
    let h = anchor.h * d.dh.clamp(-lim, lim).exp();
    let cx = d.dx * anchor.w + anchor.cx;
    let cy = d.dy * anchor.h + anchor.cy;
    MidpointBox {
        cx,
        cy,
        w,
        h,
        da: (d.dalpha * w).clamp(-0.5 * w, 0.5 * w),
        db: (d.dbeta * h).clamp(-0.5 * h, 0.5 * h),
    }
}

/// Regression target of `gt` relative to `anchor`; inverse of [`decode`].
pub fn encode(anchor: &HBox, gt: &MidpointBox) -> Result<Delta6> {
    if !(anchor.w > 0.0 && anchor.h > 0.0 && gt.w > 0.0 && gt.h > 0.0) {
        return Err(Error::InvalidBox(format!(
            "encode needs positive sizes (anchor {}x{}, gt {}x{})",
            anchor.w, anchor.h, gt.w, gt.h
        )));
    }
    let d = Delta6 {
        dx: (gt.cx - anchor.cx) / anchor.w,
        dy: (gt.cy - anchor.cy) / anchor.h,
        dw: (gt.w / anchor.w).ln(),
        dh: (gt.h / anchor.h).ln(),
        dalpha: gt.da / gt.w,
        dbeta: gt.db / gt.h,
    };
    if !d.is_finite() {
        return Err(Error::NonFinite("Delta6"));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
    Ignore,
}

impl Label {
    /// 1 for positives, 0 otherwise.
    pub fn as_target(self) -> u8 {
        (self == Label::Positive) as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignResult {
    pub labels: Vec<Label>,
    /// Matched ground truth for positive anchors.
    pub matched_gt: Vec<Option<usize>>,
    pub max_iou: Vec<f64>,
}

impl AssignResult {
    pub fn positives(&self) -> Vec<usize> {
        self.indices_of(Label::Positive)
    }

    pub fn negatives(&self) -> Vec<usize> {
        self.indices_of(Label::Negative)
    }

    fn indices_of(&self, label: Label) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignConfig {
    pub pos_iou: f64,
    pub neg_iou: f64,
    /// Floor for the best-anchor-per-GT rule.
    pub min_best_iou: f64,
    /// IoUs this close to a GT's best count as tied for best.
    pub tie_eps: f64,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self {
            pos_iou: 0.7,
            neg_iou: 0.3,
            min_best_iou: 0.3,
            tie_eps: 1e-9,
        }
    }
}

/// Labels anchors against the external rectangles of the ground truth.
pub fn assign_labels(anchors: &[HBox], gt_hboxes: &[HBox]) -> Result<AssignResult> {
    assign_labels_with(anchors, gt_hboxes, &AssignConfig::default())
}

pub fn assign_labels_with(
    anchors: &[HBox],
    gt_hboxes: &[HBox],
    cfg: &AssignConfig,
) -> Result<AssignResult> {
    if anchors.is_empty() {
        return Err(Error::Empty("anchors"));
    }
    if gt_hboxes.is_empty() {
        return Ok(AssignResult {
            labels: vec![Label::Negative; anchors.len()],
            matched_gt: vec![None; anchors.len()],
            max_iou: vec![0.0; anchors.len()],
        });
    }

    let gt_best: Vec<f64> = gt_hboxes
        .par_iter()
        .map(|g| anchors.iter().map(|a| hbox_iou(a, g)).fold(0.0, f64::max))
        .collect();

    let per_anchor: Vec<(Label, Option<usize>, f64)> = anchors
        .par_iter()
        .map(|a| {
            let mut best = (0.0f64, 0usize);
            let mut own: Option<(f64, usize)> = None;
            for (g, gt) in gt_hboxes.iter().enumerate() {
                let iou = hbox_iou(a, gt);
                if iou > best.0 {
                    best = (iou, g);
                }
                let is_gts_best = gt_best[g] > cfg.min_best_iou && iou >= gt_best[g] - cfg.tie_eps;
                if is_gts_best && own.is_none_or(|(o, _)| iou > o) {
                    own = Some((iou, g));
                }
            }
            let (max_iou, argmax) = best;
            if max_iou > cfg.pos_iou {
                (Label::Positive, Some(argmax), max_iou)
            } else if let Some((_, g)) = own {
                (Label::Positive, Some(g), max_iou)
            } else if max_iou < cfg.neg_iou {
                (Label::Negative, None, max_iou)
            } else {
                (Label::Ignore, None, max_iou)
            }
        })
        .collect();

    let mut res = AssignResult {
        labels: Vec::with_capacity(anchors.len()),
        matched_gt: Vec::with_capacity(anchors.len()),
        max_iou: Vec::with_capacity(anchors.len()),
    };
    for (l, m, iou) in per_anchor {
        res.labels.push(l);
        res.matched_gt.push(m);
        res.max_iou.push(iou);
    }
    Ok(res)
}

/// Samples up to `n / 2` positives uniformly without replacement and fills
/// the rest of the batch with negatives. Returned as sorted positives
/// followed by sorted negatives.
pub fn sample_minibatch(assign: &AssignResult, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidArgument("mini-batch size must be positive".into()));
    }
    let pos = assign.positives();
    let neg = assign.negatives();
    if pos.is_empty() && neg.is_empty() {
        return Err(Error::Empty("no positive or negative anchors to sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pos = pos.len().min(n / 2);
    let n_neg = neg.len().min(n - n_pos);
    let mut take = |pool: &[usize], k: usize| {
        let mut picked: Vec<usize> = index::sample(&mut rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        picked.sort_unstable();
        picked
    };
    let mut out = take(&pos, n_pos);
    out.extend(take(&neg, n_neg));
    Ok(out)
}

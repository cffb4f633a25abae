//! Scored boxes, greedy non-maximum suppression and top-k selection.
//!
//! Ordering is always by descending score with ties broken by ascending
//! input index, so results are reproducible bit for bit.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::{external_hbox, HBox, Quad};
use crate::overlap::{hbox_iou, ConvexQuad};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    H(HBox),
    Q(Quad),
}

impl Shape {
    pub fn to_quad(&self) -> Quad {
        match self {
            Shape::H(h) => h.to_quad(),
            Shape::Q(q) => *q,
        }
    }

    pub fn external_hbox(&self) -> HBox {
        match self {
            Shape::H(h) => *h,
            Shape::Q(q) => external_hbox(q),
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Shape {
        match self {
            Shape::H(h) => Shape::H(HBox {
                cx: h.cx + dx,
                cy: h.cy + dy,
                ..*h
            }),
            Shape::Q(q) => Shape::Q(q.translate(dx, dy)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub shape: Shape,
    pub score: f64,
    pub class_id: usize,
}

impl ScoredBox {
    pub fn new(shape: Shape, score: f64, class_id: usize) -> Result<Self> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidArgument(format!(
                "score {score} outside [0, 1]"
            )));
        }
        Ok(Self {
            shape,
            score,
            class_id,
        })
    }

    pub fn quad(score: f64, class_id: usize, q: Quad) -> Result<Self> {
        Self::new(Shape::Q(q), score, class_id)
    }
}

/// Which overlap measure drives suppression. `Hbox` compares external
/// rectangles, `Quad` compares the (convex hulls of the) polygons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IouKind {
    Hbox,
    Quad,
}

fn by_score_then_index(boxes: &[ScoredBox]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| boxes[b].score.total_cmp(&boxes[a].score).then(a.cmp(&b))
}

/// Indices sorted by descending score, ties by ascending index.
pub fn score_order(boxes: &[ScoredBox]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..boxes.len()).collect();
    idx.sort_by(by_score_then_index(boxes));
    idx
}

pub fn topk_indices(boxes: &[ScoredBox], k: usize) -> Vec<usize> {
    let mut idx = score_order(boxes);
    idx.truncate(k);
    idx
}

/// The `k` best boxes in score order (all of them when `k >= n`).
pub fn topk_by_score(boxes: &[ScoredBox], k: usize) -> Vec<ScoredBox> {
    topk_indices(boxes, k)
        .into_iter()
        .map(|i| boxes[i])
        .collect()
}

enum Prepared {
    H(Vec<HBox>),
    Q(Vec<ConvexQuad>),
}

impl Prepared {
    fn new(boxes: &[ScoredBox], kind: IouKind) -> Self {
        match kind {
            IouKind::Hbox => Prepared::H(boxes.iter().map(|b| b.shape.external_hbox()).collect()),
            IouKind::Quad => Prepared::Q(
                boxes
                    .iter()
                    .map(|b| ConvexQuad::hull_of(&b.shape.to_quad()))
                    .collect(),
            ),
        }
    }

    fn iou(&self, i: usize, j: usize) -> f64 {
        match self {
            Prepared::H(h) => hbox_iou(&h[i], &h[j]),
            Prepared::Q(q) => q[i].iou(&q[j]),
        }
    }
}

/// Greedy NMS. Returns the indices of kept boxes in keep order.
///
/// A box is suppressed when its IoU with an already kept box is strictly
/// greater than `iou_threshold`.
pub fn nms(boxes: &[ScoredBox], iou_threshold: f64, kind: IouKind) -> Vec<usize> {
    let order = score_order(boxes);
    let prepared = Prepared::new(boxes, kind);
    let mut suppressed = vec![false; boxes.len()];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && prepared.iou(i, j) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// NMS run independently per `class_id`. Output is grouped by ascending
/// class, each group in keep order.
pub fn per_class_nms(boxes: &[ScoredBox], iou_threshold: f64, kind: IouKind) -> Vec<usize> {
    let mut classes: Vec<usize> = boxes.iter().map(|b| b.class_id).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut keep = Vec::with_capacity(boxes.len());
    for c in classes {
        let members: Vec<usize> = (0..boxes.len())
            .filter(|&i| boxes[i].class_id == c)
            .collect();
        let subset: Vec<ScoredBox> = members.iter().map(|&i| boxes[i]).collect();
        keep.extend(
            nms(&subset, iou_threshold, kind)
                .into_iter()
                .map(|k| members[k]),
        );
    }
    keep
}

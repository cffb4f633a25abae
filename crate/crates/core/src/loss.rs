//! Proposal-stage and head losses evaluated on stored predictions.
//!
//! Both losses normalise classification and regression by the same batch
//! size `N`, and count regression only for positive (foreground) samples.

use crate::coder::encode;
use crate::error::{Error, Result};
use crate::geometry::{
    external_hbox, midpoint_from_quad, parallelogram_to_rect, vertices_from_midpoint, wrap_half_turn,
    Delta6, Quad,
};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub cls_loss: f64,
    pub reg_loss: f64,
    pub total: f64,
    pub n_pos: usize,
    pub n_sampled: usize,
}

pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

/// Derivative of [`smooth_l1`].
pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Smooth L1 summed over the six components of `pred - target`.
pub fn smooth_l1_delta(pred: &Delta6, target: &Delta6) -> f64 {
    (*pred - *target).to_array().into_iter().map(smooth_l1).sum()
}

pub fn binary_ce(p: f64, label: u8) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Logistic squashing of an objectness logit.
pub fn sigmoid(logit: f64) -> f64 {
    1.0 / (1.0 + (-logit).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpnTarget {
    /// 1 = positive, 0 = negative.
    pub label: u8,
    pub deltas: Delta6,
}

/// Objectness cross-entropy plus Smooth L1 box regression over a sampled
/// mini-batch, both divided by `n`.
pub fn rpn_loss(pred_scores: &[f64], pred_deltas: &[Delta6], targets: &[RpnTarget], n: usize) -> Result<LossReport> {
    check_len(pred_scores.len(), targets.len())?;
    check_len(pred_deltas.len(), targets.len())?;
    if n == 0 {
        return Err(Error::InvalidArgument("normaliser N must be positive".into()));
    }
    let norm = n as f64;
    let mut cls = 0.0;
    let mut reg = 0.0;
    let mut n_pos = 0;
    for ((&p, d), t) in pred_scores.iter().zip(pred_deltas).zip(targets) {
        if t.label > 1 {
            return Err(Error::InvalidArgument(format!("label {} is not 0 or 1", t.label)));
        }
        cls += binary_ce(p, t.label);
        if t.label == 1 {
            reg += smooth_l1_delta(d, &t.deltas);
            n_pos += 1;
        }
    }
    Ok(report(cls / norm, reg / norm, n_pos, targets.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadTarget {
    /// 0 is background, `1..=K` are object classes.
    pub class: usize,
    pub deltas: Delta6,
}

/// Multiclass cross-entropy plus Smooth L1 on the target class's deltas.
///
/// `pred_class_probs[i]` has `K + 1` entries (background first);
/// `pred_deltas[i]` has `K` entries, one per object class.
pub fn head_loss(
    pred_class_probs: &[Vec<f64>],
    pred_deltas: &[Vec<Delta6>],
    targets: &[HeadTarget],
    n: usize,
) -> Result<LossReport> {
    check_len(pred_class_probs.len(), targets.len())?;
    check_len(pred_deltas.len(), targets.len())?;
    if n == 0 {
        return Err(Error::InvalidArgument("normaliser N must be positive".into()));
    }
    let norm = n as f64;
    let mut cls = 0.0;
    let mut reg = 0.0;
    let mut n_pos = 0;
    for ((probs, deltas), t) in pred_class_probs.iter().zip(pred_deltas).zip(targets) {
        let sum: f64 = probs.iter().sum();
        if probs.len() < 2 || (sum - 1.0).abs() > 1e-6 || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(format!(
                "class probabilities do not form a simplex (len {}, sum {sum})",
                probs.len()
            )));
        }
        check_len(deltas.len(), probs.len() - 1)?;
        if t.class >= probs.len() {
            return Err(Error::InvalidArgument(format!("target class {} out of range", t.class)));
        }
        cls -= probs[t.class].clamp(PROB_EPS, 1.0 - PROB_EPS).ln();
        if t.class > 0 {
            reg += smooth_l1_delta(&deltas[t.class - 1], &t.deltas);
            n_pos += 1;
        }
    }
    Ok(report(cls / norm, reg / norm, n_pos, targets.len()))
}

/// Frame in which head regression targets are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadTargetConvention {
    /// Six midpoint-offset deltas against the proposal's external rectangle.
    #[default]
    MidpointOffset,
    /// Center offsets in the rectified proposal's rotated frame, log sizes,
    /// and the wrapped angle difference in `dalpha`; `dbeta` is zero.
    RotatedFrame,
}

/// Regression target for a proposal quad and its ground-truth quad.
pub fn head_target(proposal: &Quad, gt: &Quad, convention: HeadTargetConvention) -> Result<Delta6> {
    match convention {
        HeadTargetConvention::MidpointOffset => {
            encode(&external_hbox(proposal), &midpoint_from_quad(gt)?)
        }
        HeadTargetConvention::RotatedFrame => {
            let p = parallelogram_to_rect(proposal)?;
            let g = parallelogram_to_rect(&snap_to_parallelogram(gt)?)?;
            let (s, c) = p.theta.sin_cos();
            let (dx, dy) = (g.cx - p.cx, g.cy - p.cy);
            Ok(Delta6 {
                dx: (dx * c + dy * s) / p.w,
                dy: (-dx * s + dy * c) / p.h,
                dw: (g.w / p.w).ln(),
                dh: (g.h / p.h).ln(),
                dalpha: wrap_half_turn(g.theta - p.theta),
                dbeta: 0.0,
            })
        }
    }
}

fn report(cls: f64, reg: f64, n_pos: usize, n_sampled: usize) -> LossReport {
    LossReport {
        cls_loss: cls,
        reg_loss: reg,
        total: cls + reg,
        n_pos,
        n_sampled,
    }
}

fn check_len(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::LengthMismatch { expected, found });
    }
    Ok(())
}

/// Ground-truth quads are rectangles up to annotation noise; snap them to
/// the parallelogram of their midpoint representation.
fn snap_to_parallelogram(q: &Quad) -> Result<Quad> {
    vertices_from_midpoint(&midpoint_from_quad(q)?)
}

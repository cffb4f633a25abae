//! Kernels for two-stage oriented object detection.
//!
//! The crate covers the non-learned parts of an oriented proposal detector:
//! the midpoint-offset box representation and its conversions
//! ([`geometry`]), anchor coding and label assignment ([`coder`]), exact
//! rotated IoU ([`overlap`]) and suppression ([`nms`]), rotated RoIAlign
//! ([`roi_align`]), training losses ([`loss`]), VOC-style evaluation
//! ([`eval`]), and file formats plus the inference-time proposal and
//! patch-merging pipeline ([`io`], [`tiling`], [`pipeline`]).

pub mod coder;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod nms;
pub mod overlap;
pub mod pipeline;
pub mod roi_align;
pub mod tiling;

pub use error::{Error, Result};
pub use geometry::{
    external_hbox, midpoint_from_quad, parallelogram_to_rect, rect_to_quad, vertices_from_midpoint,
    Delta6, HBox, MidpointBox, Point, Quad, RotatedRect,
};
pub use nms::{ScoredBox, Shape};

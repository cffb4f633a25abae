//! Splitting large scenes into overlapping square patches.

use crate::error::{Error, Result};
use crate::eval::GtInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileScheme {
    pub patch: u32,
    pub stride: u32,
}

impl Default for TileScheme {
    fn default() -> Self {
        Self {
            patch: 1024,
            stride: 824,
        }
    }
}

impl TileScheme {
    pub fn new(patch: u32, stride: u32) -> Result<Self> {
        if patch == 0 || stride == 0 || stride > patch {
            return Err(Error::InvalidArgument(format!(
                "tile stride {stride} must be in 1..={patch}"
            )));
        }
        Ok(Self { patch, stride })
    }
}

fn axis_offsets(len: u32, scheme: &TileScheme) -> Vec<u32> {
    let mut offs = Vec::new();
    let mut off = 0u32;
    while off + scheme.patch < len {
        offs.push(off);
        off += scheme.stride;
    }
    offs.push(len.saturating_sub(scheme.patch));
    offs.dedup();
    offs
}

/// Top-left corners of all patches, row-major by `(y, x)`.
/// The last patch on each axis is flush with the image border.
pub fn tile_offsets(width: u32, height: u32, scheme: &TileScheme) -> Result<Vec<(u32, u32)>> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("image size must be positive".into()));
    }
    let xs = axis_offsets(width, scheme);
    let ys = axis_offsets(height, scheme);
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect())
}

/// Instances whose vertex centroid falls inside the patch, in patch coordinates.
pub fn clip_annotations_to_tile(gts: &[GtInstance], offset: (u32, u32), patch: u32) -> Vec<GtInstance> {
    let (ox, oy) = (offset.0 as f64, offset.1 as f64);
    let p = patch as f64;
    gts.iter()
        .filter(|g| {
            let c = g.quad.centroid();
            c.x >= ox && c.x < ox + p && c.y >= oy && c.y < oy + p
        })
        .map(|g| GtInstance {
            quad: g.quad.translate(-ox, -oy),
            ..*g
        })
        .collect()
}

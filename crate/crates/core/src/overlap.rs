//! Intersection-over-union for axis-aligned boxes and convex quads.
//!
//! Quad intersection clips one convex polygon against every edge of the
//! other (Sutherland-Hodgman) and measures the result with the shoelace
//! formula. Everything runs on fixed-size stack buffers: two convex quads
//! intersect in at most eight vertices.

use crate::error::{Error, Result};
use crate::geometry::{external_hbox, HBox, Point, Quad};

pub fn hbox_iou(a: &HBox, b: &HBox) -> f64 {
    let iw = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if inter <= 0.0 || union <= 0.0 {
        return 0.0;
    }
    (inter / union).min(1.0)
}

/// Area of the intersection of two convex quads.
pub fn quad_intersection_area(a: &Quad, b: &Quad) -> Result<f64> {
    let (a, b) = (ConvexQuad::new(a)?, ConvexQuad::new(b)?);
    Ok(a.intersection_area(&b))
}

pub fn quad_iou(a: &Quad, b: &Quad) -> Result<f64> {
    let (a, b) = (ConvexQuad::new(a)?, ConvexQuad::new(b)?);
    Ok(a.iou(&b))
}

/// A quad checked for convexity, stored counter-clockwise (shoelace-positive)
/// with its area cached.
#[derive(Debug, Clone, Copy)]
pub struct ConvexQuad {
    pts: [Point; 4],
    area: f64,
}

impl ConvexQuad {
    pub fn new(q: &Quad) -> Result<Self> {
        if !q.is_finite() {
            return Err(Error::NonFinite("Quad"));
        }
        if !q.is_convex() {
            return Err(Error::NonConvex);
        }
        Ok(Self::assume_convex(q))
    }

    /// Convex hull of an arbitrary quad; never fails on finite input.
    pub fn hull_of(q: &Quad) -> Self {
        Self::assume_convex(&q.convexified())
    }

    fn assume_convex(q: &Quad) -> Self {
        let signed = q.signed_area();
        let mut pts = q.0;
        if signed < 0.0 {
            pts.reverse();
        }
        let area = if q.is_degenerate() { 0.0 } else { signed.abs() };
        Self { pts, area }
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn intersection_area(&self, other: &ConvexQuad) -> f64 {
        if self.area == 0.0 || other.area == 0.0 {
            return 0.0;
        }
        if !bounds_overlap(&self.pts, &other.pts) {
            return 0.0;
        }
        let mut poly = Poly::from_slice(&other.pts);
        let mut scratch = Poly::default();
        for i in 0..4 {
            let a = self.pts[i];
            let b = self.pts[(i + 1) % 4];
            if a == b {
                continue;
            }
            clip_half_plane(&poly, a, b, &mut scratch);
            std::mem::swap(&mut poly, &mut scratch);
            if poly.len < 3 {
                return 0.0;
            }
        }
        poly.area().min(self.area.min(other.area))
    }

    pub fn iou(&self, other: &ConvexQuad) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area + other.area - inter;
        if inter <= 0.0 || union <= 0.0 {
            return 0.0;
        }
        (inter / union).min(1.0)
    }
}

fn bounds_overlap(a: &[Point; 4], b: &[Point; 4]) -> bool {
    let ha = external_hbox(&Quad(*a));
    let hb = external_hbox(&Quad(*b));
    ha.x1() < hb.x2() && hb.x1() < ha.x2() && ha.y1() < hb.y2() && hb.y1() < ha.y2()
}

const POLY_CAP: usize = 16;

#[derive(Clone, Copy)]
struct Poly {
    pts: [Point; POLY_CAP],
    len: usize,
}

impl Default for Poly {
    fn default() -> Self {
        Self {
            pts: [Point::default(); POLY_CAP],
            len: 0,
        }
    }
}

impl Poly {
    fn from_slice(s: &[Point]) -> Self {
        let mut p = Poly::default();
        p.pts[..s.len()].copy_from_slice(s);
        p.len = s.len();
        p
    }

    fn push(&mut self, p: Point) {
        // Clipping a convex polygon by a half-plane adds at most one vertex.
        debug_assert!(self.len < POLY_CAP);
        if self.len < POLY_CAP {
            self.pts[self.len] = p;
            self.len += 1;
        }
    }

    fn area(&self) -> f64 {
        let p = &self.pts[..self.len];
        let n = p.len();
        let mut s = 0.0;
        for i in 0..n {
            s += p[i].cross(p[(i + 1) % n]);
        }
        0.5 * s.abs()
    }
}

/// Keeps the part of `src` left of the directed line `a -> b`.
fn clip_half_plane(src: &Poly, a: Point, b: Point, dst: &mut Poly) {
    dst.len = 0;
    let dir = b - a;
    let side = |p: Point| dir.cross(p - a);
    let n = src.len;
    for i in 0..n {
        let cur = src.pts[i];
        let next = src.pts[(i + 1) % n];
        let (sc, sn) = (side(cur), side(next));
        if sc >= 0.0 {
            dst.push(cur);
        }
        if (sc >= 0.0) != (sn >= 0.0) {
            let t = sc / (sc - sn);
            dst.push(cur + (next - cur) * t);
        }
    }
}

/// IoU estimated by counting points of a `grid_n x grid_n` lattice (cell
/// centers over the joint bounding box) that fall inside each quad.
///
/// Inside-ness uses the even-odd rule, so the quads need not be convex.
/// Rows are resolved with exact scanline crossings, which classify every
/// lattice point the same way a per-point crossing-number test would.
pub fn rasterized_iou_oracle(a: &Quad, b: &Quad, grid_n: usize) -> f64 {
    assert!(grid_n >= 1, "grid_n must be positive");
    let ha = external_hbox(a);
    let hb = external_hbox(b);
    let x0 = ha.x1().min(hb.x1());
    let y0 = ha.y1().min(hb.y1());
    let x1 = ha.x2().max(hb.x2());
    let y1 = ha.y2().max(hb.y2());
    let (dx, dy) = ((x1 - x0) / grid_n as f64, (y1 - y0) / grid_n as f64);
    if !(dx > 0.0 && dy > 0.0) {
        return 0.0;
    }

    let (mut in_a, mut in_b, mut in_both) = (0u64, 0u64, 0u64);
    let mut spans_a = Vec::with_capacity(4);
    let mut spans_b = Vec::with_capacity(4);
    for row in 0..grid_n {
        let y = y0 + (row as f64 + 0.5) * dy;
        row_spans(a, y, x0, dx, grid_n, &mut spans_a);
        row_spans(b, y, x0, dx, grid_n, &mut spans_b);
        in_a += spans_a.iter().map(|&(s, e)| (e - s) as u64).sum::<u64>();
        in_b += spans_b.iter().map(|&(s, e)| (e - s) as u64).sum::<u64>();
        for &(sa, ea) in &spans_a {
            for &(sb, eb) in &spans_b {
                let (s, e) = (sa.max(sb), ea.min(eb));
                if e > s {
                    in_both += (e - s) as u64;
                }
            }
        }
    }
    let union = in_a + in_b - in_both;
    if union == 0 {
        0.0
    } else {
        in_both as f64 / union as f64
    }
}

/// Column ranges `[start, end)` of lattice points on row `y` inside `q`.
fn row_spans(q: &Quad, y: f64, x0: f64, dx: f64, n: usize, out: &mut Vec<(usize, usize)>) {
    out.clear();
    let v = &q.0;
    let mut xs = [0.0f64; 4];
    let mut k = 0;
    for i in 0..4 {
        let (p, r) = (v[i], v[(i + 1) % 4]);
        // half-open rule on y avoids double counting shared vertices
        if (p.y <= y) != (r.y <= y) {
            xs[k] = p.x + (y - p.y) * (r.x - p.x) / (r.y - p.y);
            k += 1;
        }
    }
    let xs = &mut xs[..k];
    xs.sort_by(f64::total_cmp);
    for pair in xs.chunks_exact(2) {
        // lattice x_j is inside when pair[0] <= x_j < pair[1]
        let start = first_column_at_or_after(pair[0], x0, dx, n);
        let end = first_column_at_or_after(pair[1], x0, dx, n);
        if end > start {
            out.push((start, end));
        }
    }
}

/// Smallest `j` in `0..=n` with `x0 + (j + 0.5) dx >= x`.
fn first_column_at_or_after(x: f64, x0: f64, dx: f64, n: usize) -> usize {
    let col = |j: usize| x0 + (j as f64 + 0.5) * dx;
    let mut j = ((x - x0) / dx - 0.5).ceil().clamp(0.0, n as f64) as usize;
    while j > 0 && col(j - 1) >= x {
        j -= 1;
    }
    while j < n && col(j) < x {
        j += 1;
    }
    j
}

/// Even-odd point-in-polygon test.
pub fn point_in_quad(q: &Quad, p: Point) -> bool {
    let v = &q.0;
    let mut inside = false;
    for i in 0..4 {
        let (a, b) = (v[i], v[(i + 1) % 4]);
        if (a.y <= p.y) != (b.y <= p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

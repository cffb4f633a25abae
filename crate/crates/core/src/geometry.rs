//! Box representations and the exact conversions among them.
//!
//! Coordinates are image pixels with `y` pointing down. A [`MidpointBox`] is
//! the external (axis-aligned) rectangle of an oriented box plus two offsets:
//! `da` moves the top-side midpoint horizontally onto the top vertex and `db`
//! moves the right-side midpoint vertically onto the right vertex. The bottom
//! and left vertices follow by point symmetry about the center.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Tolerance in pixels for the parallelogram and rectangle predicates.
pub const SHAPE_TOL: f64 = 1e-6;

/// Relative area below which a quad counts as degenerate.
const DEGENERATE_REL_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates by `theta` radians (positive turns +x towards +y).
    pub fn rotate(self, theta: f64) -> Point {
        let (s, c) = theta.sin_cos();
        Point::new(self.x * c - self.y * s, self.x * s + self.y * c)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Axis-aligned box in center form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl HBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::NonFinite("HBox"));
        }
        if w < 0.0 || h < 0.0 {
            return Err(Error::InvalidBox(format!("negative size {w}x{h}")));
        }
        Ok(Self { cx, cy, w, h })
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            cx: 0.5 * (x1 + x2),
            cy: 0.5 * (y1 + y2),
            w: x2 - x1,
            h: y2 - y1,
        }
    }

    pub fn x1(&self) -> f64 {
        self.cx - 0.5 * self.w
    }
    pub fn y1(&self) -> f64 {
        self.cy - 0.5 * self.h
    }
    pub fn x2(&self) -> f64 {
        self.cx + 0.5 * self.w
    }
    pub fn y2(&self) -> f64 {
        self.cy + 0.5 * self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Corners clockwise on screen starting top-left.
    pub fn to_quad(&self) -> Quad {
        Quad([
            Point::new(self.x1(), self.y1()),
            Point::new(self.x2(), self.y1()),
            Point::new(self.x2(), self.y2()),
            Point::new(self.x1(), self.y2()),
        ])
    }
}

/// Oriented box as external rectangle plus top/right vertex offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidpointBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    /// Horizontal offset of the top vertex from the top-side midpoint.
    pub da: f64,
    /// Vertical offset of the right vertex from the right-side midpoint.
    pub db: f64,
}

impl MidpointBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, da: f64, db: f64) -> Result<Self> {
        let b = Self { cx, cy, w, h, da, db };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let v = [self.cx, self.cy, self.w, self.h, self.da, self.db];
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("MidpointBox"));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "non-positive size {}x{}",
                self.w, self.h
            )));
        }
        if self.da.abs() > 0.5 * self.w + SHAPE_TOL || self.db.abs() > 0.5 * self.h + SHAPE_TOL {
            return Err(Error::InvalidBox(format!(
                "offsets ({}, {}) exceed half-size ({}, {})",
                self.da,
                self.db,
                0.5 * self.w,
                0.5 * self.h
            )));
        }
        Ok(())
    }

    pub fn external_hbox(&self) -> HBox {
        HBox {
            cx: self.cx,
            cy: self.cy,
            w: self.w,
            h: self.h,
        }
    }
}

/// Four ordered vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad(pub [Point; 4]);

impl Quad {
    pub fn from_coords(c: [f64; 8]) -> Self {
        Quad([
            Point::new(c[0], c[1]),
            Point::new(c[2], c[3]),
            Point::new(c[4], c[5]),
            Point::new(c[6], c[7]),
        ])
    }

    pub fn coords(&self) -> [f64; 8] {
        let v = &self.0;
        [
            v[0].x, v[0].y, v[1].x, v[1].y, v[2].x, v[2].y, v[3].x, v[3].y,
        ]
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|p| p.is_finite())
    }

    /// Shoelace area; positive when the vertex order turns from +x towards +y.
    pub fn signed_area(&self) -> f64 {
        let v = &self.0;
        0.5 * (0..4).map(|i| v[i].cross(v[(i + 1) % 4])).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// True when the quad encloses (numerically) no area.
    pub fn is_degenerate(&self) -> bool {
        let hb = external_hbox(self);
        self.area() <= DEGENERATE_REL_AREA * (1.0 + hb.area())
    }

    /// Mean of the four vertices.
    pub fn centroid(&self) -> Point {
        let v = &self.0;
        Point::new(
            0.25 * (v[0].x + v[1].x + v[2].x + v[3].x),
            0.25 * (v[0].y + v[1].y + v[2].y + v[3].y),
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Quad {
        let d = Point::new(dx, dy);
        Quad(self.0.map(|p| p + d))
    }

    pub fn scale(&self, k: f64) -> Quad {
        Quad(self.0.map(|p| p * k))
    }

    /// Gap between the midpoints of the two diagonals.
    pub fn diagonal_midpoint_gap(&self) -> f64 {
        let v = &self.0;
        ((v[0] + v[2]) * 0.5 - (v[1] + v[3]) * 0.5).norm()
    }

    pub fn is_parallelogram(&self) -> bool {
        self.diagonal_midpoint_gap() <= SHAPE_TOL
    }

    /// Convex (possibly with collinear or repeated vertices) in either winding.
    pub fn is_convex(&self) -> bool {
        let v = &self.0;
        let scale = external_hbox(self).w.max(external_hbox(self).h).max(1.0);
        let eps = 1e-12 * scale * scale;
        let mut pos = false;
        let mut neg = false;
        for i in 0..4 {
            let e0 = v[(i + 1) % 4] - v[i];
            let e1 = v[(i + 2) % 4] - v[(i + 1) % 4];
            let c = e0.cross(e1);
            if c > eps {
                pos = true;
            } else if c < -eps {
                neg = true;
            }
        }
        !(pos && neg) && self.is_simple_winding()
    }

    /// Rejects "bow-tie" orders whose turns agree but wind twice.
    fn is_simple_winding(&self) -> bool {
        let v = &self.0;
        let c = self.centroid();
        let mut total = 0.0;
        for i in 0..4 {
            let a = v[i] - c;
            let b = v[(i + 1) % 4] - c;
            if a.norm() == 0.0 || b.norm() == 0.0 {
                continue;
            }
            total += a.cross(b).atan2(a.dot(b));
        }
        total.abs() < 3.0 * PI
    }

    /// Reorders vertices into convex-hull order, repeating a vertex when the
    /// hull is a triangle. Convex inputs keep their vertex set.
    pub fn convexified(&self) -> Quad {
        if self.is_convex() {
            return *self;
        }
        let mut pts: Vec<Point> = self.0.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        // Andrew's monotone chain
        let mut hull: Vec<Point> = Vec::with_capacity(8);
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
                Box::new(pts.iter())
            } else {
                Box::new(pts.iter().rev())
            };
            for &p in iter {
                while hull.len() >= start + 2 {
                    let a = hull[hull.len() - 2];
                    let b = hull[hull.len() - 1];
                    if (b - a).cross(p - a) <= 0.0 {
                        hull.pop();
                    } else {
                        break;
                    }
                }
                hull.push(p);
            }
            hull.pop();
        }
        while hull.len() < 4 {
            let last = *hull.last().unwrap_or(&pts[0]);
            hull.push(last);
        }
        Quad([hull[0], hull[1], hull[2], hull[3]])
    }
}

/// Oriented rectangle. `w` is the longer side and `theta` the angle of that
/// side against the x axis, in `[-pi/2, pi/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedRect {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

impl RotatedRect {
    /// Builds a canonical rectangle: sides are swapped so that `w >= h` and
    /// the angle is wrapped into `[-pi/2, pi/2)`; squares use `[-pi/2, 0)`.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        if ![cx, cy, w, h, theta].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("RotatedRect"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!("non-positive size {w}x{h}")));
        }
        let (w, h, theta) = if h > w {
            (h, w, theta + FRAC_PI_2)
        } else {
            (w, h, theta)
        };
        let mut theta = wrap_half_turn(theta);
        if w == h && theta >= 0.0 {
            theta -= FRAC_PI_2;
        }
        Ok(Self {
            cx,
            cy,
            w,
            h,
            theta,
        })
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Wraps an angle into `[-pi/2, pi/2)` modulo pi.
pub fn wrap_half_turn(theta: f64) -> f64 {
    let mut t = theta - PI * ((theta + FRAC_PI_2) / PI).floor();
    if t >= FRAC_PI_2 {
        t -= PI;
    }
    if t < -FRAC_PI_2 {
        t += PI;
    }
    t
}

/// Regression offsets between an anchor and a midpoint box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Delta6 {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
    pub dalpha: f64,
    pub dbeta: f64,
}

impl Delta6 {
    pub const fn new(dx: f64, dy: f64, dw: f64, dh: f64, dalpha: f64, dbeta: f64) -> Self {
        Self {
            dx,
            dy,
            dw,
            dh,
            dalpha,
            dbeta,
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.dx, self.dy, self.dw, self.dh, self.dalpha, self.dbeta]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl Sub for Delta6 {
    type Output = Delta6;
    fn sub(self, o: Delta6) -> Delta6 {
        let (a, b) = (self.to_array(), o.to_array());
        Delta6::from_array(std::array::from_fn(|i| a[i] - b[i]))
    }
}

/// Recovers the four vertices (top, right, bottom, left) of a midpoint box.
///
/// The result is always a parallelogram. It may have zero area when an
/// offset sits exactly on a corner; check [`Quad::is_degenerate`].
pub fn vertices_from_midpoint(b: &MidpointBox) -> Result<Quad> {
    b.validate()?;
    let (hw, hh) = (0.5 * b.w, 0.5 * b.h);
    Ok(Quad([
        Point::new(b.cx + b.da, b.cy - hh),
        Point::new(b.cx + hw, b.cy + b.db),
        Point::new(b.cx - b.da, b.cy + hh),
        Point::new(b.cx - hw, b.cy - b.db),
    ]))
}

/// Inverse of [`vertices_from_midpoint`] for quads inscribed in their
/// external rectangle.
///
/// The top vertex is the one with minimal `y` (ties: minimal `x`); the right
/// vertex the one with maximal `x` (ties: minimal `y`).
pub fn midpoint_from_quad(q: &Quad) -> Result<MidpointBox> {
    if !q.is_finite() {
        return Err(Error::NonFinite("Quad"));
    }
    if q.is_degenerate() {
        return Err(Error::Degenerate);
    }
    let hb = external_hbox(q);
    let v = &q.0;
    let top = v
        .iter()
        .copied()
        .min_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)))
        .expect("four vertices");
    let right = v
        .iter()
        .copied()
        .min_by(|a, b| b.x.total_cmp(&a.x).then(a.y.total_cmp(&b.y)))
        .expect("four vertices");
    Ok(MidpointBox {
        cx: hb.cx,
        cy: hb.cy,
        w: hb.w,
        h: hb.h,
        da: top.x - hb.cx,
        db: right.y - hb.cy,
    })
}

/// Turns a parallelogram into an oriented rectangle by stretching its
/// shorter diagonal about the center to the length of the longer one.
pub fn parallelogram_to_rect(q: &Quad) -> Result<RotatedRect> {
    if !q.is_finite() {
        return Err(Error::NonFinite("Quad"));
    }
    let gap = q.diagonal_midpoint_gap();
    if gap > SHAPE_TOL {
        return Err(Error::NotParallelogram { gap });
    }
    let v = &q.0;
    let center = (v[0] + v[1] + v[2] + v[3]) * 0.25;
    let d13 = v[2] - v[0];
    let d24 = v[3] - v[1];
    let (l13, l24) = (d13.norm(), d24.norm());
    if l13 <= f64::EPSILON * (1.0 + l24) || l24 <= f64::EPSILON * (1.0 + l13) {
        return Err(Error::InvalidBox("zero-length diagonal".into()));
    }
    let half = 0.5 * l13.max(l24);
    let u13 = d13 * (half / l13);
    let u24 = d24 * (half / l24);
    let p1 = center - u13;
    let p2 = center - u24;
    let p3 = center + u13;

    let side_a = p2 - p1;
    let side_b = p3 - p2;
    let (la, lb) = (side_a.norm(), side_b.norm());
    if la.min(lb) <= 1e-12 * la.max(lb) {
        return Err(Error::Degenerate);
    }
    if (la - lb).abs() <= 1e-12 * la.max(lb) {
        let side = la.max(lb);
        return RotatedRect::new(center.x, center.y, side, side, side_a.y.atan2(side_a.x));
    }
    let long = if la > lb { side_a } else { side_b };
    RotatedRect::new(
        center.x,
        center.y,
        la.max(lb),
        la.min(lb),
        long.y.atan2(long.x),
    )
}

/// Corners of `r` starting at local `(-w/2, -h/2)`, in local counter-clockwise
/// order (x right, y up).
pub fn rect_to_quad(r: &RotatedRect) -> Quad {
    let c = r.center();
    let (hw, hh) = (0.5 * r.w, 0.5 * r.h);
    let local = [
        Point::new(-hw, -hh),
        Point::new(hw, -hh),
        Point::new(hw, hh),
        Point::new(-hw, hh),
    ];
    Quad(local.map(|p| c + p.rotate(r.theta)))
}

/// Tight axis-aligned bounds of a quad.
pub fn external_hbox(q: &Quad) -> HBox {
    let v = &q.0;
    let (mut x1, mut y1, mut x2, mut y2) = (v[0].x, v[0].y, v[0].x, v[0].y);
    for p in &v[1..] {
        x1 = x1.min(p.x);
        y1 = y1.min(p.y);
        x2 = x2.max(p.x);
        y2 = y2.max(p.y);
    }
    HBox::from_corners(x1, y1, x2, y2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6, SQRT_2};

    fn q(c: [f64; 8]) -> Quad {
        Quad::from_coords(c)
    }

    fn assert_pt(p: Point, x: f64, y: f64, tol: f64) {
        assert!(
            (p.x - x).abs() <= tol && (p.y - y).abs() <= tol,
            "{p:?} != ({x}, {y})"
        );
    }

    /// Max vertex distance, minimised over cyclic rotations of `b`.
    fn quad_dist_up_to_rotation(a: &Quad, b: &Quad) -> f64 {
        (0..4)
            .map(|s| {
                (0..4)
                    .map(|i| (a.0[i] - b.0[(i + s) % 4]).norm())
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn midpoint_zero_offsets_give_rhombus() {
        let b = MidpointBox::new(0.0, 0.0, 4.0, 2.0, 0.0, 0.0).unwrap();
        let v = vertices_from_midpoint(&b).unwrap();
        assert_eq!(v, q([0.0, -1.0, 2.0, 0.0, 0.0, 1.0, -2.0, 0.0]));
    }

    #[test]
    fn midpoint_offsets_substitute_directly() {
        let b = MidpointBox::new(0.0, 0.0, 4.0, 2.0, 1.0, 0.5).unwrap();
        let v = vertices_from_midpoint(&b).unwrap();
        assert_eq!(v, q([1.0, -1.0, 2.0, 0.5, -1.0, 1.0, -2.0, -0.5]));
    }

    #[test]
    fn corner_offsets_collapse_to_flagged_segment() {
        let b = MidpointBox::new(10.0, 20.0, 6.0, 4.0, -3.0, 2.0).unwrap();
        let v = vertices_from_midpoint(&b).unwrap();
        assert_eq!(v, q([7.0, 18.0, 13.0, 22.0, 13.0, 22.0, 7.0, 18.0]));
        assert!(v.is_degenerate());
        assert_eq!(v.area(), 0.0);
        assert!(matches!(midpoint_from_quad(&v), Err(Error::Degenerate)));
    }

    #[test]
    fn vertices_reject_non_finite() {
        let b = MidpointBox {
            cx: f64::NAN,
            cy: 0.0,
            w: 1.0,
            h: 1.0,
            da: 0.0,
            db: 0.0,
        };
        assert!(matches!(vertices_from_midpoint(&b), Err(Error::NonFinite(_))));
        assert!(MidpointBox::new(0.0, 0.0, 2.0, 2.0, 1.5, 0.0).is_err());
    }

    #[test]
    fn midpoint_from_quad_inverts_examples() {
        let b = midpoint_from_quad(&q([0.0, -1.0, 2.0, 0.0, 0.0, 1.0, -2.0, 0.0])).unwrap();
        assert_eq!(b, MidpointBox::new(0.0, 0.0, 4.0, 2.0, 0.0, 0.0).unwrap());
        let b = midpoint_from_quad(&q([1.0, -1.0, 2.0, 0.5, -1.0, 1.0, -2.0, -0.5])).unwrap();
        assert_eq!(b, MidpointBox::new(0.0, 0.0, 4.0, 2.0, 1.0, 0.5).unwrap());
    }

    #[test]
    fn axis_aligned_tie_break() {
        let square = q([-1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0]);
        let b = midpoint_from_quad(&square).unwrap();
        assert_eq!(b, MidpointBox::new(0.0, 0.0, 2.0, 2.0, -1.0, -1.0).unwrap());
        // top-left becomes v1, top-right v2: the original order comes back.
        assert_eq!(vertices_from_midpoint(&b).unwrap(), square);
    }

    #[test]
    fn equal_diagonals_are_a_fixed_point() {
        let r = parallelogram_to_rect(&q([1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0])).unwrap();
        assert!((r.w - SQRT_2).abs() < 1e-12 && (r.h - SQRT_2).abs() < 1e-12);
        assert!((r.theta.abs() - FRAC_PI_4).abs() < 1e-12);
        assert!(r.theta < 0.0);
        assert!(r.cx.abs() < 1e-15 && r.cy.abs() < 1e-15);
    }

    #[test]
    fn shorter_diagonal_is_extended() {
        let r = parallelogram_to_rect(&q([0.0, -1.0, 2.0, 0.0, 0.0, 1.0, -2.0, 0.0])).unwrap();
        let side = 2.0 * SQRT_2;
        assert!((r.w - side).abs() < 1e-12 && (r.h - side).abs() < 1e-12);
        assert!((r.theta + FRAC_PI_4).abs() < 1e-12);
        let corners = rect_to_quad(&r);
        let expect = q([0.0, -2.0, 2.0, 0.0, 0.0, 2.0, -2.0, 0.0]);
        assert!(quad_dist_up_to_rotation(&corners, &expect) < 1e-12);
        // all sides equal and right-angled
        let v = corners.0;
        for i in 0..4 {
            let e0 = v[(i + 1) % 4] - v[i];
            let e1 = v[(i + 2) % 4] - v[(i + 1) % 4];
            assert!((e0.norm() - side).abs() < 1e-12);
            assert!(e0.dot(e1).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangle_maps_to_itself() {
        let r = RotatedRect::new(5.0, 5.0, 4.0, 2.0, FRAC_PI_6).unwrap();
        let back = parallelogram_to_rect(&rect_to_quad(&r)).unwrap();
        for (a, b) in [
            (back.cx, 5.0),
            (back.cy, 5.0),
            (back.w, 4.0),
            (back.h, 2.0),
            (back.theta, FRAC_PI_6),
        ] {
            assert!((a - b).abs() < 1e-6, "{back:?}");
        }
    }

    #[test]
    fn parallelogram_to_rect_errors() {
        let kite = q([0.0, -1.0, 2.0, 0.0, 0.0, 3.0, -2.0, 0.0]);
        assert!(matches!(
            parallelogram_to_rect(&kite),
            Err(Error::NotParallelogram { .. })
        ));
        let collapsed = q([0.0, 0.0, 1.0, 1.0, 0.0, 0.0, -1.0, -1.0]);
        assert!(parallelogram_to_rect(&collapsed).is_err());
    }

    #[test]
    fn rect_to_quad_zero_angle() {
        let r = RotatedRect::new(0.0, 0.0, 4.0, 2.0, 0.0).unwrap();
        assert_eq!(
            rect_to_quad(&r),
            q([-2.0, -1.0, 2.0, -1.0, 2.0, 1.0, -2.0, 1.0])
        );
    }

    #[test]
    fn rect_to_quad_square_canonicalised() {
        let r = RotatedRect::new(0.0, 0.0, 2.0, 2.0, FRAC_PI_4).unwrap();
        assert!((r.theta + FRAC_PI_4).abs() < 1e-15);
        let v = rect_to_quad(&r);
        let expect = q([SQRT_2, 0.0, 0.0, SQRT_2, -SQRT_2, 0.0, 0.0, -SQRT_2]);
        assert!(quad_dist_up_to_rotation(&v, &expect) < 1e-12);
    }

    #[test]
    fn rect_to_quad_quarter_turn() {
        let r = RotatedRect::new(3.0, 4.0, 4.0, 2.0, FRAC_PI_2).unwrap();
        assert_eq!(r.theta, -FRAC_PI_2);
        let v = rect_to_quad(&r);
        // (u, v) -> (v, -u) for theta = -pi/2
        let expect = q([4.0, 2.0, 4.0, 6.0, 2.0, 6.0, 2.0, 2.0]);
        assert!(quad_dist_up_to_rotation(&v, &expect) < 1e-12);
    }

    #[test]
    fn rotated_rect_swaps_sides() {
        let r = RotatedRect::new(0.0, 0.0, 2.0, 4.0, 0.0).unwrap();
        assert_eq!((r.w, r.h), (4.0, 2.0));
        assert_eq!(r.theta, -FRAC_PI_2);
        assert!(RotatedRect::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn external_hbox_examples() {
        let hb = external_hbox(&q([0.0, -1.0, 2.0, 0.0, 0.0, 1.0, -2.0, 0.0]));
        assert_eq!(hb, HBox::new(0.0, 0.0, 4.0, 2.0).unwrap());
        let axis = HBox::new(3.0, 4.0, 2.0, 6.0).unwrap();
        assert_eq!(external_hbox(&axis.to_quad()), axis);
        let hb = external_hbox(&q([1.0, 1.0, 5.0, 3.0, 3.0, 7.0, -1.0, 5.0]));
        assert_eq!(hb, HBox::new(2.0, 4.0, 6.0, 6.0).unwrap());
    }

    #[test]
    fn convexity_predicates() {
        let sq = HBox::new(0.0, 0.0, 2.0, 2.0).unwrap().to_quad();
        assert!(sq.is_convex());
        let bowtie = q([-1.0, -1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0]);
        assert!(!bowtie.is_convex());
        let fixed = bowtie.convexified();
        assert!(fixed.is_convex());
        assert!((fixed.area() - 4.0).abs() < 1e-12);
        let dart = q([0.0, 0.0, 2.0, -2.0, 0.5, 0.0, 2.0, 2.0]);
        assert!(!dart.is_convex());
        let hull = dart.convexified();
        assert!(hull.is_convex());
        assert!((hull.area() - 4.0).abs() < 1e-12);
    }

    fn arb_midpoint() -> impl Strategy<Value = MidpointBox> {
        (
            -500.0..500.0f64,
            -500.0..500.0f64,
            1.0..300.0f64,
            1.0..300.0f64,
            -0.49..0.49f64,
            -0.49..0.49f64,
        )
            .prop_map(|(cx, cy, w, h, a, b)| MidpointBox {
                cx,
                cy,
                w,
                h,
                da: a * w,
                db: b * h,
            })
    }

    fn arb_rect() -> impl Strategy<Value = RotatedRect> {
        (
            -500.0..500.0f64,
            -500.0..500.0f64,
            1.0..300.0f64,
            1.0..300.0f64,
            -PI..PI,
        )
            .prop_map(|(cx, cy, w, h, t)| RotatedRect::new(cx, cy, w, h, t).unwrap())
    }

    proptest! {
        #[test]
        fn midpoint_roundtrip(b in arb_midpoint()) {
            let back = midpoint_from_quad(&vertices_from_midpoint(&b).unwrap()).unwrap();
            for (x, y) in [(back.cx, b.cx), (back.cy, b.cy), (back.w, b.w),
                           (back.h, b.h), (back.da, b.da), (back.db, b.db)] {
                prop_assert!((x - y).abs() < 1e-6, "{:?} vs {:?}", back, b);
            }
        }

        #[test]
        fn parallelogram_closure(b in arb_midpoint()) {
            let v = vertices_from_midpoint(&b).unwrap().0;
            let (s, t) = (v[0] + v[2], v[1] + v[3]);
            assert_pt(s, t.x, t.y, 1e-12 * (1.0 + b.cx.abs() + b.cy.abs()));
        }

        #[test]
        fn rectification_equalises_diagonals(b in arb_midpoint()) {
            let quad = vertices_from_midpoint(&b).unwrap();
            prop_assume!(!quad.is_degenerate());
            let r = parallelogram_to_rect(&quad).unwrap();
            let v = rect_to_quad(&r).0;
            let (d1, d2) = ((v[2] - v[0]).norm(), (v[3] - v[1]).norm());
            prop_assert!((d1 - d2).abs() < 1e-9 * (1.0 + d1));
            prop_assert!(r.area() >= quad.area() * (1.0 - 1e-12));
        }

        #[test]
        fn rectification_idempotent_on_rects(r in arb_rect()) {
            let q1 = rect_to_quad(&r);
            let q2 = rect_to_quad(&parallelogram_to_rect(&q1).unwrap());
            prop_assert!(quad_dist_up_to_rotation(&q1, &q2) < 1e-6);
        }

        #[test]
        fn hbox_contains_rect(r in arb_rect()) {
            let hb = external_hbox(&rect_to_quad(&r));
            prop_assert!(hb.w + 1e-9 >= r.h);
            prop_assert!(hb.w + 1e-9 >= r.w * r.theta.cos().abs());
        }

        #[test]
        fn rotated_rect_is_canonical(r in arb_rect()) {
            prop_assert!(r.w >= r.h);
            prop_assert!((-FRAC_PI_2..FRAC_PI_2).contains(&r.theta));
        }
    }
}

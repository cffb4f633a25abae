//! Rotated RoIAlign on strided feature maps.
//!
//! Feature coordinates are continuous with cell `(row i, col j)` centered at
//! `(j, i)`. A rotated RoI is split into an `m x m` grid in its own frame
//! (`u` along the width, `v` along the height). Each bin averages
//! `k x k` bilinear samples taken at regular sub-bin centers, where the local
//! point `(u, v)` lands at `(xr + u cos t - v sin t, yr + u sin t + v cos t)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::RotatedRect;
use crate::io::Tensor;

pub const DEFAULT_POOL_SIZE: usize = 7;
pub const DEFAULT_SAMPLES_PER_AXIS: usize = 2;
pub const SUPPORTED_STRIDES: [u32; 4] = [4, 8, 16, 32];

/// Dense `C x H x W` tensor, channel-major, tagged with its stride.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    stride: u32,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, stride: u32, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument("feature map needs at least one channel".into()));
        }
        if !SUPPORTED_STRIDES.contains(&stride) {
            return Err(Error::InvalidArgument(format!(
                "feature stride {stride} not in {SUPPORTED_STRIDES:?}"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            stride,
            data,
        })
    }

    /// Fills cell `(c, i, j)` with `f(c, i, j)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        stride: u32,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for i in 0..height {
                for j in 0..width {
                    data.push(f(c, i, j));
                }
            }
        }
        Self::new(channels, height, width, stride, data)
    }

    /// Interprets a rank-3 `(C, H, W)` tensor.
    pub fn from_tensor(t: &Tensor, stride: u32) -> Result<Self> {
        let &[c, h, w] = t.dims.as_slice() else {
            return Err(Error::Tensor(format!(
                "feature map must be rank 3 (C, H, W), got dims {:?}",
                t.dims
            )));
        };
        Self::new(c, h, w, stride, t.data.iter().map(|&v| v as f64).collect())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.channels, self.height, self.width],
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn stride(&self) -> u32 {
        self.stride
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.height + i) * self.width + j]
    }

    fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Rotated RoI in feature-map units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RRoI {
    pub xr: f64,
    pub yr: f64,
    pub wr: f64,
    pub hr: f64,
    pub theta: f64,
}

/// Projects an image-space rectangle onto a map of the given stride. The
/// center is floored to a cell index; the size is scaled but not rounded.
pub fn project_rroi(r: &RotatedRect, stride: u32) -> RRoI {
    let s = stride as f64;
    RRoI {
        xr: (r.cx / s).floor(),
        yr: (r.cy / s).floor(),
        wr: r.w / s,
        hr: r.h / s,
        theta: r.theta,
    }
}

/// Bilinear interpolation of channel `c` at `(x, y)`; neighbours outside the
/// map contribute zero.
pub fn bilinear_sample(f: &FeatureMap, c: usize, x: f64, y: f64) -> f64 {
    assert!(c < f.channels, "channel {c} out of range");
    Tap::new(x, y, f.width, f.height).eval(f.plane(c))
}

/// Corner offsets and fractional position of one bilinear query.
#[derive(Debug, Clone, Copy)]
struct Tap {
    corners: [Option<usize>; 4],
    lx: f64,
    ly: f64,
}

impl Tap {
    const OUTSIDE: Tap = Tap {
        corners: [None; 4],
        lx: 0.0,
        ly: 0.0,
    };

    #[inline]
    fn new(x: f64, y: f64, width: usize, height: usize) -> Tap {
        if !(x > -1.0 && y > -1.0 && x < width as f64 && y < height as f64) {
            return Tap::OUTSIDE;
        }
        let (fx, fy) = (x.floor(), y.floor());
        let (x0, y0) = (fx as i64, fy as i64);
        let at = |cx: i64, cy: i64| {
            (cx >= 0 && cy >= 0 && (cx as usize) < width && (cy as usize) < height)
                .then(|| cy as usize * width + cx as usize)
        };
        Tap {
            corners: [at(x0, y0), at(x0 + 1, y0), at(x0, y0 + 1), at(x0 + 1, y0 + 1)],
            lx: x - fx,
            ly: y - fy,
        }
    }

    /// Written as nested lerps so equal corners come back unchanged.
    #[inline]
    fn eval(&self, plane: &[f64]) -> f64 {
        let v = |k: usize| self.corners[k].map_or(0.0, |o| plane[o]);
        let top = v(0) + self.lx * (v(1) - v(0));
        let bottom = v(2) + self.lx * (v(3) - v(2));
        top + self.ly * (bottom - top)
    }
}

/// Pooled `m x m x C` output, bin-major (`(i * m + j) * C + c`), where `i`
/// runs along the RoI height and `j` along its width.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeatures {
    pub m: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl PooledFeatures {
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.m + j) * self.channels + c]
    }
}

fn validate(r: &RRoI, m: usize, samples_per_axis: usize) -> Result<()> {
    if m == 0 || samples_per_axis == 0 {
        return Err(Error::InvalidArgument(
            "pool size and samples per bin must be positive".into(),
        ));
    }
    if ![r.xr, r.yr, r.wr, r.hr, r.theta].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("RRoI"));
    }
    if r.wr <= 0.0 || r.hr <= 0.0 {
        return Err(Error::InvalidBox(format!(
            "RRoI size {}x{} must be positive",
            r.wr, r.hr
        )));
    }
    Ok(())
}

/// Feature-space sample locations of bin `(i, j)`, row-major over the
/// `k x k` sub-grid.
pub fn bin_sample_points(r: &RRoI, m: usize, k: usize, i: usize, j: usize) -> Vec<(f64, f64)> {
    let (s, c) = r.theta.sin_cos();
    let (bw, bh) = (r.wr / m as f64, r.hr / m as f64);
    let mut pts = Vec::with_capacity(k * k);
    for iy in 0..k {
        let v = -0.5 * r.hr + (i as f64 + (iy as f64 + 0.5) / k as f64) * bh;
        for ix in 0..k {
            let u = -0.5 * r.wr + (j as f64 + (ix as f64 + 0.5) / k as f64) * bw;
            pts.push((r.xr + u * c - v * s, r.yr + u * s + v * c));
        }
    }
    pts
}

/// Rotated RoIAlign of one RoI.
pub fn rroi_align(f: &FeatureMap, r: &RRoI, m: usize, samples_per_axis: usize) -> Result<PooledFeatures> {
    validate(r, m, samples_per_axis)?;
    let per_bin = samples_per_axis * samples_per_axis;
    let bins = m * m;

    // Sample positions are shared by every channel.
    let mut taps = Vec::with_capacity(bins * per_bin);
    for i in 0..m {
        for j in 0..m {
            for (x, y) in bin_sample_points(r, m, samples_per_axis, i, j) {
                taps.push(Tap::new(x, y, f.width, f.height));
            }
        }
    }

    let c_count = f.channels;
    let mut data = vec![0.0; bins * c_count];
    for c in 0..c_count {
        let plane = f.plane(c);
        for (b, bin) in taps.chunks_exact(per_bin).enumerate() {
            // running mean: exact when all samples agree
            let mut mean = 0.0;
            for (n, t) in bin.iter().enumerate() {
                mean += (t.eval(plane) - mean) / (n + 1) as f64;
            }
            data[b * c_count + c] = mean;
        }
    }
    Ok(PooledFeatures {
        m,
        channels: c_count,
        data,
    })
}

/// [`rroi_align`] over many RoIs in parallel; output order follows input.
pub fn rroi_align_batch(
    f: &FeatureMap,
    rois: &[RRoI],
    m: usize,
    samples_per_axis: usize,
) -> Result<Vec<PooledFeatures>> {
    rois.par_iter()
        .map(|r| rroi_align(f, r, m, samples_per_axis))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ramp(h: usize, w: usize) -> FeatureMap {
        FeatureMap::from_fn(1, h, w, 4, |_, _, j| j as f64).unwrap()
    }

    #[test]
    fn projection_examples() {
        let r = RotatedRect::new(100.0, 48.0, 32.0, 16.0, 0.3).unwrap();
        assert_eq!(
            project_rroi(&r, 4),
            RRoI {
                xr: 25.0,
                yr: 12.0,
                wr: 8.0,
                hr: 4.0,
                theta: 0.3
            }
        );
        let r = RotatedRect::new(100.7, 50.3, 32.0, 16.0, 0.0).unwrap();
        let p = project_rroi(&r, 4);
        assert_eq!((p.xr, p.yr, p.wr, p.hr, p.theta), (25.0, 12.0, 8.0, 4.0, 0.0));
        let p = project_rroi(&r, 1);
        assert_eq!((p.xr, p.yr, p.wr, p.hr), (100.0, 50.0, 32.0, 16.0));
    }

    #[test]
    fn bilinear_examples() {
        let f = FeatureMap::new(1, 1, 2, 4, vec![1.0, 3.0]).unwrap();
        assert_eq!(bilinear_sample(&f, 0, 0.0, 0.0), 1.0);
        assert_eq!(bilinear_sample(&f, 0, 1.0, 0.0), 3.0);
        assert_eq!(bilinear_sample(&f, 0, 0.5, 0.0), 2.0);
        assert_eq!(bilinear_sample(&f, 0, 100.0, -50.0), 0.0);
        // zero padding fades to 0 one cell outside
        assert_eq!(bilinear_sample(&f, 0, -0.5, 0.0), 0.5);
        assert_eq!(bilinear_sample(&f, 0, -1.0, 0.0), 0.0);
    }

    #[test]
    fn constant_field_pools_to_constant() {
        let f = FeatureMap::from_fn(3, 32, 32, 8, |_, _, _| 2.5).unwrap();
        for theta in [-1.5, -0.3, 0.0, 0.9] {
            let r = RRoI {
                xr: 16.0,
                yr: 15.0,
                wr: 10.0,
                hr: 6.0,
                theta,
            };
            let out = rroi_align(&f, &r, 7, 2).unwrap();
            assert_eq!(out.data.len(), 49 * 3);
            for v in &out.data {
                assert_eq!(*v, 2.5);
            }
        }
    }

    #[test]
    fn ramp_pools_to_mean_sample_x() {
        let f = ramp(40, 40);
        let r = RRoI {
            xr: 20.0,
            yr: 19.0,
            wr: 12.0,
            hr: 5.0,
            theta: 0.7,
        };
        let out = rroi_align(&f, &r, 7, 2).unwrap();
        let (s, c) = r.theta.sin_cos();
        for i in 0..7 {
            for j in 0..7 {
                let mut mean_x = 0.0;
                for iy in 0..2 {
                    for ix in 0..2 {
                        let u = -6.0 + (j as f64 + (ix as f64 + 0.5) / 2.0) * 12.0 / 7.0;
                        let v = -2.5 + (i as f64 + (iy as f64 + 0.5) / 2.0) * 5.0 / 7.0;
                        mean_x += (20.0 + u * c - v * s) / 4.0;
                    }
                }
                assert!((out.get(i, j, 0) - mean_x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        let f = ramp(4, 4);
        let r = RRoI {
            xr: 1.0,
            yr: 1.0,
            wr: 2.0,
            hr: 2.0,
            theta: 0.0,
        };
        assert!(rroi_align(&f, &r, 0, 2).is_err());
        assert!(rroi_align(&f, &RRoI { wr: 0.0, ..r }, 7, 2).is_err());
        assert!(rroi_align(&f, &RRoI { xr: f64::NAN, ..r }, 7, 2).is_err());
        assert!(FeatureMap::new(1, 2, 2, 4, vec![0.0; 3]).is_err());
        assert!(FeatureMap::new(1, 1, 1, 3, vec![0.0]).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let f = FeatureMap::from_fn(2, 16, 16, 4, |c, i, j| (c * 7 + i * 3 + j) as f64).unwrap();
        let rois: Vec<RRoI> = (0..10)
            .map(|k| RRoI {
                xr: 8.0,
                yr: 7.0,
                wr: 3.0 + k as f64,
                hr: 2.0,
                theta: -1.0 + 0.2 * k as f64,
            })
            .collect();
        let batch = rroi_align_batch(&f, &rois, 7, 2).unwrap();
        for (r, out) in rois.iter().zip(&batch) {
            assert_eq!(*out, rroi_align(&f, r, 7, 2).unwrap());
        }
    }

    /// Rotating the map by 90 degrees (cell (i, j) -> (j, W-1-i)) and the RoI
    /// angle by pi/2 reproduces the pooled features; wrapping the angle back
    /// into [-pi/2, pi/2) reverses both bin axes.
    #[test]
    fn quarter_turn_consistency() {
        let n = 24;
        let f = FeatureMap::from_fn(2, n, n, 4, |c, i, j| ((i * 31 + j * 17 + c * 5) % 13) as f64).unwrap();
        let rot = FeatureMap::from_fn(2, n, n, 4, |c, i, j| f.get(c, n - 1 - j, i)).unwrap();
        for theta in [-1.2, -0.4, 0.0, 0.3] {
            let r = RRoI {
                xr: 11.0,
                yr: 12.0,
                wr: 9.0,
                hr: 5.0,
                theta,
            };
            let turned = RRoI {
                xr: (n - 1) as f64 - r.yr,
                yr: r.xr,
                theta: theta + FRAC_PI_2,
                ..r
            };
            let a = rroi_align(&f, &r, 7, 2).unwrap();
            let wrapped_theta = if turned.theta >= FRAC_PI_2 { turned.theta - PI } else { turned.theta };
            let b = rroi_align(&rot, &RRoI { theta: wrapped_theta, ..turned }, 7, 2).unwrap();
            let flipped = wrapped_theta != turned.theta;
            for i in 0..7 {
                for j in 0..7 {
                    let (bi, bj) = if flipped { (6 - i, 6 - j) } else { (i, j) };
                    for c in 0..2 {
                        assert!((a.get(i, j, c) - b.get(bi, bj, c)).abs() < 1e-5);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn linear_in_features(
            alpha in -3.0..3.0f64, beta in -3.0..3.0f64,
            x in 2.0..14.0f64, y in 2.0..14.0f64, w in 0.5..12.0f64, h in 0.5..12.0f64, t in -1.57..1.57f64,
        ) {
            let f = FeatureMap::from_fn(2, 16, 16, 4, |c, i, j| ((i * 7 + j * 3 + c) % 11) as f64 - 5.0).unwrap();
            let g = FeatureMap::from_fn(2, 16, 16, 4, |c, i, j| ((i * j + c) % 5) as f64 * 0.25).unwrap();
            let mix = FeatureMap::from_fn(2, 16, 16, 4, |c, i, j| alpha * f.get(c, i, j) + beta * g.get(c, i, j)).unwrap();
            let r = RRoI { xr: x, yr: y, wr: w, hr: h, theta: t };
            let (pf, pg, pm) = (rroi_align(&f, &r, 7, 2).unwrap(), rroi_align(&g, &r, 7, 2).unwrap(), rroi_align(&mix, &r, 7, 2).unwrap());
            for k in 0..pm.data.len() {
                prop_assert!((pm.data[k] - (alpha * pf.data[k] + beta * pg.data[k])).abs() < 1e-9);
            }
        }

        #[test]
        fn bounded_by_field_range(
            x in 6.0..10.0f64, y in 6.0..10.0f64, w in 0.5..6.0f64, h in 0.5..6.0f64, t in -1.57..1.57f64,
        ) {
            let f = FeatureMap::from_fn(1, 16, 16, 4, |_, i, j| ((i * 13 + j * 7) % 9) as f64 - 2.0).unwrap();
            let out = rroi_align(&f, &RRoI { xr: x, yr: y, wr: w, hr: h, theta: t }, 7, 2).unwrap();
            for v in out.data {
                prop_assert!((-2.0 - 1e-12..=6.0 + 1e-12).contains(&v));
            }
        }
    }
}

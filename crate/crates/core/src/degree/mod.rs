//! Brouwer degree of planar piecewise-linear boundary maps, computed as
//! winding numbers, together with degree fields and their `L^p` norms.

mod checks;
mod field;

pub use checks::{
    change_of_variables_check, homotopy_stability_check, jacobian_decomposition_check, scale_equivariance_check,
    split_degree_check, CovReport, JacobianMode, JacobianReport, PiecewiseAffineMap, PiecewiseConstant, ScaleReport,
    SplitReport,
};
pub use field::{degree_field, degree_field_from_index, lp_norm, DegreeField, FieldOptions, LpNorm};

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::{dist_point_segment, orient2d, Point, Rect};

/// Relative on-curve tolerance (scaled by the diameter of the curve).
pub const ON_CURVE_TOLERANCE: f64 = 1e-13;

/// Piecewise-linear map from a closed domain polyline into the plane.
#[derive(Clone, Debug)]
pub struct BoundaryMap {
    domain: Vec<Point>,
    image: Vec<Point>,
    /// Hölder exponent the map is claimed to have, if any.
    pub holder_exponent: Option<f64>,
}

impl BoundaryMap {
    /// `domain` and `image` are closed polylines (first point repeated at the
    /// end) of equal length.
    pub fn new(domain: Vec<Point>, image: Vec<Point>) -> Result<Self> {
        if domain.len() != image.len() {
            return Err(Error::param("image", "one image point per domain vertex required"));
        }
        if domain.len() < 4 {
            return Err(Error::param("domain", "at least three distinct vertices required"));
        }
        if domain.first() != domain.last() {
            return Err(Error::param("domain", "polyline must be closed"));
        }
        if image.first() != image.last() {
            return Err(Error::param("image", "image of first and last vertex differ"));
        }
        if image.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("image", "non-finite image point"));
        }
        Ok(BoundaryMap {
            domain,
            image,
            holder_exponent: None,
        })
    }

    pub fn from_fn<F: Fn(Point) -> Point>(domain: Vec<Point>, f: F) -> Result<Self> {
        let image = domain.iter().map(|&p| f(p)).collect();
        BoundaryMap::new(domain, image)
    }

    /// Identity map on the counterclockwise unit square boundary.
    pub fn unit_square() -> Self {
        let d = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 0.0),
        ];
        BoundaryMap::new(d.clone(), d).expect("valid square")
    }

    /// Identity on a regular counterclockwise `n`-gon of the given radius.
    pub fn regular_polygon(n: usize, radius: f64, center: Point) -> Self {
        let mut d: Vec<Point> = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                center + Point::new(t.cos(), t.sin()) * radius
            })
            .collect();
        d.push(d[0]);
        BoundaryMap::new(d.clone(), d).expect("valid polygon")
    }

    pub fn domain(&self) -> &[Point] {
        &self.domain
    }

    pub fn image(&self) -> &[Point] {
        &self.image
    }

    pub fn segment_count(&self) -> usize {
        self.domain.len() - 1
    }

    /// The map `lambda * u`.
    pub fn scaled(&self, lambda: f64) -> Self {
        BoundaryMap {
            domain: self.domain.clone(),
            image: self.image.iter().map(|&p| p * lambda).collect(),
            holder_exponent: self.holder_exponent,
        }
    }

    pub fn with_image(&self, image: Vec<Point>) -> Result<Self> {
        let mut bm = BoundaryMap::new(self.domain.clone(), image)?;
        bm.holder_exponent = self.holder_exponent;
        Ok(bm)
    }

    pub fn image_bbox(&self) -> Rect {
        Rect::bounding(&self.image).expect("non-empty image")
    }

    pub fn winding_index(&self) -> Result<WindingIndex> {
        WindingIndex::from_closed_polyline(&self.image)
    }

    /// Degree of the map at `y` (the winding number of the image curve).
    pub fn degree_at(&self, y: Point) -> Result<i64> {
        winding_number(&self.image, y)
    }
}

#[derive(Clone, Copy, Debug)]
struct WSeg {
    a: Point,
    b: Point,
    mult: i64,
}

/// Banded index over the segments of a closed image curve for exact winding
/// number queries. Repeated segments are merged into net multiplicities.
#[derive(Clone, Debug)]
pub struct WindingIndex {
    segs: Vec<WSeg>,
    bbox: Rect,
    tol: f64,
    y0: f64,
    band_h: f64,
    nbands: usize,
    offsets: Vec<u32>,
    ids: Vec<u32>,
}

fn seg_key(a: Point, b: Point) -> (u64, u64, u64, u64) {
    (a.x.to_bits(), a.y.to_bits(), b.x.to_bits(), b.y.to_bits())
}

impl WindingIndex {
    pub fn from_closed_polyline(pts: &[Point]) -> Result<Self> {
        if pts.len() < 2 {
            return Err(Error::param("polyline", "at least two points required"));
        }
        let mut segs: Vec<(Point, Point, i64)> = pts.windows(2).map(|w| (w[0], w[1], 1)).collect();
        if pts.first() != pts.last() {
            segs.push((pts[pts.len() - 1], pts[0], 1));
        }
        WindingIndex::from_weighted_segments(segs)
    }

    /// Build from directed segments carrying integer multiplicities.
    pub fn from_weighted_segments<I: IntoIterator<Item = (Point, Point, i64)>>(segs: I) -> Result<Self> {
        let mut slot: HashMap<(u64, u64, u64, u64), usize> = HashMap::new();
        let mut merged: Vec<WSeg> = Vec::new();
        for (a, b, m) in segs {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::param("polyline", "non-finite vertex"));
            }
            if a == b {
                continue;
            }
            let (ka, kb) = (seg_key(a, b), seg_key(b, a));
            let (key, a, b, m) = if ka <= kb { (ka, a, b, m) } else { (kb, b, a, -m) };
            match slot.get(&key) {
                Some(&i) => {
                    merged[i].mult = merged[i].mult.checked_add(m).ok_or(Error::Overflow("segment multiplicity"))?;
                }
                None => {
                    slot.insert(key, merged.len());
                    merged.push(WSeg { a, b, mult: m });
                }
            }
        }
        let mut pts = Vec::with_capacity(2 * merged.len());
        for s in &merged {
            pts.push(s.a);
            pts.push(s.b);
        }
        let bbox = Rect::bounding(&pts).unwrap_or(Rect::new(0.0, 0.0, 0.0, 0.0));
        let tol = ON_CURVE_TOLERANCE * bbox.diag();
        let nbands = ((merged.len() as f64).sqrt() * 2.0).ceil().clamp(1.0, 65536.0) as usize;
        let band_h = (bbox.height() / nbands as f64).max(f64::MIN_POSITIVE);
        let mut idx = WindingIndex {
            segs: merged,
            bbox,
            tol,
            y0: bbox.y0,
            band_h,
            nbands,
            offsets: Vec::new(),
            ids: Vec::new(),
        };
        let mut counts = vec![0u32; nbands + 1];
        for s in &idx.segs {
            let (lo, hi) = idx.band_range(s.a.y.min(s.b.y), s.a.y.max(s.b.y));
            for b in lo..=hi {
                counts[b + 1] += 1;
            }
        }
        for b in 0..nbands {
            counts[b + 1] += counts[b];
        }
        let mut fill = counts.clone();
        let mut ids = vec![0u32; counts[nbands] as usize];
        for (k, s) in idx.segs.iter().enumerate() {
            let (lo, hi) = idx.band_range(s.a.y.min(s.b.y), s.a.y.max(s.b.y));
            for b in lo..=hi {
                ids[fill[b] as usize] = k as u32;
                fill[b] += 1;
            }
        }
        idx.offsets = counts;
        idx.ids = ids;
        Ok(idx)
    }

    fn band_of(&self, y: f64) -> usize {
        let b = ((y - self.y0) / self.band_h).floor();
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(self.nbands - 1)
        }
    }

    fn band_range(&self, lo: f64, hi: f64) -> (usize, usize) {
        (self.band_of(lo), self.band_of(hi))
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn len(&self) -> usize {
        self.segs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segs.is_empty()
    }

    /// Merged segments with their net multiplicities (zero-net segments are
    /// kept because the curve still passes through them).
    pub fn segments(&self) -> impl Iterator<Item = (Point, Point, i64)> + '_ {
        self.segs.iter().map(|s| (s.a, s.b, s.mult))
    }

    /// Exact winding number of the curve around `y`.
    ///
    /// Counts signed crossings of the ray `y + t e1` with the half-open rule
    /// `a.y <= y.y < b.y`, which acts as a symbolic upward perturbation of the
    /// ray at vertex hits. Orientation tests are exact.
    pub fn winding(&self, y: Point) -> Result<i64> {
        if self.segs.is_empty() || !self.bbox.expand(self.tol).contains(y) {
            return Ok(0);
        }
        let (blo, bhi) = self.band_range(y.y - self.tol, y.y + self.tol);
        for b in blo..=bhi {
            for &k in &self.ids[self.offsets[b] as usize..self.offsets[b + 1] as usize] {
                let s = self.segs[k as usize];
                if dist_point_segment(y, s.a, s.b) <= self.tol {
                    return Err(Error::OnBoundary { x: y.x, y: y.y });
                }
            }
        }
        let b = self.band_of(y.y);
        let mut w: i128 = 0;
        for &k in &self.ids[self.offsets[b] as usize..self.offsets[b + 1] as usize] {
            let s = self.segs[k as usize];
            if s.mult == 0 {
                continue;
            }
            if s.a.y <= y.y && y.y < s.b.y {
                if orient2d(s.a, s.b, y) > 0.0 {
                    w += s.mult as i128;
                }
            } else if s.b.y <= y.y && y.y < s.a.y && orient2d(s.a, s.b, y) < 0.0 {
                w -= s.mult as i128;
            }
        }
        i64::try_from(w).map_err(|_| Error::Overflow("winding number"))
    }

    /// Distance from `y` to the curve (linear scan).
    pub fn distance(&self, y: Point) -> f64 {
        self.segs
            .iter()
            .map(|s| dist_point_segment(y, s.a, s.b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Total signed angle swept around `y`, divided by `2 pi`.
    pub fn angle_winding(&self, y: Point) -> f64 {
        let mut sum = 0.0;
        for s in &self.segs {
            let (u, v) = (s.a - y, s.b - y);
            sum += s.mult as f64 * u.cross(v).atan2(u.dot(v));
        }
        sum / (2.0 * PI)
    }
}

/// Winding number of the closed polyline `curve` around `y`.
pub fn winding_number(curve: &[Point], y: Point) -> Result<i64> {
    WindingIndex::from_closed_polyline(curve)?.winding(y)
}

/// Winding number by summing signed angles (floating point).
pub fn winding_by_angle(curve: &[Point], y: Point) -> f64 {
    let mut sum = 0.0;
    let n = curve.len();
    for i in 0..n {
        let a = curve[i];
        let b = curve[(i + 1) % n];
        let (u, v) = (a - y, b - y);
        sum += u.cross(v).atan2(u.dot(v));
    }
    sum / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn polygon_examples() {
        let bm = BoundaryMap::regular_polygon(64, 1.0, Point::ORIGIN);
        assert_eq!(bm.degree_at(Point::ORIGIN).unwrap(), 1);
        assert_eq!(bm.degree_at(Point::new(3.0, 0.0)).unwrap(), 0);
        // reversed orientation
        let mut rev = bm.image().to_vec();
        rev.reverse();
        assert_eq!(winding_number(&rev, Point::ORIGIN).unwrap(), -1);
        // ray through a vertex
        assert_eq!(bm.degree_at(Point::new(0.5, 0.0)).unwrap(), 1);
    }

    #[test]
    fn on_curve_is_rejected() {
        let bm = BoundaryMap::unit_square();
        assert!(matches!(bm.degree_at(Point::new(0.5, 0.0)), Err(Error::OnBoundary { .. })));
        assert!(matches!(bm.degree_at(Point::new(1.0, 1.0)), Err(Error::OnBoundary { .. })));
    }

    #[test]
    fn multiply_wound_and_cancelling_segments() {
        let sq = BoundaryMap::unit_square();
        let mut twice = sq.image().to_vec();
        twice.extend_from_slice(&sq.image()[1..]);
        assert_eq!(winding_number(&twice, Point::new(0.5, 0.5)).unwrap(), 2);
        // a spike going out and back along the same segment cancels exactly
        let spike = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(3.0, 0.5),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 0.0),
        ];
        assert_eq!(winding_number(&spike, Point::new(0.5, 0.5)).unwrap(), 1);
        assert_eq!(winding_number(&spike, Point::new(2.0, 0.5)).unwrap(), 0);
    }

    #[test]
    fn ray_casting_matches_angle_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..2000 {
            let n = rng.gen_range(3..12);
            let mut c: Vec<Point> = (0..n).map(|_| Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            c.push(c[0]);
            let y = Point::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
            if let Ok(w) = winding_number(&c, y) {
                assert!((w as f64 - winding_by_angle(&c, y)).abs() < 1e-9);
            }
        }
    }
}

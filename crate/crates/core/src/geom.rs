//! Planar points, rectangles and the small set of exact predicates the rest of
//! the crate builds on.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// A point (or vector) in the plane. Serialized as a `[x, y]` array.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point { x: a[0], y: a[1] }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    #[inline]
    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Counterclockwise rotation by a right angle.
    #[inline]
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    #[inline]
    pub fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Sign of the orientation of the triangle `(a, b, c)`, computed exactly.
///
/// Positive when `c` lies to the left of the directed line `a -> b`.
#[inline]
pub fn orient2d(a: Point, b: Point, c: Point) -> f64 {
    robust::orient2d(
        robust::Coord { x: a.x, y: a.y },
        robust::Coord { x: b.x, y: b.y },
        robust::Coord { x: c.x, y: c.y },
    )
}

/// Closed axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn square(center: Point, half: f64) -> Self {
        Rect::new(center.x - half, center.y - half, center.x + half, center.y + half)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn diag(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn expand(&self, e: f64) -> Rect {
        Rect::new(self.x0 - e, self.y0 - e, self.x1 + e, self.y1 + e)
    }

    pub fn scale(&self, s: f64) -> Rect {
        Rect::new(self.x0 * s, self.y0 * s, self.x1 * s, self.y1 * s)
    }

    pub fn union(&self, o: &Rect) -> Rect {
        Rect::new(
            self.x0.min(o.x0),
            self.y0.min(o.y0),
            self.x1.max(o.x1),
            self.y1.max(o.y1),
        )
    }

    /// Bounding box of a non-empty point set.
    pub fn bounding(points: &[Point]) -> Option<Rect> {
        let first = points.first()?;
        let mut r = Rect::new(first.x, first.y, first.x, first.y);
        for p in &points[1..] {
            r.x0 = r.x0.min(p.x);
            r.y0 = r.y0.min(p.y);
            r.x1 = r.x1.max(p.x);
            r.y1 = r.y1.max(p.y);
        }
        Some(r)
    }

    /// Euclidean distance from `p` to the rectangle (zero inside).
    pub fn dist_to_point(&self, p: Point) -> f64 {
        let dx = (self.x0 - p.x).max(0.0).max(p.x - self.x1);
        let dy = (self.y0 - p.y).max(0.0).max(p.y - self.y1);
        dx.hypot(dy)
    }

    /// Distance between two rectangles (zero when they overlap or touch).
    pub fn dist_to_rect(&self, o: &Rect) -> f64 {
        let dx = (o.x0 - self.x1).max(0.0).max(self.x0 - o.x1);
        let dy = (o.y0 - self.y1).max(0.0).max(self.y0 - o.y1);
        dx.hypot(dy)
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x0, self.y0),
            Point::new(self.x1, self.y0),
            Point::new(self.x1, self.y1),
            Point::new(self.x0, self.y1),
        ]
    }
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn dist_point_segment(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let l2 = ab.norm2();
    if l2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / l2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Liang-Barsky clip of segment `[a, b]` against a closed rectangle.
/// Returns the parameter interval of the part inside, if any.
pub fn clip_segment_rect(a: Point, b: Point, r: &Rect) -> Option<(f64, f64)> {
    let d = b - a;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let checks = [
        (-d.x, a.x - r.x0),
        (d.x, r.x1 - a.x),
        (-d.y, a.y - r.y0),
        (d.y, r.y1 - a.y),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                if t > t1 {
                    return None;
                }
                t0 = t0.max(t);
            } else {
                if t < t0 {
                    return None;
                }
                t1 = t1.min(t);
            }
        }
    }
    Some((t0, t1))
}

pub fn segment_intersects_rect(a: Point, b: Point, r: &Rect) -> bool {
    clip_segment_rect(a, b, r).is_some()
}

/// Distance from the closed segment `[a, b]` to the closed rectangle.
pub fn dist_segment_rect(a: Point, b: Point, r: &Rect) -> f64 {
    if segment_intersects_rect(a, b, r) {
        return 0.0;
    }
    let mut best = r.dist_to_point(a).min(r.dist_to_point(b));
    for c in r.corners() {
        best = best.min(dist_point_segment(c, a, b));
    }
    best
}

/// Exact test for whether closed segments `[a, b]` and `[c, d]` share a point.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient2d(a, b, c);
    let o2 = orient2d(a, b, d);
    let o3 = orient2d(c, d, a);
    let o4 = orient2d(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    let on = |p: Point, q: Point, r: Point| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (o1 == 0.0 && on(a, b, c))
        || (o2 == 0.0 && on(a, b, d))
        || (o3 == 0.0 && on(c, d, a))
        || (o4 == 0.0 && on(c, d, b))
}

/// Distance between closed segments `[a, b]` and `[c, d]`.
pub fn dist_segment_segment(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    dist_point_segment(a, c, d)
        .min(dist_point_segment(b, c, d))
        .min(dist_point_segment(c, a, b))
        .min(dist_point_segment(d, a, b))
}

/// Signed area of a polygon given as a vertex loop (closing vertex optional).
pub fn shoelace(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = crate::quadrature::NeumaierSum::default();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc.add(a.cross(b));
    }
    0.5 * acc.value()
}

/// Clip a polygon against a closed rectangle (Sutherland-Hodgman).
pub fn clip_polygon_rect(poly: &[Point], r: &Rect) -> Vec<Point> {
    let mut out: Vec<Point> = poly.to_vec();
    // (inside test, intersection with boundary) for the four half-planes
    let planes: [(u8, f64); 4] = [(0, r.x0), (1, r.x1), (2, r.y0), (3, r.y1)];
    for (kind, v) in planes {
        if out.is_empty() {
            break;
        }
        let inside = |p: Point| match kind {
            0 => p.x >= v,
            1 => p.x <= v,
            2 => p.y >= v,
            _ => p.y <= v,
        };
        let cut = |p: Point, q: Point| -> Point {
            if kind < 2 {
                let t = (v - p.x) / (q.x - p.x);
                Point::new(v, p.y + t * (q.y - p.y))
            } else {
                let t = (v - p.y) / (q.y - p.y);
                Point::new(p.x + t * (q.x - p.x), v)
            }
        };
        let input = std::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let ci = inside(cur);
            let pi = inside(prev);
            if ci {
                if !pi {
                    out.push(cut(prev, cur));
                }
                out.push(cur);
            } else if pi {
                out.push(cut(prev, cur));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientation_signs() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(1.0, 0.0);
        assert!(orient2d(a, b, Point::new(0.5, 1.0)) > 0.0);
        assert!(orient2d(a, b, Point::new(0.5, -1.0)) < 0.0);
        assert_eq!(orient2d(a, b, Point::new(3.0, 0.0)), 0.0);
    }

    #[test]
    fn segment_rect_distance() {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(dist_segment_rect(Point::new(-1.0, 0.5), Point::new(2.0, 0.5), &r), 0.0);
        let d = dist_segment_rect(Point::new(2.0, 0.0), Point::new(2.0, 1.0), &r);
        assert!((d - 1.0).abs() < 1e-15);
        let d = dist_segment_rect(Point::new(2.0, 3.0), Point::new(3.0, 2.0), &r);
        assert!((d - 1.5 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn touching_segments_intersect() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(1.0, 0.0);
        assert!(segments_intersect(a, b, b, Point::new(1.0, 1.0)));
        assert!(!segments_intersect(a, b, Point::new(0.0, 1e-300), Point::new(1.0, 1e-300)));
        assert!(segments_intersect(a, b, Point::new(0.5, -1.0), Point::new(0.5, 1.0)));
    }

    #[test]
    fn clipping_preserves_area() {
        let tri = [Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(0.0, 2.0)];
        let r = Rect::new(0.0, 0.0, 1.0, 1.0);
        let c = clip_polygon_rect(&tri, &r);
        assert!((shoelace(&c) - 1.0).abs() < 1e-15);
        let r = Rect::new(1.5, 1.5, 3.0, 3.0);
        assert!(shoelace(&clip_polygon_rect(&tri, &r)).abs() < 1e-15);
    }
}

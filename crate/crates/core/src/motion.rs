use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::Point;

/// Orientation-preserving similarity `z -> scale * R(angle) * z + translation`.
///
/// The rotation is cached as `(cos, sin)` so composition and application avoid
/// trigonometric calls; `angle` is kept wrapped to `(-pi, pi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "MotionRepr", into = "MotionRepr")]
pub struct EuclideanMotion {
    scale: f64,
    angle: f64,
    cos: f64,
    sin: f64,
    translation: Point,
}

#[derive(Serialize, Deserialize)]
struct MotionRepr {
    scale: f64,
    angle: f64,
    translation: Point,
}

impl From<MotionRepr> for EuclideanMotion {
    fn from(m: MotionRepr) -> Self {
        EuclideanMotion::new(m.scale, m.angle, m.translation)
    }
}

impl From<EuclideanMotion> for MotionRepr {
    fn from(m: EuclideanMotion) -> Self {
        MotionRepr {
            scale: m.scale,
            angle: m.angle,
            translation: m.translation,
        }
    }
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

impl EuclideanMotion {
    pub const IDENTITY: EuclideanMotion = EuclideanMotion {
        scale: 1.0,
        angle: 0.0,
        cos: 1.0,
        sin: 0.0,
        translation: Point::ORIGIN,
    };

    pub fn new(scale: f64, angle: f64, translation: Point) -> Self {
        let angle = wrap_angle(angle);
        EuclideanMotion {
            scale,
            angle,
            cos: angle.cos(),
            sin: angle.sin(),
            translation,
        }
    }

    /// Build from a rotation given by its unit direction `(c, s)`.
    pub(crate) fn from_direction(scale: f64, c: f64, s: f64, translation: Point) -> Self {
        EuclideanMotion {
            scale,
            angle: s.atan2(c),
            cos: c,
            sin: s,
            translation,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn translation(&self) -> Point {
        self.translation
    }

    /// Unit vector `R(angle) e_1`.
    pub fn direction(&self) -> Point {
        Point::new(self.cos, self.sin)
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let s = self.scale;
        Point::new(
            s * (self.cos * p.x - self.sin * p.y) + self.translation.x,
            s * (self.sin * p.x + self.cos * p.y) + self.translation.y,
        )
    }

    /// Apply only the linear part (rotation and scaling).
    #[inline]
    pub fn apply_vector(&self, v: Point) -> Point {
        let s = self.scale;
        Point::new(
            s * (self.cos * v.x - self.sin * v.y),
            s * (self.sin * v.x + self.cos * v.y),
        )
    }

    #[inline]
    pub fn apply_inverse(&self, p: Point) -> Point {
        let q = p - self.translation;
        let inv = 1.0 / self.scale;
        Point::new(
            inv * (self.cos * q.x + self.sin * q.y),
            inv * (-self.sin * q.x + self.cos * q.y),
        )
    }

    /// The composite `self ∘ other`.
    pub fn compose(&self, other: &EuclideanMotion) -> EuclideanMotion {
        let c = self.cos * other.cos - self.sin * other.sin;
        let s = self.sin * other.cos + self.cos * other.sin;
        EuclideanMotion {
            scale: self.scale * other.scale,
            angle: wrap_angle(self.angle + other.angle),
            cos: c,
            sin: s,
            translation: self.apply(other.translation),
        }
    }

    pub fn inverse(&self) -> EuclideanMotion {
        let inv = 1.0 / self.scale;
        let c = self.cos;
        let s = -self.sin;
        let t = self.translation;
        EuclideanMotion {
            scale: inv,
            angle: wrap_angle(-self.angle),
            cos: c,
            sin: s,
            translation: Point::new(-inv * (c * t.x - s * t.y), -inv * (s * t.x + c * t.y)),
        }
    }
}

/// The unique orientation-preserving similarity sending `(0,0) -> x` and
/// `(1,0) -> y`.
pub fn similarity_from_pair(x: Point, y: Point) -> Result<EuclideanMotion> {
    let d = y - x;
    let len = d.norm();
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::CoincidentPoints);
    }
    Ok(EuclideanMotion::from_direction(len, d.x / len, d.y / len, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Point, b: Point, tol: f64) -> bool {
        a.dist(b) <= tol
    }

    #[test]
    fn pair_examples() {
        let id = similarity_from_pair(Point::new(0.0, 0.0), Point::new(1.0, 0.0)).unwrap();
        assert_eq!(id.scale(), 1.0);
        assert_eq!(id.angle(), 0.0);
        let rot = similarity_from_pair(Point::new(0.0, 0.0), Point::new(0.0, 1.0)).unwrap();
        assert!((rot.angle() - PI / 2.0).abs() < 1e-15);
        assert_eq!(rot.scale(), 1.0);
        assert!(similarity_from_pair(Point::new(1.0, 1.0), Point::new(1.0, 1.0)).is_err());
    }

    #[test]
    fn compose_and_inverse() {
        let a = EuclideanMotion::new(0.3, 2.0, Point::new(0.1, -0.7));
        let b = EuclideanMotion::new(1.7, -2.9, Point::new(3.0, 0.2));
        let p = Point::new(0.37, -1.21);
        assert!(close(a.compose(&b).apply(p), a.apply(b.apply(p)), 1e-14));
        assert!(close(a.inverse().apply(a.apply(p)), p, 1e-14));
        assert!(close(a.apply_inverse(a.apply(p)), p, 1e-14));
        assert!(a.compose(&b).angle() > -PI && a.compose(&b).angle() <= PI);
    }

    #[test]
    fn serde_roundtrip_keeps_fields() {
        let a = EuclideanMotion::new(0.25, 1.0, Point::new(0.5, 0.5));
        let s = serde_json::to_string(&a).unwrap();
        assert!(s.contains("\"scale\"") && s.contains("\"translation\":[0.5,0.5]"));
        let b: EuclideanMotion = serde_json::from_str(&s).unwrap();
        assert!(close(a.apply(Point::new(1.0, 2.0)), b.apply(Point::new(1.0, 2.0)), 1e-15));
    }
}

use std::collections::HashMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{degree_field_from_index, lp_norm, FieldOptions, LpNorm};
use super::{BoundaryMap, WindingIndex};
use crate::analytic::Poly2;
use crate::error::{Error, Result};
use crate::geom::{clip_polygon_rect, orient2d, shoelace, Point, Rect};
use crate::quadrature::NeumaierSum;

/// Outcome of a splitting test.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SplitReport {
    pub checked: usize,
    /// Samples lying on one of the three image curves.
    pub skipped: usize,
    /// `(y, deg u, deg u1, deg u2)` for every checked sample.
    pub values: Vec<(Point, i64, i64, i64)>,
    pub failures: Vec<Point>,
}

impl SplitReport {
    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Split `u` at the segment range `v` into `u1` (equal to `u` on `v`, `y0`
/// elsewhere) and `u2` (equal to `u` off `v`, `y0` on it) and check
/// `deg u = deg u1 + deg u2` at every sample off the three curves.
pub fn split_degree_check(bm: &BoundaryMap, v: Range<usize>, y0: Point, samples: &[Point]) -> Result<SplitReport> {
    let n = bm.segment_count();
    if v.start > v.end || v.end > n {
        return Err(Error::param("V", format!("segment range {v:?} outside 0..{n}")));
    }
    let img = bm.image();
    let snap = 1e-12 * bm.image_bbox().diag().max(1.0);
    for &i in &[v.start, v.end] {
        if img[i].dist(y0) > snap {
            return Err(Error::Precondition(format!(
                "u(vertex {i}) = ({}, {}) differs from y0 = ({}, {})",
                img[i].x, img[i].y, y0.x, y0.y
            )));
        }
    }
    let snapped = |i: usize| if i == v.start || i == v.end { y0 } else { img[i] };
    let u: Vec<Point> = (0..=n).map(|i| if i == 0 || i == n { img[0] } else { img[i] }).collect();
    let u1: Vec<Point> = (0..=n).map(|i| if v.contains(&i) || i == v.end { snapped(i) } else { y0 }).collect();
    let u2: Vec<Point> = (0..=n)
        .map(|i| if i <= v.start || i >= v.end { snapped(i) } else { y0 })
        .collect();
    let (iu, i1, i2) = (
        WindingIndex::from_closed_polyline(&u)?,
        WindingIndex::from_closed_polyline(&u1)?,
        WindingIndex::from_closed_polyline(&u2)?,
    );
    let mut rep = SplitReport::default();
    for &y in samples {
        match (iu.winding(y), i1.winding(y), i2.winding(y)) {
            (Ok(a), Ok(b), Ok(c)) => {
                rep.checked += 1;
                rep.values.push((y, a, b, c));
                if a != b + c {
                    rep.failures.push(y);
                }
            }
            (Err(Error::OnBoundary { .. }), _, _)
            | (_, Err(Error::OnBoundary { .. }), _)
            | (_, _, Err(Error::OnBoundary { .. })) => rep.skipped += 1,
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return Err(e),
        }
    }
    Ok(rep)
}

/// Map that is affine on each triangle of a planar triangulation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiecewiseAffineMap {
    pub vertices: Vec<Point>,
    pub images: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
}

impl PiecewiseAffineMap {
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() != self.images.len() {
            return Err(Error::param("images", "one image per vertex required"));
        }
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= self.vertices.len()) {
                return Err(Error::param("triangles", format!("triangle {k} has an out-of-range vertex")));
            }
            let (a, b, c) = (self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
            if orient2d(a, b, c) == 0.0 {
                return Err(Error::param("triangles", format!("triangle {k} is degenerate")));
            }
        }
        Ok(())
    }

    /// Triangulated `[x0,x1] x [y0,y1]` grid of `nx * ny` squares, each cut
    /// into two triangles.
    pub fn grid(rect: Rect, nx: usize, ny: usize, f: impl Fn(Point) -> Point) -> Self {
        let mut vertices = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Point::new(
                    rect.x0 + rect.width() * i as f64 / nx as f64,
                    rect.y0 + rect.height() * j as f64 / ny as f64,
                ));
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let images = vertices.iter().map(|&p| f(p)).collect();
        PiecewiseAffineMap {
            vertices,
            images,
            triangles,
        }
    }

    /// Boundary edges of the triangulation mapped to the image, oriented
    /// counterclockwise with respect to the domain.
    pub fn boundary_image(&self) -> Vec<(Point, Point, i64)> {
        let mut count: HashMap<(usize, usize), i64> = HashMap::new();
        let mut order: Vec<(usize, usize)> = Vec::new();
        for t in &self.triangles {
            let (a, b, c) = (self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
            let t = if orient2d(a, b, c) > 0.0 { *t } else { [t[0], t[2], t[1]] };
            for k in 0..3 {
                let (i, j) = (t[k], t[(k + 1) % 3]);
                let (key, s) = if i < j { ((i, j), 1) } else { ((j, i), -1) };
                let e = count.entry(key).or_insert_with(|| {
                    order.push(key);
                    0
                });
                *e += s;
            }
        }
        order
            .into_iter()
            .filter_map(|(i, j)| {
                let m = count[&(i, j)];
                (m != 0).then(|| (self.images[i], self.images[j], m))
            })
            .collect()
    }
}

/// Function constant on the cells of a uniform grid, zero outside.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    pub origin: Point,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major cell values.
    pub values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(origin: Point, h: f64, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::param("values", "expected nx * ny cell values"));
        }
        if !(h > 0.0) {
            return Err(Error::param("h", "cell size must be positive"));
        }
        Ok(PiecewiseConstant {
            origin,
            h,
            nx,
            ny,
            values,
        })
    }

    pub fn cell(&self, i: usize, j: usize) -> Rect {
        let x0 = self.origin.x + i as f64 * self.h;
        let y0 = self.origin.y + j as f64 * self.h;
        Rect::new(x0, y0, x0 + self.h, y0 + self.h)
    }

    pub fn rect(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.nx as f64 * self.h,
            self.origin.y + self.ny as f64 * self.h,
        )
    }

    /// Exact integral of the function over a polygon.
    pub fn integrate_polygon(&self, poly: &[Point]) -> f64 {
        let Some(bb) = Rect::bounding(poly) else { return 0.0 };
        let idx = |v: f64, o: f64, n: usize| (((v - o) / self.h).floor().max(0.0) as usize).min(n.saturating_sub(1));
        if bb.dist_to_rect(&self.rect()) > 0.0 {
            return 0.0;
        }
        let (i0, i1) = (idx(bb.x0, self.origin.x, self.nx), idx(bb.x1, self.origin.x, self.nx));
        let (j0, j1) = (idx(bb.y0, self.origin.y, self.ny), idx(bb.y1, self.origin.y, self.ny));
        let mut sum = NeumaierSum::default();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let v = self.values[j * self.nx + i];
                if v != 0.0 {
                    let clipped = clip_polygon_rect(poly, &self.cell(i, j));
                    if clipped.len() >= 3 {
                        sum.add(v * shoelace(&clipped).abs());
                    }
                }
            }
        }
        sum.value()
    }
}

/// Both sides of the change-of-variables identity.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CovReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `sum_T det(Du) int_T phi(u(x)) dx` against `sum_c phi_c int_c deg(u, ., y) dy`.
pub fn change_of_variables_check(u: &PiecewiseAffineMap, phi: &PiecewiseConstant) -> Result<CovReport> {
    u.validate()?;
    let lhs: f64 = u
        .triangles
        .par_iter()
        .map(|t| {
            let (a, b, c) = (u.images[t[0]], u.images[t[1]], u.images[t[2]]);
            let dom = orient2d(u.vertices[t[0]], u.vertices[t[1]], u.vertices[t[2]]).signum();
            let img = orient2d(a, b, c);
            if img == 0.0 {
                0.0
            } else {
                dom * img.signum() * phi.integrate_polygon(&[a, b, c])
            }
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .collect::<NeumaierSum>()
        .value();

    let segs = u.boundary_image();
    let idx = WindingIndex::from_weighted_segments(segs.iter().copied())?;
    let h = phi.h;
    let hull = idx.bbox().expand(h);
    let ext = |lo_need: f64, lo_have: f64| ((lo_have - lo_need) / h).ceil().max(0.0) as usize;
    let (kx0, ky0) = (ext(hull.x0, phi.origin.x), ext(hull.y0, phi.origin.y));
    let pr = phi.rect();
    let (kx1, ky1) = (ext(pr.x1, hull.x1), ext(pr.y1, hull.y1));
    let rect = Rect::new(
        phi.origin.x - kx0 as f64 * h,
        phi.origin.y - ky0 as f64 * h,
        phi.origin.x + (phi.nx + kx1) as f64 * h,
        phi.origin.y + (phi.ny + ky1) as f64 * h,
    );
    let field = degree_field_from_index(&idx, rect, h, 0.0, &FieldOptions::default())?;
    let rhs: Vec<f64> = (0..phi.ny)
        .into_par_iter()
        .flat_map_iter(|j| (0..phi.nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            let v = phi.values[j * phi.nx + i];
            if v == 0.0 {
                return 0.0;
            }
            match field.value(i + kx0, j + ky0) {
                Some(d) => v * d as f64 * h * h,
                None => v * winding_integral(&segs, &phi.cell(i, j)),
            }
        })
        .collect();
    let rhs = rhs.into_iter().collect::<NeumaierSum>().value();
    Ok(CovReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Exact integral of the winding number of a closed chain over a rectangle:
/// the winding number is `sum_s sgn_s 1[y below s]` with `sgn_s = +1` for
/// segments running in the `-x` direction.
pub fn winding_integral(segs: &[(Point, Point, i64)], r: &Rect) -> f64 {
    let mut sum = NeumaierSum::default();
    for &(a, b, m) in segs {
        if a.x == b.x || m == 0 {
            continue;
        }
        let sgn = if b.x < a.x { 1.0 } else { -1.0 };
        sum.add(sgn * m as f64 * area_below(a, b, r));
    }
    sum.value()
}

fn area_below(a: Point, b: Point, r: &Rect) -> f64 {
    let (p, q) = if a.x < b.x { (a, b) } else { (b, a) };
    let lo = r.x0.max(p.x);
    let hi = r.x1.min(q.x);
    if !(lo < hi) {
        return 0.0;
    }
    let slope = (q.y - p.y) / (q.x - p.x);
    let s = |x: f64| p.y + (x - p.x) * slope;
    let g = |x: f64| (s(x) - r.y0).clamp(0.0, r.height());
    let mut xs = vec![lo, hi];
    if slope != 0.0 {
        for level in [r.y0, r.y1] {
            let x = p.x + (level - p.y) / slope;
            if x > lo && x < hi {
                xs.push(x);
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.windows(2).map(|w| 0.5 * (g(w[0]) + g(w[1])) * (w[1] - w[0])).sum()
}

/// How derivatives are obtained in [`jacobian_decomposition_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Exact polynomial composition and differentiation.
    Exact,
    /// Central differences with step `1e-6`.
    FiniteDifference,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct JacobianReport {
    pub samples: usize,
    pub max_residual: f64,
}

/// Check `phi(u) det Du = det D(psi1(u), u2) + det D(u1, psi2(u))` with
/// `phi = div psi` at the sample points.
pub fn jacobian_decomposition_check(
    u: (&Poly2, &Poly2),
    psi: (&Poly2, &Poly2),
    samples: &[Point],
    mode: JacobianMode,
) -> JacobianReport {
    let phi = psi.0.dx().add(&psi.1.dy());
    let (u1, u2) = u;
    let w1 = psi.0.compose(u1, u2);
    let w2 = psi.1.compose(u1, u2);
    let grad = |f: &Poly2, x: Point| -> Point {
        match mode {
            JacobianMode::Exact => Point::new(f.dx().eval(x), f.dy().eval(x)),
            JacobianMode::FiniteDifference => {
                let h = 1e-6;
                Point::new(
                    (f.eval(x + Point::new(h, 0.0)) - f.eval(x - Point::new(h, 0.0))) / (2.0 * h),
                    (f.eval(x + Point::new(0.0, h)) - f.eval(x - Point::new(0.0, h))) / (2.0 * h),
                )
            }
        }
    };
    let mut worst: f64 = 0.0;
    for &x in samples {
        let (g1, g2) = (grad(u1, x), grad(u2, x));
        let (gw1, gw2) = (grad(&w1, x), grad(&w2, x));
        let ux = Point::new(u1.eval(x), u2.eval(x));
        let lhs = phi.eval(ux) * g1.cross(g2);
        let rhs = gw1.cross(g2) + g1.cross(gw2);
        worst = worst.max((lhs - rhs).abs());
    }
    JacobianReport {
        samples: samples.len(),
        max_residual: worst,
    }
}

/// Outcome of a scaling test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleReport {
    pub lambda: f64,
    pub p: f64,
    pub pointwise_checked: usize,
    pub pointwise_failures: usize,
    pub norm: LpNorm,
    pub norm_scaled: LpNorm,
    pub expected_ratio: f64,
    /// Interval of ratios compatible with the two brackets.
    pub ratio_lo: f64,
    pub ratio_hi: f64,
}

impl ScaleReport {
    pub fn holds(&self) -> bool {
        self.pointwise_failures == 0 && self.ratio_lo <= self.expected_ratio && self.expected_ratio <= self.ratio_hi
    }
}

/// Check `deg(lambda u, y) = deg(u, y / lambda)` at the samples and
/// `||deg(lambda u)||_p = lambda^{2/p} ||deg u||_p` on fields of cell size `h`.
pub fn scale_equivariance_check(bm: &BoundaryMap, lambda: f64, p: f64, h: f64, samples: &[Point]) -> Result<ScaleReport> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param("lambda", "must be a positive finite real"));
    }
    let scaled = bm.scaled(lambda);
    let (iu, is) = (bm.winding_index()?, scaled.winding_index()?);
    let mut checked = 0;
    let mut failures = 0;
    for &y in samples {
        match (is.winding(y), iu.winding(y * (1.0 / lambda))) {
            (Ok(a), Ok(b)) => {
                checked += 1;
                if a != b {
                    failures += 1;
                }
            }
            (Err(Error::OnBoundary { .. }), _) | (_, Err(Error::OnBoundary { .. })) => {}
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    let opts = FieldOptions::default();
    let fu = degree_field_from_index(&iu, iu.bbox().expand(2.0 * h), h, 0.0, &opts)?;
    let fs = degree_field_from_index(&is, is.bbox().expand(2.0 * h), h, 0.0, &opts)?;
    let (nu, ns) = (lp_norm(&fu, p)?, lp_norm(&fs, p)?);
    Ok(ScaleReport {
        lambda,
        p,
        pointwise_checked: checked,
        pointwise_failures: failures,
        expected_ratio: lambda.powf(2.0 / p),
        ratio_lo: ns.lo / nu.hi,
        ratio_hi: ns.hi / nu.lo,
        norm: nu,
        norm_scaled: ns,
    })
}

/// Perturb every image vertex by at most `delta` (20 seeded trials) and
/// report whether the degree at `y` never changes.
pub fn homotopy_stability_check(bm: &BoundaryMap, delta: f64, y: Point, seed: u64) -> Result<bool> {
    let idx = bm.winding_index()?;
    let dist = idx.distance(y);
    if !(delta >= 0.0 && delta < dist) {
        return Err(Error::Precondition(format!(
            "perturbation {delta:e} must be below dist(y, image) = {dist:e}"
        )));
    }
    let base = idx.winding(y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = bm.image().len();
    for _ in 0..20 {
        let mut img: Vec<Point> = bm.image()[..n - 1]
            .iter()
            .map(|&p| {
                let r = delta * rng.gen::<f64>().sqrt();
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                p + Point::new(t.cos(), t.sin()) * r
            })
            .collect();
        img.push(img[0]);
        if super::winding_number(&img, y)? != base {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_phi(nx: usize, origin: Point, h: f64) -> PiecewiseConstant {
        PiecewiseConstant::new(origin, h, nx, nx, vec![1.0; nx * nx]).unwrap()
    }

    #[test]
    fn cov_identity_and_doubling() {
        let id = PiecewiseAffineMap::grid(Rect::new(0.0, 0.0, 1.0, 1.0), 3, 3, |p| p);
        let r = change_of_variables_check(&id, &unit_phi(8, Point::ORIGIN, 0.125)).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-12 && r.residual < 1e-12, "{r:?}");
        let dbl = PiecewiseAffineMap::grid(Rect::new(0.0, 0.0, 1.0, 1.0), 4, 4, |p| p * 2.0);
        let r = change_of_variables_check(&dbl, &unit_phi(8, Point::ORIGIN, 0.25)).unwrap();
        assert!((r.lhs - 4.0).abs() < 1e-12 && r.residual < 1e-12, "{r:?}");
    }

    #[test]
    fn cov_fold_map_cancels() {
        let fold = PiecewiseAffineMap::grid(Rect::new(0.0, 0.0, 1.0, 1.0), 4, 4, |p| Point::new((p.x - 0.5).abs(), p.y));
        let r = change_of_variables_check(&fold, &unit_phi(10, Point::new(-0.1, -0.1), 0.15)).unwrap();
        assert!(r.lhs.abs() < 1e-12 && r.rhs.abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn winding_integral_of_offgrid_triangle() {
        let tri = [Point::new(0.1, 0.13), Point::new(0.77, 0.31), Point::new(0.4, 0.9)];
        let segs: Vec<_> = (0..3).map(|k| (tri[k], tri[(k + 1) % 3], 1)).collect();
        let area = shoelace(&tri);
        let whole = winding_integral(&segs, &Rect::new(-1.0, -1.0, 2.0, 2.0));
        assert!((whole - area).abs() < 1e-14);
        let part = winding_integral(&segs, &Rect::new(0.3, 0.2, 0.6, 0.5));
        let clip = shoelace(&clip_polygon_rect(&tri, &Rect::new(0.3, 0.2, 0.6, 0.5)));
        assert!((part - clip).abs() < 1e-14);
    }

    #[test]
    fn jacobian_identity_examples() {
        let x = Poly2::x();
        let y = Poly2::y();
        let pts = [Point::new(0.3, -0.2), Point::new(1.0, 2.0)];
        let r = jacobian_decomposition_check((&x, &y), (&x, &Poly2::constant(0.0)), &pts, JacobianMode::Exact);
        assert!(r.max_residual < 1e-14);
        let u1 = x.mul(&x);
        let c = 2.5;
        let r = jacobian_decomposition_check((&u1, &y), (&x.scale(c), &Poly2::constant(0.0)), &pts, JacobianMode::Exact);
        assert!(r.max_residual < 1e-13);
        let r = jacobian_decomposition_check(
            (&u1, &y),
            (&x.scale(c), &Poly2::constant(0.0)),
            &pts,
            JacobianMode::FiniteDifference,
        );
        assert!(r.max_residual < 1e-5);
    }

    #[test]
    fn split_of_constant_map() {
        let sq = BoundaryMap::unit_square();
        let c = sq.with_image(vec![Point::new(0.2, 0.2); 5]).unwrap();
        let r = split_degree_check(&c, 1..3, Point::new(0.2, 0.2), &[Point::new(0.5, 0.5)]).unwrap();
        assert_eq!(r.checked, 1);
        assert_eq!(r.values[0], (Point::new(0.5, 0.5), 0, 0, 0));
        assert!(split_degree_check(&sq, 1..3, Point::new(0.2, 0.2), &[]).is_err());
    }

    #[test]
    fn scaling_identity_square() {
        let sq = BoundaryMap::unit_square();
        let r = scale_equivariance_check(&sq, 2.0, 1.0, 1.0 / 32.0, &[Point::new(0.5, 0.5), Point::new(1.5, 1.5)]).unwrap();
        assert!(r.holds(), "{r:?}");
        assert_eq!(r.expected_ratio, 4.0);
    }

    #[test]
    fn homotopy_on_polygon() {
        let bm = BoundaryMap::regular_polygon(64, 1.0, Point::ORIGIN);
        assert!(homotopy_stability_check(&bm, 0.1, Point::ORIGIN, 1).unwrap());
        assert!(homotopy_stability_check(&bm, 1.5, Point::ORIGIN, 1).is_err());
    }
}

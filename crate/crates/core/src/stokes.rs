//! Planar 1-forms, their line integrals and the Whitney-cube Stokes sum
//! `sum_Q int_Q dM~(diam Q) + int_dQ (M - M~(diam Q))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{AnalyticFn, Kernel, Poly2, ScalarField};
use crate::error::{Error, Result};
use crate::geom::{clip_segment_rect, orient2d, Point, Rect};
use crate::quadrature::{fit_line, gauss_legendre, NeumaierSum, GL4, GL8};
use crate::whitney::{DomainOracle, DyadicCube, PolygonDomain, WhitneyDecomposition};

/// Amplitude cut-off used when estimating the frequency content of a form.
const FREQ_TOL: f64 = 1e-14;
/// Upper limit on quadrature panels per segment.
const MAX_PANELS: usize = 4096;

/// `omega = a1 dx + a2 dy` with its exterior derivative `(d1 a2 - d2 a1) dx^dy`.
pub trait OneForm: Sync {
    /// Coefficients `(a1, a2)`.
    fn eval(&self, p: Point) -> Point;
    /// Coefficient of `dx ^ dy` in `d omega`.
    fn d(&self, p: Point) -> f64;
    /// Angular frequency bound used to choose quadrature panels.
    fn frequency(&self) -> f64 {
        0.0
    }
}

/// Form with polynomial coefficients; `d` is exact polynomial algebra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyForm {
    pub a1: Poly2,
    pub a2: Poly2,
    da: Poly2,
}

impl PolyForm {
    pub fn new(a1: Poly2, a2: Poly2) -> Self {
        let da = a2.dx().sub(&a1.dy());
        PolyForm { a1, a2, da }
    }

    /// `1/2 (x dy - y dx)`, whose derivative is the area form.
    pub fn area() -> Self {
        PolyForm::new(Poly2::y().scale(-0.5), Poly2::x().scale(0.5))
    }

    /// The exact form `dF`.
    pub fn exact(f: &Poly2) -> Self {
        PolyForm::new(f.dx(), f.dy())
    }

    pub fn d_poly(&self) -> &Poly2 {
        &self.da
    }
}

impl OneForm for PolyForm {
    fn eval(&self, p: Point) -> Point {
        Point::new(self.a1.eval(p), self.a2.eval(p))
    }

    fn d(&self, p: Point) -> f64 {
        self.da.eval(p)
    }
}

/// `M(u1, u2) = 1/2 (u1 du2 - u2 du1)` with `dM = det Du`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MForm<F> {
    pub u1: F,
    pub u2: F,
}

pub fn mform<F: ScalarField>(u1: F, u2: F) -> MForm<F> {
    MForm { u1, u2 }
}

impl<F: ScalarField> OneForm for MForm<F> {
    fn eval(&self, p: Point) -> Point {
        let (v1, v2) = (self.u1.value(p), self.u2.value(p));
        let (g1, g2) = (self.u1.grad(p), self.u2.grad(p));
        (g2 * v1 - g1 * v2) * 0.5
    }

    fn d(&self, p: Point) -> f64 {
        self.u1.grad(p).cross(self.u2.grad(p))
    }

    fn frequency(&self) -> f64 {
        self.u1.max_frequency(FREQ_TOL) + self.u2.max_frequency(FREQ_TOL)
    }
}

/// [`mform`] of two polynomials as a polynomial form.
pub fn mform_poly(u1: &Poly2, u2: &Poly2) -> PolyForm {
    let a1 = u1.mul(&u2.dx()).sub(&u2.mul(&u1.dx())).scale(0.5);
    let a2 = u1.mul(&u2.dy()).sub(&u2.mul(&u1.dy())).scale(0.5);
    PolyForm::new(a1, a2)
}

/// `det Du` as a polynomial.
pub fn jacobian_poly(u1: &Poly2, u2: &Poly2) -> Poly2 {
    u1.dx().mul(&u2.dy()).sub(&u1.dy().mul(&u2.dx()))
}

fn panels(len: f64, freq: f64) -> usize {
    ((len * freq / 3.0).ceil() as usize).clamp(1, MAX_PANELS)
}

/// `int_a^b omega` along the straight segment, Gauss-Legendre of order 8 on
/// panels sized to the form's frequency content.
pub fn segment_integral<W: OneForm + ?Sized>(w: &W, a: Point, b: Point) -> f64 {
    segment_integral_panels(w, a, b, panels(a.dist(b), w.frequency()))
}

fn segment_integral_panels<W: OneForm + ?Sized>(w: &W, a: Point, b: Point, n: usize) -> f64 {
    let d = b - a;
    let mut s = 0.0;
    for i in 0..n {
        let (t0, t1) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
        s += gauss_legendre(&GL8, t0, t1, |t| w.eval(a + d * t).dot(d));
    }
    s
}

/// Integral of the form along a polyline.
pub fn line_integral<W: OneForm + ?Sized>(w: &W, polyline: &[Point]) -> f64 {
    polyline
        .par_windows(2)
        .map(|s| segment_integral(w, s[0], s[1]))
        .collect::<Vec<f64>>()
        .into_iter()
        .collect::<NeumaierSum>()
        .value()
}

/// Line integral together with the change observed when every panel is halved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckedIntegral {
    pub value: f64,
    pub richardson_diff: f64,
}

pub fn line_integral_checked<W: OneForm + ?Sized>(w: &W, polyline: &[Point]) -> CheckedIntegral {
    let (coarse, fine): (Vec<f64>, Vec<f64>) = polyline
        .par_windows(2)
        .map(|s| {
            let n = panels(s[0].dist(s[1]), w.frequency());
            (
                segment_integral_panels(w, s[0], s[1], n),
                segment_integral_panels(w, s[0], s[1], 2 * n),
            )
        })
        .unzip();
    let c: NeumaierSum = coarse.into_iter().collect();
    let f: NeumaierSum = fine.into_iter().collect();
    CheckedIntegral {
        value: f.value(),
        richardson_diff: (f.value() - c.value()).abs(),
    }
}

/// `int_R f dx dy` with a tensor Gauss-Legendre rule of order 4 on `n x n` panels.
pub fn rect_integral<F: Fn(Point) -> f64>(r: &Rect, n: usize, f: F) -> f64 {
    let (hx, hy) = (r.width() / n as f64, r.height() / n as f64);
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (x0, y0) = (r.x0 + i as f64 * hx, r.y0 + j as f64 * hy);
            s += gauss_legendre(&GL4, y0, y0 + hy, |y| gauss_legendre(&GL4, x0, x0 + hx, |x| f(Point::new(x, y))));
        }
    }
    s
}

/// Counterclockwise boundary of a rectangle.
pub fn rect_boundary(r: &Rect) -> [Point; 5] {
    [
        Point::new(r.x0, r.y0),
        Point::new(r.x1, r.y0),
        Point::new(r.x1, r.y1),
        Point::new(r.x0, r.y1),
        Point::new(r.x0, r.y0),
    ]
}

/// The form a mollified family is built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseForm {
    /// Polynomial coefficients: already smooth, so `M~(t) = M`.
    Poly(PolyForm),
    /// `M(u1, u2)` for trigonometric `u`; `M~(t) = M(u1 * k_t, u2 * k_t)`.
    Pair { u1: AnalyticFn, u2: AnalyticFn },
}

/// Concrete form value of a [`BaseForm`] or one of its smoothings.
#[derive(Clone, Debug, PartialEq)]
pub enum Form {
    Poly(PolyForm),
    Pair(MForm<AnalyticFn>),
}

impl OneForm for Form {
    fn eval(&self, p: Point) -> Point {
        match self {
            Form::Poly(f) => f.eval(p),
            Form::Pair(f) => f.eval(p),
        }
    }

    fn d(&self, p: Point) -> f64 {
        match self {
            Form::Poly(f) => f.d(p),
            Form::Pair(f) => f.d(p),
        }
    }

    fn frequency(&self) -> f64 {
        match self {
            Form::Poly(f) => f.frequency(),
            Form::Pair(f) => f.frequency(),
        }
    }
}

/// Scale family `M~(t)` of smooth forms approximating a rough form `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifiedFormFamily {
    pub base: BaseForm,
    pub kernel: Kernel,
    /// Sorted scales at which the family may be evaluated.
    pub scales: Vec<f64>,
    pub theta: f64,
}

impl MollifiedFormFamily {
    pub fn new(base: BaseForm, kernel: Kernel, theta: f64, mut scales: Vec<f64>) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::param("theta", "must lie in (0, 1]"));
        }
        if scales.is_empty() || scales.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::param("scales", "need at least one positive finite scale"));
        }
        scales.sort_by(|a, b| a.total_cmp(b));
        scales.dedup();
        Ok(MollifiedFormFamily {
            base,
            kernel,
            scales,
            theta,
        })
    }

    /// Family whose scales are the cube diameters of every level of `wd`.
    pub fn for_decomposition(base: BaseForm, kernel: Kernel, theta: f64, wd: &WhitneyDecomposition) -> Result<Self> {
        let scales = (wd.k_min..=wd.k_max).map(|k| DyadicCube::new(k, 0, 0).diam()).collect();
        Self::new(base, kernel, theta, scales)
    }

    pub fn base_form(&self) -> Form {
        match &self.base {
            BaseForm::Poly(p) => Form::Poly(p.clone()),
            BaseForm::Pair { u1, u2 } => Form::Pair(mform(u1.clone(), u2.clone())),
        }
    }

    fn covers(&self, t: f64) -> bool {
        let (lo, hi) = (self.scales[0], self.scales[self.scales.len() - 1]);
        t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12)
    }

    /// `M~(t)`.
    pub fn smoothed(&self, t: f64) -> Result<Form> {
        if !self.covers(t) {
            return Err(self.coverage_error(t, t));
        }
        Ok(match &self.base {
            BaseForm::Poly(p) => Form::Poly(p.clone()),
            BaseForm::Pair { u1, u2 } => Form::Pair(mform(u1.mollified(self.kernel, t), u2.mollified(self.kernel, t))),
        })
    }

    fn coverage_error(&self, lo: f64, hi: f64) -> Error {
        Error::ScaleCoverage {
            need_lo: lo,
            need_hi: hi,
            have_lo: self.scales[0],
            have_hi: self.scales[self.scales.len() - 1],
        }
    }

    /// Coefficients of a representative of `d/dt M~(t)` modulo closed forms.
    ///
    /// Since `v1 dv2' + v2' dv1 = d(v1 v2')` is closed, the derivative
    /// `1/2 (v1' dv2 + v1 dv2' - v2' dv1 - v2 dv1')` is congruent to
    /// `v1' dv2 - v2' dv1`, whose sup norm bounds the quotient norm.
    pub fn smoothed_dt(&self, t: f64, p: Point) -> Point {
        match &self.base {
            BaseForm::Poly(_) => Point::ORIGIN,
            BaseForm::Pair { u1, u2 } => {
                let (v1, v2) = (u1.mollified(self.kernel, t), u2.mollified(self.kernel, t));
                let (w1, w2) = (u1.mollified_dt(self.kernel, t), u2.mollified_dt(self.kernel, t));
                v2.grad(p) * w1.value(p) - v1.grad(p) * w2.value(p)
            }
        }
    }

    /// `t^{1-theta} (sup |dM~(t)| + sup |M~'(t)|)` per scale, with sups taken
    /// over the given sample points.
    pub fn invariant_constants(&self, samples: &[Point]) -> Result<Vec<(f64, f64)>> {
        self.scales
            .iter()
            .map(|&t| {
                let f = self.smoothed(t)?;
                let (mut sd, mut sdt) = (0.0f64, 0.0f64);
                for &p in samples {
                    sd = sd.max(f.d(p).abs());
                    sdt = sdt.max(self.smoothed_dt(t, p).norm());
                }
                Ok((t, t.powf(1.0 - self.theta) * (sd + sdt)))
            })
            .collect()
    }
}

/// How cubes left undecided at the finest level are handled.
#[derive(Clone, Copy, Debug)]
pub enum Residuals<'a> {
    /// Cubes with centre inside count as whole cubes, the others count zero;
    /// the error is bounded by `|Q| sup |dM~| + H^1(dQ) sup |M - M~|` per cube.
    Bracket,
    /// Each cube contributes `int over d(Q n U) of M`, computed by clipping
    /// against the polygon.
    Clip(&'a PolygonDomain),
}

/// Per-level summary of the Stokes sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesLevel {
    pub level: i32,
    pub cubes: usize,
    pub area_term_sum: f64,
    pub boundary_term_sum: f64,
    /// Sum of absolute cube terms.
    pub abs_sum: f64,
    /// Bound on everything finer than this level, residual cubes included.
    pub tail_bound: f64,
}

impl StokesLevel {
    pub fn level_sum(&self) -> f64 {
        self.area_term_sum + self.boundary_term_sum
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesSum {
    pub value: f64,
    pub levels: Vec<StokesLevel>,
    pub residual_cubes: usize,
    pub residual_value: f64,
    /// Zero in clip mode.
    pub residual_bound: f64,
    /// Sum over cubes of the change under panel halving.
    pub quadrature_bound: f64,
}

impl StokesSum {
    /// Total error bound: residual bound plus quadrature bound.
    pub fn error_bound(&self) -> f64 {
        self.residual_bound + self.quadrature_bound
    }

    /// Geometric ratio of `|level sum|` fitted over levels `k_lo..=k_hi`.
    pub fn tail_ratio(&self, k_lo: i32, k_hi: i32) -> Result<f64> {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for l in &self.levels {
            if l.level >= k_lo && l.level <= k_hi && l.level_sum().abs() > 0.0 {
                xs.push(l.level as f64);
                ys.push(l.level_sum().abs().log2());
            }
        }
        if xs.len() < 2 {
            return Err(Error::InsufficientData("fewer than two non-zero levels in the fit range".into()));
        }
        let fit = fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate tail fit".into()))?;
        Ok(2f64.powf(fit.slope))
    }
}

struct CubeTerms {
    area: f64,
    boundary: f64,
    quad: f64,
    bound: f64,
}

fn cube_terms(base: &Form, smooth: &Form, r: &Rect, check: bool) -> CubeTerms {
    let side = r.width();
    let freq = smooth.frequency();
    let na = panels(side, freq);
    let area = rect_integral(r, na, |p| smooth.d(p));
    let diff = |p: Point| base.eval(p) - smooth.eval(p);
    let nb = panels(side, base.frequency().max(freq));
    let corners = rect_boundary(r);
    let mut boundary = 0.0;
    let mut diff_sup = 0.0f64;
    for w in corners.windows(2) {
        let d = w[1] - w[0];
        for i in 0..nb {
            let (t0, t1) = (i as f64 / nb as f64, (i + 1) as f64 / nb as f64);
            boundary += gauss_legendre(&GL8, t0, t1, |t| {
                let v = diff(w[0] + d * t);
                diff_sup = diff_sup.max(v.norm());
                v.dot(d)
            });
        }
    }
    let mut quad = 0.0;
    if check {
        let area2 = rect_integral(r, 2 * na, |p| smooth.d(p));
        let mut b2 = 0.0;
        for w in corners.windows(2) {
            let d = w[1] - w[0];
            for i in 0..2 * nb {
                let (t0, t1) = (i as f64 / (2 * nb) as f64, (i + 1) as f64 / (2 * nb) as f64);
                b2 += gauss_legendre(&GL8, t0, t1, |t| diff(w[0] + d * t).dot(d));
            }
        }
        quad = (area2 - area).abs() + (b2 - boundary).abs();
    }
    let mut d_sup = 0.0f64;
    let h = side / (2 * na) as f64;
    for i in 0..=2 * na {
        for j in 0..=2 * na {
            d_sup = d_sup.max(smooth.d(Point::new(r.x0 + i as f64 * h, r.y0 + j as f64 * h)).abs());
        }
    }
    CubeTerms {
        area,
        boundary,
        quad,
        bound: r.area() * d_sup + 4.0 * side * diff_sup,
    }
}

/// Options for [`whitney_stokes_sum`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StokesOptions {
    /// Recompute every term with halved panels and accumulate the change.
    pub quadrature_check: bool,
}

/// Whitney-cube Stokes sum of `dM` over the decomposed domain.
pub fn whitney_stokes_sum(
    mf: &MollifiedFormFamily,
    wd: &WhitneyDecomposition,
    residuals: Residuals<'_>,
    opts: &StokesOptions,
) -> Result<StokesSum> {
    let need_lo = DyadicCube::new(wd.k_max, 0, 0).diam();
    let need_hi = DyadicCube::new(wd.k_min, 0, 0).diam();
    if !mf.covers(need_lo) || !mf.covers(need_hi) {
        return Err(mf.coverage_error(need_lo, need_hi));
    }
    let base = mf.base_form();
    let mut raw: Vec<(i32, usize, f64, f64, f64, f64)> = Vec::new();
    for (i, cubes) in wd.levels.iter().enumerate() {
        let k = wd.k_min + i as i32;
        let smooth = mf.smoothed(DyadicCube::new(k, 0, 0).diam())?;
        let terms: Vec<CubeTerms> = cubes
            .par_iter()
            .map(|c| cube_terms(&base, &smooth, &c.cube.rect(), opts.quadrature_check))
            .collect();
        let area: NeumaierSum = terms.iter().map(|t| t.area).collect();
        let bdry: NeumaierSum = terms.iter().map(|t| t.boundary).collect();
        let abs: f64 = terms.iter().map(|t| t.area.abs() + t.boundary.abs()).sum();
        let quad: f64 = terms.iter().map(|t| t.quad).sum();
        raw.push((k, cubes.len(), area.value(), bdry.value(), abs, quad));
    }
    let smooth_last = mf.smoothed(need_lo)?;
    let residual_all: Vec<(DyadicCube, bool)> = wd
        .residual
        .iter()
        .map(|&q| (q, true))
        .chain(wd.residual_outside.iter().map(|&q| (q, false)))
        .collect();
    let (residual_value, residual_bound, residual_quad) = match residuals {
        Residuals::Bracket => {
            let terms: Vec<(f64, f64, f64)> = residual_all
                .par_iter()
                .map(|(q, inside)| {
                    let t = cube_terms(&base, &smooth_last, &q.rect(), opts.quadrature_check);
                    let v = if *inside { t.area + t.boundary } else { 0.0 };
                    (v, t.bound, t.quad)
                })
                .collect();
            let v: NeumaierSum = terms.iter().map(|t| t.0).collect();
            (v.value(), terms.iter().map(|t| t.1).sum::<f64>(), terms.iter().map(|t| t.2).sum::<f64>())
        }
        Residuals::Clip(poly) => {
            let orient = poly.signed_area().signum();
            let terms: Vec<Result<(f64, f64)>> = residual_all
                .par_iter()
                .map(|(q, _)| {
                    let r = q.rect();
                    let v = clipped_boundary_integral(&base, poly, orient, &r, 1)?;
                    let quad = if opts.quadrature_check {
                        (clipped_boundary_integral(&base, poly, orient, &r, 2)? - v).abs()
                    } else {
                        0.0
                    };
                    Ok((v, quad))
                })
                .collect();
            let terms: Vec<(f64, f64)> = terms.into_iter().collect::<Result<_>>()?;
            let v: NeumaierSum = terms.iter().map(|t| t.0).collect();
            (v.value(), 0.0, terms.iter().map(|t| t.1).sum())
        }
    };
    let mut levels = Vec::with_capacity(raw.len());
    let mut tail = residual_bound;
    for &(k, n, a, b, abs, _) in raw.iter().rev() {
        levels.push(StokesLevel {
            level: k,
            cubes: n,
            area_term_sum: a,
            boundary_term_sum: b,
            abs_sum: abs,
            tail_bound: tail,
        });
        tail += abs;
    }
    levels.reverse();
    let mut total: NeumaierSum = levels.iter().map(|l| l.level_sum()).collect();
    total.add(residual_value);
    Ok(StokesSum {
        value: total.value(),
        levels,
        residual_cubes: residual_all.len(),
        residual_value,
        residual_bound,
        quadrature_bound: raw.iter().map(|x| x.5).sum::<f64>() + residual_quad,
    })
}

fn segment_integral_refined<W: OneForm + ?Sized>(w: &W, a: Point, b: Point, refine: usize) -> f64 {
    segment_integral_panels(w, a, b, refine * panels(a.dist(b), w.frequency()))
}

/// `int over d(R n U) of w` for a polygonal `U`.
///
/// Pieces of `dU` inside `R` are kept with the polygon's orientation; a piece
/// lying on a side of `R` is kept only when `R` is on the interior side. The
/// sides of `R` are cut at their crossings with `dU` and the sub-intervals
/// whose midpoint lies inside `U` are kept.
pub fn clipped_boundary_integral<W: OneForm + ?Sized>(
    w: &W,
    poly: &PolygonDomain,
    orient: f64,
    r: &Rect,
    refine: usize,
) -> Result<f64> {
    let segs = poly.segments();
    let ids = poly.segments_near(r);
    let centre = r.center();
    let mut sum = NeumaierSum::default();
    let on_side = |p: Point, q: Point| {
        (p.x == r.x0 && q.x == r.x0) || (p.x == r.x1 && q.x == r.x1) || (p.y == r.y0 && q.y == r.y0) || (p.y == r.y1 && q.y == r.y1)
    };
    for &k in &ids {
        let (a, b) = segs[k];
        let Some((t0, t1)) = clip_segment_rect(a, b, r) else { continue };
        if !(t1 > t0) {
            continue;
        }
        let d = b - a;
        let (p, q) = (a + d * t0, a + d * t1);
        if on_side(p, q) && !(orient * orient2d(a, b, centre) > 0.0) {
            continue;
        }
        let v = segment_integral_refined(w, p, q, refine);
        sum.add(if orient > 0.0 { v } else { -v });
    }
    let corners = rect_boundary(r);
    for side in corners.windows(2) {
        let (p0, p1) = (side[0], side[1]);
        let e = p1 - p0;
        let mut cuts = vec![0.0, 1.0];
        for &k in &ids {
            let (a, b) = segs[k];
            let d = b - a;
            let denom = e.cross(d);
            let ap = a - p0;
            if denom != 0.0 {
                let u = ap.cross(d) / denom;
                let v = ap.cross(e) / denom;
                if (0.0..=1.0).contains(&v) && u > 0.0 && u < 1.0 {
                    cuts.push(u);
                }
            } else if ap.cross(e) == 0.0 {
                let e2 = e.norm2();
                for x in [a, b] {
                    let u = (x - p0).dot(e) / e2;
                    if u > 0.0 && u < 1.0 {
                        cuts.push(u);
                    }
                }
            }
        }
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        for c in cuts.windows(2) {
            if !(c[1] > c[0]) {
                continue;
            }
            let mid = p0 + e * (0.5 * (c[0] + c[1]));
            match poly.contains(mid) {
                Ok(true) => sum.add(segment_integral_refined(w, p0 + e * c[0], p0 + e * c[1], refine)),
                Ok(false) | Err(Error::OnBoundary { .. }) | Err(Error::BoundaryIndeterminate { .. }) => {}
                Err(err) => return Err(err),
            }
        }
    }
    Ok(sum.value())
}

/// Per-level maxima of the normalized cube terms
/// `|area| / (|Q| diam^{theta-1})` and `|boundary| / (H^1(dQ) diam^theta)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditLevel {
    pub level: i32,
    pub area_ratio: f64,
    pub boundary_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermBoundAudit {
    pub theta: f64,
    /// Constant the terms were checked against.
    pub k_const: f64,
    pub levels: Vec<AuditLevel>,
    /// `(level, i, j)` of cubes exceeding `k_const`.
    pub violations: Vec<(i32, i64, i64)>,
}

impl TermBoundAudit {
    /// Largest normalized term over all cubes.
    pub fn measured_constant(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| l.area_ratio.max(l.boundary_ratio))
            .fold(0.0, f64::max)
    }
}

/// Check every Whitney cube term against `K |Q| diam^{theta-1}` (area) and
/// `K H^1(dQ) diam^theta` (boundary). Without `k_const` the measured maximum
/// is used, so only the per-level profile is informative.
pub fn term_bound_audit(mf: &MollifiedFormFamily, wd: &WhitneyDecomposition, k_const: Option<f64>) -> Result<TermBoundAudit> {
    let base = mf.base_form();
    let theta = mf.theta;
    let mut per_cube: Vec<(i32, i64, i64, f64, f64)> = Vec::new();
    let mut levels = Vec::new();
    for (i, cubes) in wd.levels.iter().enumerate() {
        let k = wd.k_min + i as i32;
        let diam = DyadicCube::new(k, 0, 0).diam();
        let smooth = mf.smoothed(diam)?;
        let ratios: Vec<(i32, i64, i64, f64, f64)> = cubes
            .par_iter()
            .map(|c| {
                let r = c.cube.rect();
                let t = cube_terms(&base, &smooth, &r, false);
                (
                    k,
                    c.cube.i,
                    c.cube.j,
                    t.area.abs() / (r.area() * diam.powf(theta - 1.0)),
                    t.boundary.abs() / (4.0 * r.width() * diam.powf(theta)),
                )
            })
            .collect();
        if !ratios.is_empty() {
            levels.push(AuditLevel {
                level: k,
                area_ratio: ratios.iter().map(|x| x.3).fold(0.0, f64::max),
                boundary_ratio: ratios.iter().map(|x| x.4).fold(0.0, f64::max),
            });
        }
        per_cube.extend(ratios);
    }
    let measured = per_cube.iter().map(|x| x.3.max(x.4)).fold(0.0, f64::max);
    let k_const = k_const.unwrap_or(measured);
    let violations = per_cube
        .iter()
        .filter(|x| x.3.max(x.4) > k_const)
        .map(|x| (x.0, x.1, x.2))
        .collect();
    Ok(TermBoundAudit {
        theta,
        k_const,
        levels,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::whitney::{whitney_decompose, WhitneyRule};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_square_poly() -> Vec<Point> {
        rect_boundary(&Rect::new(0.0, 0.0, 1.0, 1.0)).to_vec()
    }

    #[test]
    fn mform_identity_and_antisymmetry() {
        let m = mform_poly(&Poly2::x(), &Poly2::y());
        assert_eq!(m, PolyForm::area());
        let p = Point::new(0.3, -0.7);
        assert!((m.d(p) - 1.0).abs() < 1e-15);
        let same = mform_poly(&Poly2::x(), &Poly2::x());
        assert!(same.d(p).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (u1, u2) = (Poly2::random(3, &mut rng), Poly2::random(3, &mut rng));
        let (a, b) = (mform_poly(&u1, &u2), mform_poly(&u2, &u1));
        assert!(a.eval(p).dist(-b.eval(p)) < 1e-12);
        let det = jacobian_poly(&u1, &u2);
        let gen = mform(u1.clone(), u2.clone());
        for i in 0..50 {
            let q = Point::new(-1.0 + 0.04 * i as f64, 0.5 - 0.03 * i as f64);
            assert!((a.d(q) - det.eval(q)).abs() < 1e-9);
            assert!((gen.d(q) - det.eval(q)).abs() < 1e-9);
            assert!(gen.eval(q).dist(a.eval(q)) < 1e-12);
        }
    }

    #[test]
    fn line_integrals() {
        let area = PolyForm::area();
        assert!((line_integral(&area, &unit_square_poly()) - 1.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = Poly2::random(6, &mut rng);
        let exact = PolyForm::exact(&f);
        let tri = [Point::new(0.0, 0.0), Point::new(2.0, 0.3), Point::new(-0.4, 1.1), Point::new(0.0, 0.0)];
        assert!(line_integral(&exact, &tri).abs() < 1e-10);
        let c = line_integral_checked(&area, &tri);
        assert!((c.value - crate::geom::shoelace(&tri[..3])).abs() < 1e-14);
        assert!(c.richardson_diff < 1e-14);
    }

    #[test]
    fn smooth_form_on_unit_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let form = mform_poly(&Poly2::random(3, &mut rng), &Poly2::random(3, &mut rng));
        let direct = rect_integral(&Rect::new(0.0, 0.0, 1.0, 1.0), 4, |p| form.d(p));
        let oracle = line_integral(&form, &unit_square_poly());
        assert!((direct - oracle).abs() < 1e-12);
        let dom = PolygonDomain::unit_square();
        let wd = whitney_decompose(&dom, 7, WhitneyRule::MaximalAdmissible).unwrap();
        let mf = MollifiedFormFamily::for_decomposition(BaseForm::Poly(form.clone()), Kernel::Tent, 1.0, &wd).unwrap();
        for res in [Residuals::Bracket, Residuals::Clip(&dom)] {
            let s = whitney_stokes_sum(&mf, &wd, res, &StokesOptions::default()).unwrap();
            assert!((s.value - direct).abs() < 1e-10, "{} vs {direct}", s.value);
            assert!(s.levels.iter().all(|l| l.boundary_term_sum == 0.0));
        }
    }

    #[test]
    fn clipped_residuals_make_the_sum_exact_on_a_polygon() {
        let poly = vec![
            Point::new(0.1, 0.05),
            Point::new(0.93, 0.2),
            Point::new(0.7, 0.61),
            Point::new(0.85, 0.9),
            Point::new(0.2, 0.77),
            Point::new(0.1, 0.05),
        ];
        let dom = PolygonDomain::new(&poly).unwrap();
        let wd = whitney_decompose(&dom, 8, WhitneyRule::MaximalAdmissible).unwrap();
        let area = PolyForm::area();
        let mf = MollifiedFormFamily::for_decomposition(BaseForm::Poly(area.clone()), Kernel::Tent, 1.0, &wd).unwrap();
        let s = whitney_stokes_sum(&mf, &wd, Residuals::Clip(&dom), &StokesOptions::default()).unwrap();
        assert!((s.value - crate::geom::shoelace(&poly[..5])).abs() < 1e-12, "{}", s.value);
        let b = whitney_stokes_sum(&mf, &wd, Residuals::Bracket, &StokesOptions::default()).unwrap();
        assert!((b.value - s.value).abs() <= b.residual_bound);
        // Reversed orientation gives the same area.
        let rev: Vec<Point> = poly.iter().rev().copied().collect();
        let rd = PolygonDomain::new(&rev).unwrap();
        let s2 = whitney_stokes_sum(&mf, &wd, Residuals::Clip(&rd), &StokesOptions::default()).unwrap();
        assert!((s2.value - s.value).abs() < 1e-12);
    }

    #[test]
    fn rough_form_kernels_agree() {
        let u1 = AnalyticFn::weierstrass(0.8, 8, 0).add(&AnalyticFn::coordinate(1));
        let u2 = AnalyticFn::weierstrass(0.8, 8, 1).add(&AnalyticFn::coordinate(0).scaled(0.5));
        let base = BaseForm::Pair { u1: u1.clone(), u2: u2.clone() };
        let poly = vec![
            Point::new(0.05, 0.1),
            Point::new(0.9, 0.05),
            Point::new(0.95, 0.95),
            Point::new(0.5, 0.6),
            Point::new(0.1, 0.9),
            Point::new(0.05, 0.1),
        ];
        let dom = PolygonDomain::new(&poly).unwrap();
        let wd = whitney_decompose(&dom, 7, WhitneyRule::MaximalAdmissible).unwrap();
        let oracle = line_integral(&mform(u1, u2), &poly);
        let opts = StokesOptions { quadrature_check: true };
        let mut vals = Vec::new();
        for k in [Kernel::Tent, Kernel::Quadratic] {
            let mf = MollifiedFormFamily::for_decomposition(base.clone(), k, 0.6, &wd).unwrap();
            let s = whitney_stokes_sum(&mf, &wd, Residuals::Clip(&dom), &opts).unwrap();
            assert!((s.value - oracle).abs() < 1e-8 + s.error_bound(), "{} vs {oracle}", s.value);
            assert!(s.levels.iter().any(|l| l.boundary_term_sum != 0.0));
            vals.push(s);
        }
        assert!((vals[0].value - vals[1].value).abs() <= vals[0].error_bound() + vals[1].error_bound() + 1e-10);
    }

    #[test]
    fn coverage_and_invariant() {
        let dom = PolygonDomain::unit_square();
        let wd = whitney_decompose(&dom, 6, WhitneyRule::MaximalAdmissible).unwrap();
        let base = BaseForm::Pair {
            u1: AnalyticFn::weierstrass(0.8, 10, 0),
            u2: AnalyticFn::weierstrass(0.8, 10, 1),
        };
        let mf = MollifiedFormFamily::new(base.clone(), Kernel::Tent, 0.6, vec![0.1, 0.5]).unwrap();
        assert!(matches!(
            whitney_stokes_sum(&mf, &wd, Residuals::Bracket, &StokesOptions::default()),
            Err(Error::ScaleCoverage { .. })
        ));
        let scales: Vec<f64> = (0..10).map(|k| 2f64.powi(-k)).collect();
        let mf = MollifiedFormFamily::new(base, Kernel::Quadratic, 0.6, scales).unwrap();
        let pts: Vec<Point> = (0..200).map(|i| Point::new((i as f64 * 0.618).fract(), (i as f64 * 0.414).fract())).collect();
        let c = mf.invariant_constants(&pts).unwrap();
        // Bounded as t -> 0: the fine scales stay within a factor 2 of the
        // largest coarse-scale value.
        let fine = c[..5].iter().map(|x| x.1).fold(0.0, f64::max);
        let coarse = c[5..].iter().map(|x| x.1).fold(0.0, f64::max);
        assert!(fine < 2.0 * coarse, "{c:?}");
    }

    #[test]
    fn audit_smooth_has_no_violations() {
        let dom = PolygonDomain::unit_square();
        let wd = whitney_decompose(&dom, 7, WhitneyRule::MaximalAdmissible).unwrap();
        let mf = MollifiedFormFamily::for_decomposition(BaseForm::Poly(PolyForm::area()), Kernel::Tent, 1.0, &wd).unwrap();
        let a = term_bound_audit(&mf, &wd, None).unwrap();
        assert!(a.violations.is_empty());
        assert!((a.measured_constant() - 1.0).abs() < 1e-12);
    }
}

//! Dyadic Whitney decompositions, box counting and dimension estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degree::WindingIndex;
use crate::error::{Error, Result};
use crate::fractal_gen::lazy::{cell_index, rasterize_segment};
use crate::fractal_gen::LazyPrefractal;
use crate::geom::{Point, Rect};
use crate::quadrature::fit_line;
use crate::spatial::SegmentGrid;

/// Open dyadic square `(i 2^-k, (i+1) 2^-k) x (j 2^-k, (j+1) 2^-k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: i32,
    pub i: i64,
    pub j: i64,
}

impl DyadicCube {
    pub fn new(level: i32, i: i64, j: i64) -> Self {
        DyadicCube { level, i, j }
    }

    pub fn side(&self) -> f64 {
        2f64.powi(-self.level)
    }

    pub fn diam(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.side()
    }

    pub fn rect(&self) -> Rect {
        let s = self.side();
        Rect::new(self.i as f64 * s, self.j as f64 * s, (self.i + 1) as f64 * s, (self.j + 1) as f64 * s)
    }

    pub fn center(&self) -> Point {
        self.rect().center()
    }

    pub fn children(&self) -> [DyadicCube; 4] {
        let (l, i, j) = (self.level + 1, 2 * self.i, 2 * self.j);
        [
            DyadicCube::new(l, i, j),
            DyadicCube::new(l, i + 1, j),
            DyadicCube::new(l, i, j + 1),
            DyadicCube::new(l, i + 1, j + 1),
        ]
    }

    pub fn parent(&self) -> DyadicCube {
        DyadicCube::new(self.level - 1, self.i.div_euclid(2), self.j.div_euclid(2))
    }

    /// Whether the open cubes intersect (nested or equal).
    pub fn overlaps(&self, o: &DyadicCube) -> bool {
        let (a, b) = if self.level <= o.level { (self, o) } else { (o, self) };
        let shift = (b.level - a.level) as u32;
        (b.i >> shift) == a.i && (b.j >> shift) == a.j
    }
}

/// Bounded open set known through its boundary.
pub trait DomainOracle: Sync {
    /// A rectangle containing the closure of the domain.
    fn bbox(&self) -> Rect;
    /// Distance from the closed rectangle to the boundary, exact below `cap`.
    fn boundary_dist(&self, r: &Rect, cap: f64) -> f64;
    /// Membership of a point at positive distance from the boundary.
    fn contains(&self, p: Point) -> Result<bool>;
}

/// Interior of a closed polygon (nonzero winding).
#[derive(Clone, Debug)]
pub struct PolygonDomain {
    grid: SegmentGrid,
    index: WindingIndex,
}

impl PolygonDomain {
    pub fn new(vertices: &[Point]) -> Result<Self> {
        if vertices.len() < 4 {
            return Err(Error::param("vertices", "polygon needs at least three vertices"));
        }
        let mut segs: Vec<(Point, Point)> = vertices.windows(2).map(|w| (w[0], w[1])).collect();
        if vertices.first() != vertices.last() {
            segs.push((vertices[vertices.len() - 1], vertices[0]));
        }
        Ok(PolygonDomain {
            index: WindingIndex::from_closed_polyline(vertices)?,
            grid: SegmentGrid::new(segs),
        })
    }

    pub fn unit_square() -> Self {
        PolygonDomain::new(&[
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 0.0),
        ])
        .expect("valid square")
    }

    pub fn segments(&self) -> &[(Point, Point)] {
        self.grid.segments()
    }

    /// Ids of the segments that may meet `r`, sorted and deduplicated.
    pub fn segments_near(&self, r: &Rect) -> Vec<usize> {
        let mut ids = Vec::new();
        self.grid.for_each_near(r, |k| ids.push(k));
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Signed area (positive for counterclockwise vertex order).
    pub fn signed_area(&self) -> f64 {
        self.segments().iter().map(|(a, b)| a.cross(*b)).sum::<f64>() * 0.5
    }
}

impl DomainOracle for PolygonDomain {
    fn bbox(&self) -> Rect {
        self.grid.bbox()
    }

    fn boundary_dist(&self, r: &Rect, cap: f64) -> f64 {
        self.grid.dist_to_rect(r, cap)
    }

    fn contains(&self, p: Point) -> Result<bool> {
        Ok(self.index.winding(p)? != 0)
    }
}

impl DomainOracle for LazyPrefractal<'_> {
    fn bbox(&self) -> Rect {
        LazyPrefractal::bbox(self)
    }

    fn boundary_dist(&self, r: &Rect, cap: f64) -> f64 {
        self.dist_to_rect(r, cap)
    }

    fn contains(&self, p: Point) -> Result<bool> {
        LazyPrefractal::contains(self, p)
    }
}

/// Cube-selection rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhitneyRule {
    /// Largest cubes inside the domain with `diam <= 4 dist`.
    #[default]
    MaximalAdmissible,
    /// Largest cubes inside the domain with `dist >= diam`.
    Stein,
}

/// Accepted cube together with its boundary distance (capped at `2 diam`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCube {
    pub cube: DyadicCube,
    pub dist: f64,
}

/// Per-level Whitney cubes of a bounded open set, truncated at `k_max`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhitneyDecomposition {
    pub k_min: i32,
    pub k_max: i32,
    pub rule: WhitneyRule,
    /// `levels[k - k_min]` holds the cubes of level `k`.
    pub levels: Vec<Vec<WhitneyCube>>,
    /// Level-`k_max` cubes still undecided whose centre lies in the domain.
    pub residual: Vec<DyadicCube>,
    /// Undecided level-`k_max` cubes meeting the boundary with centre outside.
    pub residual_outside: Vec<DyadicCube>,
    /// Cubes violating `dist <= diam`.
    pub lower_violations: usize,
    /// Cubes violating `diam <= 4 dist`.
    pub upper_violations: usize,
}

enum Outcome {
    Accept(WhitneyCube),
    Split([DyadicCube; 4], bool),
    Discard,
    Residual(DyadicCube, bool),
}

/// Whitney decomposition of the domain down to level `k_max`.
pub fn whitney_decompose<D: DomainOracle + ?Sized>(dom: &D, k_max: i32, rule: WhitneyRule) -> Result<WhitneyDecomposition> {
    if k_max < 3 {
        return Err(Error::param("k_max", "must be at least 3"));
    }
    let bb = dom.bbox();
    let size = bb.width().max(bb.height());
    if !(size > 0.0) || !size.is_finite() {
        return Err(Error::param("domain", "degenerate bounding box"));
    }
    let k_min = (-size.log2().ceil() as i32).min(k_max - 3);
    let s = 2f64.powi(-k_min);
    let mut frontier: Vec<(DyadicCube, bool)> = Vec::new();
    for i in (bb.x0 / s).floor() as i64..=(bb.x1 / s).floor() as i64 {
        for j in (bb.y0 / s).floor() as i64..=(bb.y1 / s).floor() as i64 {
            frontier.push((DyadicCube::new(k_min, i, j), false));
        }
    }
    let mut wd = WhitneyDecomposition {
        k_min,
        k_max,
        rule,
        levels: Vec::new(),
        residual: Vec::new(),
        residual_outside: Vec::new(),
        lower_violations: 0,
        upper_violations: 0,
    };
    for k in k_min..=k_max {
        let outcomes: Vec<Outcome> = frontier
            .par_iter()
            .map(|&(q, known_inside)| classify(dom, q, known_inside, rule, k == k_max))
            .collect::<Result<_>>()?;
        let mut accepted = Vec::new();
        let mut next = Vec::new();
        for o in outcomes {
            match o {
                Outcome::Accept(c) => {
                    if c.dist > c.cube.diam() {
                        wd.lower_violations += 1;
                    }
                    if c.cube.diam() > 4.0 * c.dist {
                        wd.upper_violations += 1;
                    }
                    accepted.push(c);
                }
                Outcome::Split(children, inside) => next.extend(children.iter().map(|&c| (c, inside))),
                Outcome::Discard => {}
                Outcome::Residual(q, true) => wd.residual.push(q),
                Outcome::Residual(q, false) => wd.residual_outside.push(q),
            }
        }
        wd.levels.push(accepted);
        frontier = next;
    }
    Ok(wd)
}

fn classify<D: DomainOracle + ?Sized>(dom: &D, q: DyadicCube, known_inside: bool, rule: WhitneyRule, last: bool) -> Result<Outcome> {
    let r = q.rect();
    let diam = q.diam();
    let d = dom.boundary_dist(&r, 2.0 * diam);
    if d == 0.0 {
        if !last {
            return Ok(Outcome::Split(q.children(), false));
        }
        let inside = match dom.contains(r.center()) {
            Ok(b) => b,
            Err(Error::OnBoundary { .. }) | Err(Error::BoundaryIndeterminate { .. }) => false,
            Err(e) => return Err(e),
        };
        return Ok(Outcome::Residual(q, inside));
    }
    let inside = known_inside || dom.contains(r.center())?;
    if !inside {
        return Ok(Outcome::Discard);
    }
    let ok = match rule {
        WhitneyRule::MaximalAdmissible => diam <= 4.0 * d,
        WhitneyRule::Stein => d >= diam,
    };
    if ok {
        Ok(Outcome::Accept(WhitneyCube { cube: q, dist: d }))
    } else if last {
        Ok(Outcome::Residual(q, true))
    } else {
        Ok(Outcome::Split(q.children(), true))
    }
}

impl WhitneyDecomposition {
    pub fn level(&self, k: i32) -> &[WhitneyCube] {
        if k < self.k_min || k > self.k_max {
            &[]
        } else {
            &self.levels[(k - self.k_min) as usize]
        }
    }

    /// `(k, #W_k)` for every level.
    pub fn counts(&self) -> Vec<(i32, usize)> {
        self.levels
            .iter()
            .enumerate()
            .map(|(i, l)| (self.k_min + i as i32, l.len()))
            .collect()
    }

    pub fn cubes(&self) -> impl Iterator<Item = &WhitneyCube> {
        self.levels.iter().flatten()
    }

    pub fn cube_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    pub fn covered_area(&self) -> f64 {
        self.cubes().map(|c| c.cube.rect().area()).sum()
    }

    pub fn residual_area(&self) -> f64 {
        self.residual.iter().map(|c| c.rect().area()).sum()
    }

    /// Exhaustive pairwise disjointness check via sorted ancestor lookup.
    pub fn check_disjoint(&self) -> bool {
        let mut all: std::collections::HashSet<DyadicCube> = std::collections::HashSet::new();
        for c in self.cubes().map(|c| c.cube).chain(self.residual.iter().copied()) {
            if !all.insert(c) {
                return false;
            }
        }
        for c in all.iter() {
            let mut p = *c;
            while p.level > self.k_min {
                p = p.parent();
                if all.contains(&p) {
                    return false;
                }
            }
        }
        true
    }
}

/// Least-squares dimension estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub method: String,
    /// Scales `r` used in the fit.
    pub scales: Vec<f64>,
    pub counts: Vec<u64>,
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    /// Half-width of a two-standard-error band on the slope.
    pub confidence: f64,
}

/// Slope of `log2 #W_k` against `k` over the populated levels, excluding the
/// two coarsest.
pub fn whitney_dim(wd: &WhitneyDecomposition) -> Result<DimensionReport> {
    let populated: Vec<(i32, usize)> = wd.counts().into_iter().filter(|&(_, c)| c > 0).collect();
    if populated.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "{} populated Whitney levels; at least 6 needed (two coarsest are excluded)",
            populated.len()
        )));
    }
    let used = &populated[2..];
    let xs: Vec<f64> = used.iter().map(|&(k, _)| k as f64).collect();
    let ys: Vec<f64> = used.iter().map(|&(_, c)| (c as f64).log2()).collect();
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate fit".into()))?;
    Ok(DimensionReport {
        method: "whitney".into(),
        scales: used.iter().map(|&(k, _)| 2f64.powi(-k)).collect(),
        counts: used.iter().map(|&(_, c)| c as u64).collect(),
        slope: fit.slope,
        intercept: fit.intercept,
        rms_residual: fit.rms_residual,
        confidence: 2.0 * fit.slope_stderr,
    })
}

/// Number of half-open origin-anchored boxes of side `s` meeting the closed
/// polyline. Returns 1 when `s` exceeds the diameter of the set.
pub fn box_count_polyline(pts: &[Point], s: f64) -> Result<u64> {
    if !(s > 0.0) {
        return Err(Error::param("r", "box side must be positive"));
    }
    let bb = Rect::bounding(pts).ok_or_else(|| Error::param("points", "empty geometry"))?;
    if s >= bb.diag() {
        return Ok(1);
    }
    let mut cells: Vec<u64> = if pts.len() == 1 {
        let mut v = Vec::new();
        rasterize_segment(pts[0], pts[0], s, &mut v);
        v
    } else {
        pts.par_windows(2)
            .flat_map_iter(|w| {
                let mut v = Vec::new();
                rasterize_segment(w[0], w[1], s, &mut v);
                v.into_iter()
            })
            .collect()
    };
    cells.par_sort_unstable();
    cells.dedup();
    Ok(cells.len() as u64)
}

/// Number of half-open origin-anchored boxes of side `s` containing a point.
pub fn box_count_points(pts: &[Point], s: f64) -> Result<u64> {
    if !(s > 0.0) {
        return Err(Error::param("r", "box side must be positive"));
    }
    let bb = Rect::bounding(pts).ok_or_else(|| Error::param("points", "empty geometry"))?;
    if s >= bb.diag() {
        return Ok(1);
    }
    let mut cells: Vec<(i64, i64)> = pts
        .iter()
        .map(|p| (cell_index(p.x, s), cell_index(p.y, s)))
        .collect();
    cells.sort_unstable();
    cells.dedup();
    Ok(cells.len() as u64)
}

/// Fit `log N_r` against `-log r`.
pub fn box_dimension(scales: &[f64], counts: &[u64]) -> Result<DimensionReport> {
    if scales.len() != counts.len() || scales.len() < 4 {
        return Err(Error::InsufficientData("at least four scales required".into()));
    }
    let xs: Vec<f64> = scales.iter().map(|s| -s.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate fit".into()))?;
    Ok(DimensionReport {
        method: "box_count".into(),
        scales: scales.to_vec(),
        counts: counts.to_vec(),
        slope: fit.slope,
        intercept: fit.intercept,
        rms_residual: fit.rms_residual,
        confidence: 2.0 * fit.slope_stderr,
    })
}

/// Area of the `eps`-neighbourhood of a point sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodVolume {
    pub eps: f64,
    pub area: f64,
    /// Pixel size of the bitmap.
    pub h: f64,
    /// Largest gap between consecutive sample points.
    pub max_spacing: f64,
    /// Set when consecutive samples are more than `eps / 2` apart.
    pub under_resolved: bool,
}

/// Bitmap estimate (pixel size `eps / 8`) of the area of the union of closed
/// `eps`-discs around the points, which are taken as an ordered sample of a
/// curve for the spacing check.
pub fn neighborhood_volume(points: &[Point], eps: f64) -> Result<NeighborhoodVolume> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::param("eps", "must be positive"));
    }
    let bb = Rect::bounding(points).ok_or_else(|| Error::param("image_points", "empty sample"))?;
    let h = eps / 8.0;
    let max_spacing = points.windows(2).map(|w| w[0].dist(w[1])).fold(0.0, f64::max);
    // snap to a quarter-pixel lattice and drop duplicates
    let q = h / 4.0;
    let mut keys: Vec<(i64, i64)> = points
        .iter()
        .map(|p| ((p.x / q).round() as i64, (p.y / q).round() as i64))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let area_box = bb.expand(eps + h);
    let nx = (area_box.width() / h).ceil() as usize + 1;
    let ny = (area_box.height() / h).ceil() as usize + 1;
    let cells = nx as u128 * ny as u128;
    if cells > 4_000_000_000 {
        return Err(Error::MemoryGuard {
            requested: cells,
            limit: 4_000_000_000,
        });
    }
    let words = (cells as usize).div_ceil(64);
    let mut bits = vec![0u64; words];
    let reach = (eps / h).ceil() as i64 + 1;
    let eps2 = eps * eps;
    for &(kx, ky) in &keys {
        let p = Point::new(kx as f64 * q, ky as f64 * q);
        let ci = ((p.x - area_box.x0) / h).floor() as i64;
        let cj = ((p.y - area_box.y0) / h).floor() as i64;
        for dj in -reach..=reach {
            let j = cj + dj;
            if j < 0 || j >= ny as i64 {
                continue;
            }
            let y = area_box.y0 + (j as f64 + 0.5) * h - p.y;
            for di in -reach..=reach {
                let i = ci + di;
                if i < 0 || i >= nx as i64 {
                    continue;
                }
                let x = area_box.x0 + (i as f64 + 0.5) * h - p.x;
                if x * x + y * y <= eps2 {
                    let c = j as usize * nx + i as usize;
                    bits[c / 64] |= 1 << (c % 64);
                }
            }
        }
    }
    let count: u64 = bits.iter().map(|w| w.count_ones() as u64).sum();
    Ok(NeighborhoodVolume {
        eps,
        area: count as f64 * h * h,
        h,
        max_spacing,
        under_resolved: max_spacing > 0.5 * eps,
    })
}

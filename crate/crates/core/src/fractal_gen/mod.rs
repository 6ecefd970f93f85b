//! Generator of the self-similar boundary family, pre-fractal polygons, box
//! families and the cell projections between consecutive levels.

pub(crate) mod lazy;

pub use lazy::LazyPrefractal;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::geom::{dist_point_segment, orient2d, segments_intersect, Point};
use crate::motion::EuclideanMotion;

pub use crate::motion::similarity_from_pair;

/// Tolerance on `|dhat(M0, beta0) - target|` for the bisection.
pub const BETA_TOLERANCE: f64 = 1e-12;
/// Bisection iteration cap.
pub const BETA_MAX_ITERATIONS: usize = 200;
/// Largest `M0` the search will try.
pub const M0_LIMIT: usize = 10_000;
/// Default cap on materialized pre-fractal edges.
pub const DEFAULT_EDGE_LIMIT: u128 = 4_000_000;
/// Edge count up to which materialized pre-fractals are checked for simplicity.
pub const SIMPLICITY_CHECK_LIMIT: u128 = 1_000_000;

/// The three unit step directions of the staircase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Step {
    Right,
    Up,
    Down,
}

impl Step {
    pub fn vector(self, beta: f64) -> Point {
        match self {
            Step::Right => Point::new(1.0, 0.0),
            Step::Up => Point::new(beta.sin(), beta.cos()),
            Step::Down => Point::new(beta.sin(), -beta.cos()),
        }
    }
}

/// Step kinds of the staircase for parameter `m`, in order.
pub fn staircase_steps(m: usize) -> Result<Vec<Step>> {
    if m == 0 {
        return Err(Error::param("M", "must be at least 1"));
    }
    let mut out = Vec::with_capacity(4 * m * m + 1);
    let blocks = (1..=m).chain((1..m).rev());
    for a in blocks {
        for l in 1..=4 * a {
            let s = if l == 1 || l == 2 * a + 1 {
                Step::Right
            } else if l < 2 * a + 1 {
                Step::Up
            } else {
                Step::Down
            };
            out.push(s);
        }
    }
    out.push(Step::Right);
    debug_assert_eq!(out.len(), 4 * m * m + 1);
    Ok(out)
}

/// The unit step vectors of the staircase curve for parameters `(m, beta)`.
pub fn staircase_sequence(m: usize, beta: f64) -> Result<Vec<Point>> {
    if !(0.0..=FRAC_PI_2).contains(&beta) {
        return Err(Error::param("beta", format!("{beta} outside [0, pi/2]")));
    }
    Ok(staircase_steps(m)?.into_iter().map(|s| s.vector(beta)).collect())
}

/// First coordinate of the summed staircase, `(4M(M-1)+2) sin(beta) + 4M - 1`.
pub fn staircase_width(m: usize, beta: f64) -> f64 {
    let mf = m as f64;
    (4.0 * mf * (mf - 1.0) + 2.0) * beta.sin() + 4.0 * mf - 1.0
}

/// Similarity dimension `log(4M^2+1) / log(width)` of the staircase system.
pub fn dhat(m: usize, beta: f64) -> f64 {
    let mf = m as f64;
    (4.0 * mf * mf + 1.0).ln() / staircase_width(m, beta).ln()
}

/// The solved similarity system.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Generator {
    pub target_dim: f64,
    pub alpha: f64,
    #[serde(rename = "M0")]
    pub m0: usize,
    pub beta0: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub r: f64,
    pub anchors: Vec<Point>,
    pub similarities: Vec<EuclideanMotion>,
}

fn m0_conditions(m: usize, d: f64, alpha: f64) -> bool {
    let w0 = (4 * m - 1) as f64;
    d < dhat(m, 0.0) && 1.0 / w0 < 0.5 && 2.0 * w0.powf(alpha - 1.0) <= 1.0
}

/// Smallest `M` satisfying the three admissibility conditions.
pub fn find_m0(d: f64, alpha: f64) -> Result<usize> {
    (1..=M0_LIMIT)
        .find(|&m| m0_conditions(m, d, alpha))
        .ok_or(Error::M0GuardExceeded { limit: M0_LIMIT })
}

/// Solve `dhat(m, beta) = d` for `beta` in `[0, pi/2]` by bisection.
pub fn solve_beta(m: usize, d: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0f64, FRAC_PI_2);
    if !(dhat(m, lo) > d && dhat(m, hi) < d) {
        return Err(Error::Precondition(format!(
            "target dimension {d} not bracketed by dhat({m}, .) on [0, pi/2]"
        )));
    }
    let mut residual = f64::INFINITY;
    for _ in 0..BETA_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let f = dhat(m, mid) - d;
        residual = f.abs();
        if residual <= BETA_TOLERANCE {
            return Ok(mid);
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::BisectionFailed {
        iterations: BETA_MAX_ITERATIONS,
        residual,
    })
}

/// Build the generator for target boundary dimension `d` and Hölder exponent
/// `alpha`.
pub fn build_generator(d: f64, alpha: f64) -> Result<Generator> {
    if !(d > 1.0 && d < 2.0) {
        return Err(Error::param("target_dim", format!("{d} outside (1, 2)")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("{alpha} outside (0, 1)")));
    }
    let m0 = find_m0(d, alpha)?;
    let beta0 = solve_beta(m0, d)?;
    let steps = staircase_steps(m0)?;
    let n = steps.len();
    let (sb, cb) = beta0.sin_cos();
    let width = staircase_width(m0, beta0);
    let r = 1.0 / width;

    // Anchor coordinates from integer step counts, which keeps p(N) on the
    // x-axis exactly and avoids drift from summing N floating steps.
    let mut anchors = Vec::with_capacity(n + 1);
    anchors.push(Point::ORIGIN);
    let (mut nr, mut nu, mut nd) = (0u64, 0u64, 0u64);
    for s in &steps {
        match s {
            Step::Right => nr += 1,
            Step::Up => nu += 1,
            Step::Down => nd += 1,
        }
        let x = (nr as f64 + (nu + nd) as f64 * sb) * r;
        let y = (nu as f64 - nd as f64) * cb * r;
        anchors.push(Point::new(x, y));
    }
    let last = anchors[n];
    if (last.x - 1.0).abs() > 1e-12 || last.y != 0.0 {
        return Err(Error::Numerical(format!("staircase does not close at (1,0): {last:?}")));
    }
    anchors[n] = Point::new(1.0, 0.0);

    let similarities = steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let v = s.vector(beta0);
            EuclideanMotion::from_direction(r, v.x, v.y, anchors[i])
        })
        .collect();

    let gen = Generator {
        target_dim: d,
        alpha,
        m0,
        beta0,
        n,
        r,
        anchors,
        similarities,
    };
    gen.validate()?;
    Ok(gen)
}

impl Generator {
    /// Check every structural invariant; returns the first violation.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n != 4 * self.m0 * self.m0 + 1 {
            return Err(Error::Numerical(format!("N = {n} but M0 = {}", self.m0)));
        }
        let e = self.dimension_residual();
        if e > 1e-9 {
            return Err(Error::Numerical(format!("|N r^d - 1| = {e:e}")));
        }
        if !(self.r < 0.5) || 2.0 * self.r.powf(1.0 - self.alpha) > 1.0 {
            return Err(Error::Numerical(format!("ratio r = {} violates the bounds", self.r)));
        }
        if self.anchors.len() != n + 1 || self.similarities.len() != n {
            return Err(Error::Numerical("anchor/similarity count mismatch".into()));
        }
        if self.anchors[0] != Point::ORIGIN || self.anchors[n] != Point::new(1.0, 0.0) {
            return Err(Error::Numerical("anchors do not start at (0,0) and end at (1,0)".into()));
        }
        for i in 1..=n {
            let len = self.anchors[i].dist(self.anchors[i - 1]);
            if (len / self.r - 1.0).abs() > 1e-12 {
                return Err(Error::Numerical(format!("anchor step {i} has length {len}")));
            }
            let s = &self.similarities[i - 1];
            let tol = 1e-14;
            if s.apply(Point::ORIGIN).dist(self.anchors[i - 1]) > tol
                || s.apply(Point::new(1.0, 0.0)).dist(self.anchors[i]) > tol
            {
                return Err(Error::Numerical(format!("similarity {i} misses its anchors")));
            }
        }
        self.check_triangle_invariance(1e-12)
    }

    /// `|N r^d - 1|`.
    pub fn dimension_residual(&self) -> f64 {
        (self.n as f64 * self.r.powf(self.target_dim) - 1.0).abs()
    }

    /// Verify `S_i(D) ⊂ D` for the closed triangle `D` with vertices
    /// `(0,0), (1,0), (1/2,1/2)`.
    pub fn check_triangle_invariance(&self, tol: f64) -> Result<()> {
        let tri = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.5, 0.5)];
        for (i, s) in self.similarities.iter().enumerate() {
            for v in tri {
                let q = s.apply(v);
                if q.y < -tol || q.y > q.x.min(1.0 - q.x) + tol {
                    return Err(Error::Numerical(format!(
                        "S_{} maps a triangle vertex outside the triangle: {q:?}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Height of the generator polyline above abscissa `x` in `[0, 1]`.
    pub fn profile_height(&self, x: f64) -> f64 {
        let a = &self.anchors;
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 0.0;
        }
        // anchors are strictly increasing in x
        let idx = a.partition_point(|p| p.x <= x);
        let (p, q) = (a[idx - 1], a[idx]);
        let t = (x - p.x) / (q.x - p.x);
        p.y + t * (q.y - p.y)
    }

    /// Whether `y` (in generator coordinates) lies in the closed region between
    /// the unit segment and the generator polyline.
    pub fn cell_contains(&self, y: Point, tol: f64) -> bool {
        y.x >= -tol && y.x <= 1.0 + tol && y.y >= -tol && y.y <= self.profile_height(y.x) + tol
    }
}

/// The four side motions of the unit square, indexed `1..=4`.
pub fn side_motion(i0: u8) -> EuclideanMotion {
    match i0 {
        1 => EuclideanMotion::from_direction(1.0, 1.0, 0.0, Point::new(0.0, 1.0)),
        2 => EuclideanMotion::from_direction(1.0, 0.0, -1.0, Point::new(1.0, 1.0)),
        3 => EuclideanMotion::from_direction(1.0, -1.0, 0.0, Point::new(1.0, 0.0)),
        4 => EuclideanMotion::from_direction(1.0, 0.0, 1.0, Point::new(0.0, 0.0)),
        _ => panic!("side index {i0} outside 1..=4"),
    }
}

/// Side order for counterclockwise traversal starting at the origin.
pub const CCW_SIDES: [u8; 4] = [3, 2, 1, 4];

/// Address `(i0 | i1, ..., im)` of a composite similarity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Address {
    pub i0: u8,
    pub digits: Vec<u32>,
}

impl Address {
    pub fn level(&self) -> usize {
        self.digits.len()
    }

    /// Composite motion `S*_{i0} ∘ S_{i1} ∘ ... ∘ S_{im}`.
    pub fn motion(&self, gen: &Generator) -> EuclideanMotion {
        let mut t = side_motion(self.i0);
        for &d in &self.digits {
            t = t.compose(&gen.similarities[d as usize - 1]);
        }
        t
    }

    pub fn truncated(&self, level: usize) -> Address {
        Address {
            i0: self.i0,
            digits: self.digits[..level].to_vec(),
        }
    }

    /// Address of the `k`-th counterclockwise edge of the level-`m` pre-fractal.
    pub fn of_ccw_edge(n: usize, m: usize, k: u128) -> Address {
        let per_side = (n as u128).pow(m as u32);
        let side = (k / per_side) as usize;
        let mut rem = k % per_side;
        let mut digits = vec![0u32; m];
        for j in (0..m).rev() {
            let q = (rem % n as u128) as u32;
            rem /= n as u128;
            digits[j] = n as u32 - q;
        }
        Address {
            i0: CCW_SIDES[side],
            digits,
        }
    }

    /// Inverse of [`Address::of_ccw_edge`].
    pub fn ccw_index(&self, n: usize) -> u128 {
        let side = CCW_SIDES.iter().position(|&s| s == self.i0).expect("valid side") as u128;
        let mut k = 0u128;
        for &d in &self.digits {
            k = k * n as u128 + (n as u128 - d as u128);
        }
        side * (n as u128).pow(self.digits.len() as u32) + k
    }
}

/// Number of edges `4 N^m` of the level-`m` pre-fractal.
pub fn edge_count(n: usize, m: usize) -> Option<u128> {
    (n as u128).checked_pow(m as u32)?.checked_mul(4)
}

/// The closed pre-fractal polygon at level `m`, oriented counterclockwise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreFractal {
    pub level: usize,
    pub vertices: Vec<Point>,
    pub edge_addresses: Vec<Address>,
    pub edge_length: f64,
    #[serde(skip)]
    edge_motions: Vec<EuclideanMotion>,
}

/// Motions of all level-`m` edges in counterclockwise order.
pub(crate) fn ccw_edge_motions(gen: &Generator, m: usize) -> Vec<EuclideanMotion> {
    let mut cur: Vec<EuclideanMotion> = CCW_SIDES.iter().map(|&s| side_motion(s)).collect();
    for _ in 0..m {
        cur = cur
            .par_iter()
            .flat_map_iter(|t| gen.similarities.iter().rev().map(move |s| t.compose(s)))
            .collect();
    }
    cur
}

/// Materialize the level-`m` pre-fractal, refusing more than `edge_limit` edges.
pub fn iterate_prefractal_with_limit(gen: &Generator, m: usize, edge_limit: u128) -> Result<PreFractal> {
    let requested = edge_count(gen.n, m).ok_or(Error::Overflow("edge count"))?;
    if requested > edge_limit {
        return Err(Error::MemoryGuard {
            requested,
            limit: edge_limit,
        });
    }
    let motions = ccw_edge_motions(gen, m);
    let e1 = Point::new(1.0, 0.0);
    let mut vertices: Vec<Point> = motions.par_iter().map(|t| t.apply(e1)).collect();
    vertices.push(vertices[0]);
    let n = gen.n;
    let edge_addresses: Vec<Address> = (0..motions.len())
        .into_par_iter()
        .map(|k| Address::of_ccw_edge(n, m, k as u128))
        .collect();
    let pf = PreFractal {
        level: m,
        vertices,
        edge_addresses,
        edge_length: gen.r.powi(m as i32),
        edge_motions: motions,
    };
    if requested <= SIMPLICITY_CHECK_LIMIT {
        if let Some((i, j)) = find_self_intersection(&pf.vertices) {
            return Err(Error::SelfIntersection(i, j));
        }
    }
    Ok(pf)
}

/// Materialize the level-`m` pre-fractal with the default edge guard.
pub fn iterate_prefractal(gen: &Generator, m: usize) -> Result<PreFractal> {
    iterate_prefractal_with_limit(gen, m, DEFAULT_EDGE_LIMIT)
}

impl PreFractal {
    pub fn edge_count(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Composite motion of edge `k` (maps the unit segment onto the edge with
    /// reversed orientation).
    pub fn edge_motion(&self, k: usize) -> EuclideanMotion {
        self.edge_motions[k]
    }

    pub fn edge(&self, k: usize) -> (Point, Point) {
        (self.vertices[k], self.vertices[k + 1])
    }

    /// Signed enclosed area (positive for counterclockwise orientation).
    pub fn area(&self) -> f64 {
        crate::geom::shoelace(&self.vertices[..self.vertices.len() - 1])
    }

    /// Smallest and largest edge length relative to `edge_length`.
    pub fn edge_length_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for w in self.vertices.windows(2) {
            let l = w[0].dist(w[1]) / self.edge_length;
            lo = lo.min(l);
            hi = hi.max(l);
        }
        (lo, hi)
    }
}

fn grid_key(p: Point, cell: f64) -> (i64, i64) {
    ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
}

/// Bucket the segments of a closed polyline into a uniform grid and return
/// candidate pairs sharing a bucket.
fn segment_buckets(v: &[Point], cell: f64) -> HashMap<(i64, i64), Vec<u32>> {
    let mut map: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
    for k in 0..v.len() - 1 {
        let (a, b) = (v[k], v[k + 1]);
        let (ax, ay) = grid_key(Point::new(a.x.min(b.x), a.y.min(b.y)), cell);
        let (bx, by) = grid_key(Point::new(a.x.max(b.x), a.y.max(b.y)), cell);
        for ix in ax..=bx {
            for iy in ay..=by {
                map.entry((ix, iy)).or_default().push(k as u32);
            }
        }
    }
    map
}

/// Locate a pair of non-adjacent intersecting edges (or a fold-back between
/// adjacent ones) in a closed polyline.
pub fn find_self_intersection(v: &[Point]) -> Option<(usize, usize)> {
    let e = v.len() - 1;
    if e < 3 {
        return None;
    }
    for k in 0..e {
        let a = v[k];
        let b = v[k + 1];
        let c = v[(k + 2) % e];
        if orient2d(a, b, c) == 0.0 && (c - b).dot(a - b) > 0.0 {
            return Some((k, (k + 1) % e));
        }
    }
    let mean_len = v.windows(2).map(|w| w[0].dist(w[1])).sum::<f64>() / e as f64;
    let buckets = segment_buckets(v, 2.0 * mean_len);
    let mut keys: Vec<_> = buckets.keys().copied().collect();
    keys.sort_unstable();
    let hit = keys.par_iter().find_map_first(|key| {
        let segs = &buckets[key];
        for (ai, &i) in segs.iter().enumerate() {
            for &j in &segs[ai + 1..] {
                let (i, j) = (i as usize, j as usize);
                let gap = (i as isize - j as isize).unsigned_abs();
                if gap <= 1 || gap == e - 1 {
                    continue;
                }
                if segments_intersect(v[i], v[i + 1], v[j], v[j + 1]) {
                    return Some((i.min(j), i.max(j)));
                }
            }
        }
        None
    });
    hit
}

/// Even-odd membership of `q` in the open region bounded by the pre-fractal.
pub fn domain_contains(pf: &PreFractal, q: Point) -> Result<bool> {
    let v = &pf.vertices;
    let diam = crate::geom::Rect::bounding(v).map(|r| r.diag()).unwrap_or(1.0);
    let tol = 1e-12 * diam;
    let mut inside = false;
    for w in v.windows(2) {
        let (a, b) = (w[0], w[1]);
        if dist_point_segment(q, a, b) <= tol {
            return Err(Error::BoundaryIndeterminate { x: q.x, y: q.y, tol });
        }
        if (a.y <= q.y) != (b.y <= q.y) {
            let o = orient2d(a, b, q);
            let upward = b.y > a.y;
            if (upward && o > 0.0) || (!upward && o < 0.0) {
                inside = !inside;
            }
        }
    }
    Ok(inside)
}

/// One edge of the level-`m` box family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoxEntry {
    /// Counterclockwise endpoints.
    pub segment: [Point; 2],
    /// Isometric frame: origin at the edge midpoint, `e2` along the outward
    /// normal. Local abscissa runs against the counterclockwise direction.
    pub frame: EuclideanMotion,
    pub center: Point,
    pub normal: Point,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoxFamily {
    pub level: usize,
    /// Half-length `r^m / 2` of every box.
    pub radius: f64,
    pub boxes: Vec<BoxEntry>,
}

/// Frame of the edge carried by composite motion `t` (scale `r^m`).
pub fn edge_frame(t: &EuclideanMotion) -> EuclideanMotion {
    let d = t.direction();
    EuclideanMotion::from_direction(1.0, d.x, d.y, t.apply(Point::new(0.5, 0.0)))
}

pub fn box_family(pf: &PreFractal) -> BoxFamily {
    let boxes = (0..pf.edge_count())
        .into_par_iter()
        .map(|k| {
            let t = pf.edge_motion(k);
            let frame = edge_frame(&t);
            BoxEntry {
                segment: [pf.vertices[k], pf.vertices[k + 1]],
                frame,
                center: frame.translation(),
                normal: frame.direction().perp(),
            }
        })
        .collect();
    BoxFamily {
        level: pf.level,
        radius: 0.5 * pf.edge_length,
        boxes,
    }
}

impl BoxFamily {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Smallest distance between boxes with disjoint closures.
    pub fn min_separation(&self) -> f64 {
        let e = self.boxes.len();
        let side = 2.0 * self.radius;
        let mut v: Vec<Point> = self.boxes.iter().map(|b| b.segment[0]).collect();
        v.push(self.boxes[0].segment[0]);
        let buckets = segment_buckets(&v, side);
        let mut best = f64::INFINITY;
        for (&(ix, iy), segs) in &buckets {
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(other) = buckets.get(&(ix + dx, iy + dy)) else { continue };
                    for &i in segs {
                        for &j in other {
                            let (i, j) = (i as usize, j as usize);
                            let gap = (i as isize - j as isize).unsigned_abs();
                            if gap <= 1 || gap == e - 1 {
                                continue;
                            }
                            let d = crate::geom::dist_segment_segment(v[i], v[i + 1], v[j], v[j + 1]);
                            best = best.min(d);
                        }
                    }
                }
            }
        }
        best
    }
}

/// Project `x` from the level-`level_from` cell with address `addr` down to
/// the level-`level_to` pre-fractal.
pub fn project_point(
    gen: &Generator,
    level_from: usize,
    level_to: usize,
    x: Point,
    addr: &Address,
) -> Result<Point> {
    if level_from <= level_to {
        return Err(Error::param("level_from", "must exceed level_to"));
    }
    if addr.level() != level_from {
        return Err(Error::AddressMismatch(format!(
            "address has {} digits, expected {level_from}",
            addr.level()
        )));
    }
    let mut motions = Vec::with_capacity(level_from);
    let mut t = side_motion(addr.i0);
    motions.push(t);
    for &d in &addr.digits[..level_from - 1] {
        t = t.compose(&gen.similarities[d as usize - 1]);
        motions.push(t);
    }
    let mut p = x;
    for j in (level_to..level_from).rev() {
        let t = &motions[j];
        let y = t.apply_inverse(p);
        if !gen.cell_contains(y, 1e-9) {
            return Err(Error::AddressMismatch(format!(
                "point {p:?} is not in the level-{j} cell of its address"
            )));
        }
        p = t.apply(Point::new(y.x.clamp(0.0, 1.0), 0.0));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staircase_for_m1() {
        let s = staircase_steps(1).unwrap();
        assert_eq!(s, vec![Step::Right, Step::Up, Step::Right, Step::Down, Step::Right]);
        let beta = 0.3;
        let tot: f64 = staircase_sequence(1, beta).unwrap().iter().map(|v| v.x).sum();
        assert!((tot - (2.0 * beta.sin() + 3.0)).abs() < 1e-15);
        assert!(staircase_steps(0).is_err());
    }

    #[test]
    fn staircase_width_matches_sum() {
        for m in 1..8 {
            for beta in [0.0, 0.2, 1.0, FRAC_PI_2] {
                let tot: f64 = staircase_sequence(m, beta).unwrap().iter().map(|v| v.x).sum();
                assert!((tot - staircase_width(m, beta)).abs() < 1e-12 * tot);
            }
        }
        assert_eq!(staircase_width(3, 0.0), 11.0);
        assert!((dhat(3, 0.0) - 37f64.ln() / 11f64.ln()).abs() < 1e-15);
        assert_eq!(dhat(5, FRAC_PI_2), 1.0);
    }

    #[test]
    fn staircase_closes_vertically() {
        let steps = staircase_steps(4).unwrap();
        let up = steps.iter().filter(|s| **s == Step::Up).count();
        let down = steps.iter().filter(|s| **s == Step::Down).count();
        assert_eq!(up, down);
    }

    #[test]
    fn m0_values() {
        assert_eq!(find_m0(1.5, 0.7).unwrap(), 3);
        assert_eq!(find_m0(1.5, 0.8).unwrap(), 9);
        assert_eq!(find_m0(1.2, 0.3).unwrap(), 1);
    }

    #[test]
    fn generator_invariants() {
        let g = build_generator(1.5, 0.7).unwrap();
        assert_eq!(g.n, 37);
        assert!(g.dimension_residual() < 1e-9);
        assert!((dhat(g.m0, g.beta0) - 1.5).abs() <= BETA_TOLERANCE);
        let s = similarity_from_pair(g.anchors[0], g.anchors[1]).unwrap();
        assert!((s.scale() - g.r).abs() < 1e-15);
        assert!(build_generator(2.0, 0.5).is_err());
        assert!(build_generator(1.5, 1.0).is_err());
    }

    #[test]
    fn address_roundtrip() {
        for m in 0..3 {
            let e = edge_count(5, m).unwrap();
            for k in 0..e {
                let a = Address::of_ccw_edge(5, m, k);
                assert_eq!(a.ccw_index(5), k);
            }
        }
    }

    #[test]
    fn level_zero_is_unit_square() {
        let g = build_generator(1.5, 0.7).unwrap();
        let pf = iterate_prefractal(&g, 0).unwrap();
        let expect = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 0.0),
        ];
        for (p, q) in pf.vertices.iter().zip(expect) {
            assert!(p.dist(q) < 1e-15, "{p:?} vs {q:?}");
        }
        assert!((pf.area() - 1.0).abs() < 1e-15);
        let bf = box_family(&pf);
        let normals = [(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)];
        for (b, (nx, ny)) in bf.boxes.iter().zip(normals) {
            assert!(b.normal.dist(Point::new(nx, ny)) < 1e-15);
        }
    }

    #[test]
    fn projection_fixes_lower_level() {
        let g = build_generator(1.5, 0.7).unwrap();
        let a = Address::of_ccw_edge(g.n, 2, 777);
        let t = a.truncated(1).motion(&g);
        let x = t.apply(Point::new(0.3, 0.0));
        let p = project_point(&g, 2, 1, x, &a).unwrap();
        assert!(p.dist(x) < 1e-15);
        let far = Point::new(5.0, 5.0);
        assert!(project_point(&g, 2, 1, far, &a).is_err());
    }
}

//! Pre-fractals traversed through the similarity tree without materializing
//! the polygon. Every subtree of the tree lies in the image of the triangle
//! `D` under its composite motion, so the circumscribed disc of `D` bounds it.

use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use super::{edge_count, side_motion, Address, Generator, CCW_SIDES};
use crate::error::{Error, Result};
use crate::geom::{dist_point_segment, dist_segment_rect, orient2d, Point, Rect};
use crate::motion::EuclideanMotion;
use crate::quadrature::NeumaierSum;

const BALL_CENTER: Point = Point::new(0.5, 0.0);
const BALL_RADIUS: f64 = 0.5 * (1.0 + 1e-9);

/// The level-`m` pre-fractal of a generator, evaluated lazily.
#[derive(Clone, Copy, Debug)]
pub struct LazyPrefractal<'g> {
    gen: &'g Generator,
    level: usize,
}

#[derive(Clone, Copy)]
struct Node {
    motion: EuclideanMotion,
    depth: usize,
}

struct Queued {
    lb: f64,
    node: Node,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.lb == o.lb
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on the lower bound
        o.lb.total_cmp(&self.lb)
    }
}

#[inline]
fn ball(t: &EuclideanMotion) -> (Point, f64) {
    (t.apply(BALL_CENTER), t.scale() * BALL_RADIUS)
}

/// Vertices of the image of the triangle `D = conv{(0,0), (1,0), (1/2,1/2)}`,
/// which contains the whole subtree.
#[inline]
fn triangle(t: &EuclideanMotion) -> [Point; 3] {
    [t.translation(), t.apply(Point::new(1.0, 0.0)), t.apply(Point::new(0.5, 0.5))]
}

#[inline]
fn pack(ix: i64, iy: i64) -> u64 {
    ((ix as i32 as u32 as u64) << 32) | (iy as i32 as u32 as u64)
}

/// Cell index of `v` for boxes of side `s`. Values within `1e-9` cells below
/// a grid line are assigned to the line, so points lying on a line up to
/// round-off land in the same cell along every evaluation path.
#[inline]
pub(crate) fn cell_index(v: f64, s: f64) -> i64 {
    (v / s + 1e-9).floor() as i64
}

/// Half-open grid cells of side `s` meeting the segment `[a, b]`.
pub(crate) fn rasterize_segment(a: Point, b: Point, s: f64, out: &mut Vec<u64>) {
    let (lo, hi) = if a.x <= b.x { (a, b) } else { (b, a) };
    let c0 = cell_index(lo.x, s);
    let c1 = cell_index(hi.x, s);
    for ix in c0..=c1 {
        let xa = (ix as f64 * s).max(lo.x);
        let xb = ((ix + 1) as f64 * s).min(hi.x);
        let (ya, yb) = if hi.x == lo.x {
            (lo.y.min(hi.y), lo.y.max(hi.y))
        } else {
            let f = |x: f64| lo.y + (hi.y - lo.y) * ((x - lo.x) / (hi.x - lo.x));
            let (u, v) = (f(xa), f(xb));
            (u.min(v), u.max(v))
        };
        let r0 = cell_index(ya, s);
        let r1 = cell_index(yb, s);
        for iy in r0..=r1 {
            out.push(pack(ix, iy));
        }
    }
}

impl<'g> LazyPrefractal<'g> {
    pub fn new(gen: &'g Generator, level: usize) -> Self {
        LazyPrefractal { gen, level }
    }

    pub fn generator(&self) -> &'g Generator {
        self.gen
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn edge_count(&self) -> Option<u128> {
        edge_count(self.gen.n, self.level)
    }

    pub fn edge_length(&self) -> f64 {
        self.gen.r.powi(self.level as i32)
    }

    fn roots(&self) -> [Node; 4] {
        [1u8, 2, 3, 4].map(|i| Node {
            motion: side_motion(i),
            depth: 0,
        })
    }

    fn child(&self, n: &Node, i: usize) -> Node {
        Node {
            motion: n.motion.compose(&self.gen.similarities[i]),
            depth: n.depth + 1,
        }
    }

    /// Address of the `k`-th counterclockwise edge.
    pub fn edge_address(&self, k: u128) -> Address {
        Address::of_ccw_edge(self.gen.n, self.level, k)
    }

    /// Composite motion of the `k`-th counterclockwise edge.
    pub fn edge_motion(&self, k: u128) -> EuclideanMotion {
        self.edge_address(k).motion(self.gen)
    }

    /// Endpoints of the `k`-th counterclockwise edge, in traversal order.
    pub fn edge(&self, k: u128) -> (Point, Point) {
        let t = self.edge_motion(k);
        (t.apply(Point::new(1.0, 0.0)), t.translation())
    }

    /// Motions of the counterclockwise edges `start..start+count`.
    pub fn edge_motions_range(&self, start: u128, count: usize) -> Vec<EuclideanMotion> {
        let total = self.edge_count().unwrap_or(u128::MAX);
        (0..count)
            .into_par_iter()
            .map(|j| self.edge_motion((start + j as u128) % total))
            .collect()
    }

    /// Visit every edge in counterclockwise order with its motion.
    pub fn for_each_edge<F: FnMut(&EuclideanMotion)>(&self, mut f: F) {
        fn rec<F: FnMut(&EuclideanMotion)>(lp: &LazyPrefractal, t: &EuclideanMotion, depth: usize, f: &mut F) {
            if depth == lp.level {
                f(t);
                return;
            }
            for s in lp.gen.similarities.iter().rev() {
                rec(lp, &t.compose(s), depth + 1, f);
            }
        }
        for &side in &CCW_SIDES {
            rec(self, &side_motion(side), 0, &mut f);
        }
    }

    /// Signed area enclosed by the pre-fractal (shoelace, streamed).
    pub fn shoelace_area(&self) -> f64 {
        let sides: Vec<f64> = CCW_SIDES
            .par_iter()
            .map(|&side| {
                let mut acc = NeumaierSum::default();
                let sub = LazyPrefractal { gen: self.gen, level: self.level };
                let mut visit = |t: &EuclideanMotion| {
                    let a = t.apply(Point::new(1.0, 0.0));
                    let b = t.translation();
                    acc.add(a.cross(b));
                };
                fn rec<F: FnMut(&EuclideanMotion)>(lp: &LazyPrefractal, t: &EuclideanMotion, depth: usize, f: &mut F) {
                    if depth == lp.level {
                        f(t);
                        return;
                    }
                    for s in lp.gen.similarities.iter().rev() {
                        rec(lp, &t.compose(s), depth + 1, f);
                    }
                }
                rec(&sub, &side_motion(side), 0, &mut visit);
                acc.value()
            })
            .collect();
        let total: NeumaierSum = sides.into_iter().collect();
        0.5 * total.value()
    }

    /// Number of half-open grid boxes of side `s` (anchored at the origin)
    /// meeting the pre-fractal.
    pub fn box_count(&self, s: f64) -> u64 {
        let mut cells = self.box_cells(s);
        cells.par_sort_unstable();
        cells.dedup();
        cells.len() as u64
    }

    fn box_cells(&self, s: f64) -> Vec<u64> {
        fn rec(lp: &LazyPrefractal, n: &Node, s: f64, out: &mut Vec<u64>) {
            let t = &n.motion;
            if n.depth == lp.level {
                rasterize_segment(t.translation(), t.apply(Point::new(1.0, 0.0)), s, out);
                return;
            }
            // the subtree lies in the image of the closed triangle D
            let (a, b, c) = (t.translation(), t.apply(Point::new(1.0, 0.0)), t.apply(Point::new(0.5, 0.5)));
            let ix0 = cell_index(a.x.min(b.x).min(c.x), s);
            let ix1 = cell_index(a.x.max(b.x).max(c.x), s);
            let iy0 = cell_index(a.y.min(b.y).min(c.y), s);
            let iy1 = cell_index(a.y.max(b.y).max(c.y), s);
            if ix0 == ix1 && iy0 == iy1 {
                out.push(pack(ix0, iy0));
                return;
            }
            // both endpoints lie on the curve; when they occupy the only two
            // cells in range, nothing else can be hit
            if (ix1 - ix0) + (iy1 - iy0) == 1 {
                let ca = (cell_index(a.x, s), cell_index(a.y, s));
                let cb = (cell_index(b.x, s), cell_index(b.y, s));
                if ca != cb {
                    out.push(pack(ca.0, ca.1));
                    out.push(pack(cb.0, cb.1));
                    return;
                }
            }
            for i in 0..lp.gen.n {
                rec(lp, &lp.child(n, i), s, out);
            }
        }
        // split work over the first level of the tree for parallelism
        let mut tasks: Vec<Node> = Vec::new();
        for root in self.roots() {
            if self.level == 0 {
                tasks.push(root);
            } else {
                tasks.extend((0..self.gen.n).map(|i| self.child(&root, i)));
            }
        }
        tasks
            .par_iter()
            .map(|n| {
                let mut out = Vec::new();
                rec(self, n, s, &mut out);
                out.sort_unstable();
                out.dedup();
                out
            })
            .flatten_iter()
            .collect()
    }

    /// Distance from the closed rectangle to the curve, exact when below `cap`
    /// (otherwise some value `>= cap` is returned).
    pub fn dist_to_rect(&self, rect: &Rect, cap: f64) -> f64 {
        self.branch_and_bound(
            cap,
            |t, best| {
                let (c, r) = ball(t);
                let lb = (rect.dist_to_point(c) - r).max(0.0);
                if lb >= best || lb == 0.0 && rect.contains(c) {
                    return lb;
                }
                let [a, b, apex] = triangle(t);
                if rect.contains(a) || rect.contains(b) || rect.contains(apex) {
                    return 0.0;
                }
                let q = rect.center();
                if orient2d(a, b, q) > 0.0 && orient2d(b, apex, q) > 0.0 && orient2d(apex, a, q) > 0.0 {
                    return 0.0;
                }
                dist_segment_rect(a, b, rect)
                    .min(dist_segment_rect(b, apex, rect))
                    .min(dist_segment_rect(apex, a, rect))
                    .max(lb)
            },
            |a, b| dist_segment_rect(a, b, rect),
        )
    }

    /// Distance from `p` to the curve, exact when below `cap`.
    pub fn dist_to_point(&self, p: Point, cap: f64) -> f64 {
        self.branch_and_bound(
            cap,
            |t, _| {
                let (c, r) = ball(t);
                (p.dist(c) - r).max(0.0)
            },
            |a, b| dist_point_segment(p, a, b),
        )
    }

    fn branch_and_bound<L, S>(&self, cap: f64, lower: L, leaf: S) -> f64
    where
        L: Fn(&EuclideanMotion, f64) -> f64,
        S: Fn(Point, Point) -> f64,
    {
        let mut best = cap;
        let mut heap = BinaryHeap::new();
        for n in self.roots() {
            let lb = lower(&n.motion, best);
            if lb < best {
                heap.push(Queued { lb, node: n });
            }
        }
        let e1 = Point::new(1.0, 0.0);
        while let Some(Queued { lb, node }) = heap.pop() {
            if lb >= best {
                break;
            }
            let t = &node.motion;
            if node.depth == self.level {
                let d = leaf(t.translation(), t.apply(e1));
                if d < best {
                    best = d;
                    if best == 0.0 {
                        break;
                    }
                }
                continue;
            }
            for s in &self.gen.similarities {
                let child = t.compose(s);
                let lb = lower(&child, best);
                if lb < best {
                    heap.push(Queued {
                        lb,
                        node: Node {
                            motion: child,
                            depth: node.depth + 1,
                        },
                    });
                }
            }
        }
        best
    }

    /// Winding number of the counterclockwise pre-fractal around `p`.
    ///
    /// Subtrees whose bounding disc excludes `p` contribute the angle of their
    /// chord, so only the few discs containing `p` are refined.
    pub fn winding(&self, p: Point) -> Result<i64> {
        let tol = 1e-12;
        let e1 = Point::new(1.0, 0.0);
        let mut total = NeumaierSum::default();
        let mut stack: Vec<Node> = self.roots().to_vec();
        while let Some(n) = stack.pop() {
            let t = &n.motion;
            let a = t.translation();
            let b = t.apply(e1);
            let (c, r) = ball(t);
            let leaf = n.depth == self.level;
            if leaf || p.dist(c) > r {
                if leaf && dist_point_segment(p, a, b) <= tol {
                    return Err(Error::OnBoundary { x: p.x, y: p.y });
                }
                let (u, v) = (a - p, b - p);
                total.add(u.cross(v).atan2(u.dot(v)));
                continue;
            }
            for i in 0..self.gen.n {
                stack.push(self.child(&n, i));
            }
        }
        // natural traversal is clockwise
        let w = -total.value() / (2.0 * PI);
        let k = w.round();
        if (w - k).abs() > 1e-6 {
            return Err(Error::Numerical(format!("angle sum {w} is not near an integer")));
        }
        Ok(k as i64)
    }

    /// Membership of `p` in the open region bounded by the pre-fractal.
    pub fn contains(&self, p: Point) -> Result<bool> {
        Ok(self.winding(p)? != 0)
    }

    /// Bounding box of the curve (loose).
    pub fn bbox(&self) -> Rect {
        Rect::new(-0.5, -0.5, 1.5, 1.5)
    }

    /// Materialize the vertex list (closed, counterclockwise).
    pub fn vertices(&self) -> Result<Vec<Point>> {
        Ok(super::iterate_prefractal(self.gen, self.level)?.vertices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractal_gen::{build_generator, iterate_prefractal};

    #[test]
    fn lazy_edges_match_materialized() {
        let g = build_generator(1.5, 0.7).unwrap();
        let pf = iterate_prefractal(&g, 2).unwrap();
        let lp = LazyPrefractal::new(&g, 2);
        for k in [0usize, 1, 36, 37, 1368, 1369, 5000, 5475] {
            let (a, b) = lp.edge(k as u128);
            assert!(a.dist(pf.vertices[k]) < 1e-14);
            assert!(b.dist(pf.vertices[k + 1]) < 1e-14);
        }
        let mut count = 0usize;
        let mut last = None;
        lp.for_each_edge(|t| {
            let a = t.apply(Point::new(1.0, 0.0));
            assert!(a.dist(pf.vertices[count]) < 1e-14);
            count += 1;
            last = Some(t.translation());
        });
        assert_eq!(count, 4 * 37 * 37);
        assert!(last.unwrap().dist(Point::ORIGIN) < 1e-14);
        assert!((lp.shoelace_area() - pf.area()).abs() < 1e-12);
    }

    #[test]
    fn distances_match_brute_force() {
        let g = build_generator(1.5, 0.7).unwrap();
        let pf = iterate_prefractal(&g, 2).unwrap();
        let lp = LazyPrefractal::new(&g, 2);
        let rects = [
            Rect::new(0.4, 0.4, 0.45, 0.45),
            Rect::new(0.1, 1.05, 0.12, 1.07),
            Rect::new(-0.3, 0.2, -0.2, 0.3),
            Rect::new(0.49, -0.2, 0.5, -0.1),
        ];
        for r in rects {
            let brute = pf
                .vertices
                .windows(2)
                .map(|w| dist_segment_rect(w[0], w[1], &r))
                .fold(f64::INFINITY, f64::min);
            let lazy = lp.dist_to_rect(&r, 10.0);
            assert!((brute - lazy).abs() < 1e-14, "{brute} vs {lazy}");
        }
    }

    #[test]
    fn winding_matches_even_odd() {
        let g = build_generator(1.5, 0.7).unwrap();
        let pf = iterate_prefractal(&g, 2).unwrap();
        let lp = LazyPrefractal::new(&g, 2);
        let pts = [
            Point::new(0.5, 0.5),
            Point::new(0.5, -0.3),
            Point::new(0.5, -0.02),
            Point::new(1.2, 0.5),
            Point::new(0.01, 0.013),
            Point::new(2.0, 2.0),
        ];
        for p in pts {
            let w = lp.winding(p).unwrap();
            let c = crate::fractal_gen::domain_contains(&pf, p).unwrap();
            assert_eq!(w != 0, c, "{p:?}");
            assert!(w == 0 || w == 1);
        }
    }

    #[test]
    fn segment_raster_unit() {
        let mut out = Vec::new();
        rasterize_segment(Point::new(0.0, 0.0), Point::new(1.0, 0.0), 0.25, &mut out);
        out.sort_unstable();
        out.dedup();
        assert_eq!(out.len(), 5);
    }
}

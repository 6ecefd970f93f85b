//! Spatial indices: a uniform segment grid and a 2-d tree over points.

use crate::geom::{dist_point_segment, dist_segment_rect, Point, Rect};

/// Segments bucketed into a uniform grid (compressed row storage).
#[derive(Clone, Debug)]
pub struct SegmentGrid {
    segs: Vec<(Point, Point)>,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    offsets: Vec<u32>,
    ids: Vec<u32>,
    bbox: Rect,
}

impl SegmentGrid {
    pub fn new(segs: Vec<(Point, Point)>) -> Self {
        let mut pts = Vec::with_capacity(2 * segs.len());
        for (a, b) in &segs {
            pts.push(*a);
            pts.push(*b);
        }
        let bbox = Rect::bounding(&pts).unwrap_or(Rect::new(0.0, 0.0, 1.0, 1.0));
        let side = bbox.width().max(bbox.height()).max(f64::MIN_POSITIVE);
        let target = (segs.len() as f64).sqrt().ceil().clamp(1.0, 2048.0);
        let cell = side / target;
        let nx = ((bbox.width() / cell).floor() as usize + 1).max(1);
        let ny = ((bbox.height() / cell).floor() as usize + 1).max(1);
        let origin = Point::new(bbox.x0, bbox.y0);
        let mut grid = SegmentGrid {
            segs,
            origin,
            cell,
            nx,
            ny,
            offsets: Vec::new(),
            ids: Vec::new(),
            bbox,
        };
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for (k, (a, b)) in grid.segs.iter().enumerate() {
            let r = Rect::new(a.x.min(b.x), a.y.min(b.y), a.x.max(b.x), a.y.max(b.y));
            let (i0, j0, i1, j1) = grid.cell_range(&r);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    let c = grid.cell_rect(i, j);
                    if dist_segment_rect(*a, *b, &c) == 0.0 {
                        pairs.push(((j * nx + i) as u32, k as u32));
                    }
                }
            }
        }
        pairs.sort_unstable();
        let mut offsets = vec![0u32; nx * ny + 1];
        for &(c, _) in &pairs {
            offsets[c as usize + 1] += 1;
        }
        for i in 0..nx * ny {
            offsets[i + 1] += offsets[i];
        }
        grid.ids = pairs.into_iter().map(|(_, k)| k).collect();
        grid.offsets = offsets;
        grid
    }

    pub fn segments(&self) -> &[(Point, Point)] {
        &self.segs
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    fn cell_rect(&self, i: usize, j: usize) -> Rect {
        let x0 = self.origin.x + i as f64 * self.cell;
        let y0 = self.origin.y + j as f64 * self.cell;
        Rect::new(x0, y0, x0 + self.cell, y0 + self.cell)
    }

    fn cell_range(&self, r: &Rect) -> (usize, usize, usize, usize) {
        let f = |v: f64, o: f64, n: usize| (((v - o) / self.cell).floor().max(0.0) as usize).min(n - 1);
        (
            f(r.x0, self.origin.x, self.nx),
            f(r.y0, self.origin.y, self.ny),
            f(r.x1, self.origin.x, self.nx),
            f(r.y1, self.origin.y, self.ny),
        )
    }

    /// Visit the ids of segments stored in cells overlapping `r` (duplicates
    /// possible).
    pub fn for_each_near<F: FnMut(usize)>(&self, r: &Rect, mut f: F) {
        if r.dist_to_rect(&self.bbox) > 0.0 {
            return;
        }
        let (i0, j0, i1, j1) = self.cell_range(r);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let c = j * self.nx + i;
                for &k in &self.ids[self.offsets[c] as usize..self.offsets[c + 1] as usize] {
                    f(k as usize);
                }
            }
        }
    }

    /// Distance from the rectangle to the nearest segment; exact below `cap`.
    pub fn dist_to_rect(&self, r: &Rect, cap: f64) -> f64 {
        let mut best = cap;
        let reach = if cap.is_finite() { cap } else { self.bbox.diag() + r.diag() };
        self.for_each_near(&r.expand(reach), |k| {
            let (a, b) = self.segs[k];
            best = best.min(dist_segment_rect(a, b, r));
        });
        best
    }

    /// Distance from `p` to the nearest segment; exact below `cap`.
    pub fn dist_to_point(&self, p: Point, cap: f64) -> f64 {
        let mut best = cap;
        let reach = if cap.is_finite() { cap } else { self.bbox.diag() + self.bbox.dist_to_point(p) };
        self.for_each_near(&Rect::square(p, reach), |k| {
            let (a, b) = self.segs[k];
            best = best.min(dist_point_segment(p, a, b));
        });
        best
    }
}

/// Static 2-d tree over a point set, supporting nearest-point and
/// nearest-to-box queries with deterministic tie-breaking.
#[derive(Clone, Debug)]
pub struct KdTree {
    pts: Vec<Point>,
    /// Permutation of point ids in tree order.
    order: Vec<u32>,
    nodes: Vec<KdNode>,
}

#[derive(Clone, Copy, Debug)]
struct KdNode {
    lo: u32,
    hi: u32,
    bbox: Rect,
    left: u32,
    right: u32,
}

const LEAF: u32 = u32::MAX;
const LEAF_SIZE: usize = 8;

fn lex_less(a: Point, b: Point) -> bool {
    a.x < b.x || (a.x == b.x && a.y < b.y)
}

impl KdTree {
    pub fn new(pts: Vec<Point>) -> Self {
        let mut order: Vec<u32> = (0..pts.len() as u32).collect();
        let mut nodes = Vec::new();
        if !pts.is_empty() {
            Self::build(&pts, &mut order, 0, pts.len(), &mut nodes);
        }
        KdTree { pts, order, nodes }
    }

    fn build(pts: &[Point], order: &mut [u32], lo: usize, hi: usize, nodes: &mut Vec<KdNode>) -> u32 {
        let slice: Vec<Point> = order[lo..hi].iter().map(|&i| pts[i as usize]).collect();
        let bbox = Rect::bounding(&slice).expect("non-empty");
        let id = nodes.len() as u32;
        nodes.push(KdNode {
            lo: lo as u32,
            hi: hi as u32,
            bbox,
            left: LEAF,
            right: LEAF,
        });
        if hi - lo > LEAF_SIZE {
            let mid = (lo + hi) / 2;
            let by_x = bbox.width() >= bbox.height();
            order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
                let (p, q) = (pts[a as usize], pts[b as usize]);
                if by_x {
                    p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y))
                } else {
                    p.y.total_cmp(&q.y).then(p.x.total_cmp(&q.x))
                }
            });
            let l = Self::build(pts, order, lo, mid, nodes);
            let r = Self::build(pts, order, mid, hi, nodes);
            nodes[id as usize].left = l;
            nodes[id as usize].right = r;
        }
        id
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn point(&self, i: usize) -> Point {
        self.pts[i]
    }

    /// Nearest point to `q`; ties broken by lexicographic site order.
    pub fn nearest(&self, q: Point) -> Option<(usize, f64)> {
        self.nearest_by(|r| r.dist_to_point(q), |p| p.dist(q))
    }

    /// Point of the set nearest to the closed rectangle `r`; ties broken by
    /// lexicographic site order.
    pub fn nearest_to_rect(&self, r: &Rect) -> Option<(usize, f64)> {
        self.nearest_by(|b| b.dist_to_rect(r), |p| r.dist_to_point(p))
    }

    /// Distance from the rectangle to the point set.
    pub fn dist_to_rect(&self, r: &Rect) -> f64 {
        self.nearest_to_rect(r).map(|x| x.1).unwrap_or(f64::INFINITY)
    }

    fn nearest_by<B, P>(&self, bound: B, dist: P) -> Option<(usize, f64)>
    where
        B: Fn(&Rect) -> f64,
        P: Fn(Point) -> f64,
    {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let n = self.nodes[id as usize];
            let lb = bound(&n.bbox);
            if let Some((_, bd)) = best {
                if lb > bd {
                    continue;
                }
            }
            if n.left == LEAF {
                for &i in &self.order[n.lo as usize..n.hi as usize] {
                    let p = self.pts[i as usize];
                    let d = dist(p);
                    match best {
                        None => best = Some((i as usize, d)),
                        Some((bi, bd)) => {
                            if d < bd || (d == bd && lex_less(p, self.pts[bi])) {
                                best = Some((i as usize, d));
                            }
                        }
                    }
                }
            } else {
                let (l, r) = (self.nodes[n.left as usize], self.nodes[n.right as usize]);
                // visit the closer child first
                if bound(&l.bbox) <= bound(&r.bbox) {
                    stack.push(n.right);
                    stack.push(n.left);
                } else {
                    stack.push(n.left);
                    stack.push(n.right);
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kdtree_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point> = (0..500).map(|_| Point::new(rng.gen(), rng.gen())).collect();
        let tree = KdTree::new(pts.clone());
        for _ in 0..200 {
            let q = Point::new(rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5));
            let (i, d) = tree.nearest(q).unwrap();
            let bd = pts.iter().map(|p| p.dist(q)).fold(f64::INFINITY, f64::min);
            assert_eq!(d, bd);
            assert_eq!(pts[i].dist(q), bd);
            let r = Rect::square(q, 0.05);
            let bd = pts.iter().map(|p| r.dist_to_point(*p)).fold(f64::INFINITY, f64::min);
            assert_eq!(tree.dist_to_rect(&r), bd);
        }
    }

    #[test]
    fn ties_prefer_lexicographic_minimum() {
        let pts = vec![Point::new(1.0, 0.0), Point::new(-1.0, 0.0), Point::new(0.0, 1.0)];
        let tree = KdTree::new(pts);
        let (i, _) = tree.nearest(Point::ORIGIN).unwrap();
        assert_eq!(i, 1);
    }

    #[test]
    fn segment_grid_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let segs: Vec<(Point, Point)> = (0..300)
            .map(|_| {
                let a = Point::new(rng.gen(), rng.gen());
                (a, a + Point::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)))
            })
            .collect();
        let g = SegmentGrid::new(segs.clone());
        for _ in 0..100 {
            let q = Point::new(rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5));
            let brute = segs.iter().map(|(a, b)| dist_point_segment(q, *a, *b)).fold(f64::INFINITY, f64::min);
            assert_eq!(g.dist_to_point(q, f64::INFINITY), brute);
            let capped = g.dist_to_point(q, 0.01);
            if brute < 0.01 {
                assert_eq!(capped, brute);
            } else {
                assert!(capped >= 0.01);
            }
        }
    }
}

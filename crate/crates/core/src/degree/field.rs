use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BoundaryMap, WindingIndex};
use crate::error::{Error, Result};
use crate::geom::{segment_intersects_rect, Point, Rect};

/// Knobs for [`degree_field`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FieldOptions {
    /// Levels of quadtree refinement inside undefined cells.
    pub refine_depth: u32,
    /// Fraction of defined cells re-evaluated directly as an audit of the
    /// flood fill.
    pub audit_fraction: f64,
    pub seed: u64,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            refine_depth: 3,
            audit_fraction: 0.01,
            seed: 0,
        }
    }
}

/// Sub-cell information for a cell that meets the image curve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartialCell {
    /// `(degree, area)` pairs for sub-cells clear of the curve.
    pub known: Vec<(i64, f64)>,
    /// Area of sub-cells still touching the curve at the finest level.
    pub unknown_area: f64,
}

/// Integer degree values on a uniform grid, `None` marking cells that come
/// within `eps_excl` of the image curve.
#[derive(Clone, Debug)]
pub struct DegreeField {
    rect: Rect,
    h: f64,
    nx: usize,
    ny: usize,
    eps_excl: f64,
    values: Vec<Option<i64>>,
    partial: Vec<(usize, PartialCell)>,
    audited: usize,
    image_bbox: Rect,
}

/// Degree field of a boundary map over `rect` at cell size `h`.
pub fn degree_field(bm: &BoundaryMap, rect: Rect, h: f64, eps_excl: f64, opts: &FieldOptions) -> Result<DegreeField> {
    let idx = bm.winding_index()?;
    degree_field_from_index(&idx, rect, h, eps_excl, opts)
}

/// Degree field of an indexed image curve.
pub fn degree_field_from_index(
    idx: &WindingIndex,
    rect: Rect,
    h: f64,
    eps_excl: f64,
    opts: &FieldOptions,
) -> Result<DegreeField> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::param("h", "grid size must be positive"));
    }
    if !(eps_excl >= 0.0) {
        return Err(Error::param("eps_excl", "must be non-negative"));
    }
    let hull = idx.bbox();
    let padded = hull.expand(h);
    if !(rect.x0 <= padded.x0 && rect.y0 <= padded.y0 && rect.x1 >= padded.x1 && rect.y1 >= padded.y1) {
        return Err(Error::Precondition(format!(
            "target rectangle {rect:?} does not contain the image hull padded by h"
        )));
    }
    let nx = (rect.width() / h).ceil() as usize;
    let ny = (rect.height() / h).ceil() as usize;
    let cells = nx.checked_mul(ny).ok_or(Error::Overflow("degree field size"))?;
    if cells > 400_000_000 {
        return Err(Error::MemoryGuard {
            requested: cells as u128,
            limit: 400_000_000,
        });
    }
    let rect = Rect::new(rect.x0, rect.y0, rect.x0 + nx as f64 * h, rect.y0 + ny as f64 * h);
    let cell_rect = |c: usize| {
        let (i, j) = (c % nx, c / nx);
        let x0 = rect.x0 + i as f64 * h;
        let y0 = rect.y0 + j as f64 * h;
        Rect::new(x0, y0, x0 + h, y0 + h)
    };

    // cells met by the curve, with the segments meeting them
    let segs: Vec<(Point, Point, i64)> = idx.segments().collect();
    let mut hits: Vec<(u32, u32)> = segs
        .par_iter()
        .enumerate()
        .flat_map_iter(|(k, &(a, b, _))| {
            let r = Rect::new(a.x.min(b.x), a.y.min(b.y), a.x.max(b.x), a.y.max(b.y)).expand(eps_excl);
            let i0 = (((r.x0 - rect.x0) / h).floor().max(0.0) as usize).min(nx - 1);
            let i1 = (((r.x1 - rect.x0) / h).floor().max(0.0) as usize).min(nx - 1);
            let j0 = (((r.y0 - rect.y0) / h).floor().max(0.0) as usize).min(ny - 1);
            let j1 = (((r.y1 - rect.y0) / h).floor().max(0.0) as usize).min(ny - 1);
            let mut out = Vec::new();
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = j * nx + i;
                    if segment_intersects_rect(a, b, &cell_rect(c).expand(eps_excl)) {
                        out.push((c as u32, k as u32));
                    }
                }
            }
            out.into_iter()
        })
        .collect();
    hits.par_sort_unstable();
    hits.dedup();

    let mut undefined = vec![false; cells];
    for &(c, _) in &hits {
        undefined[c as usize] = true;
    }

    // flood fill over defined cells; one winding evaluation per component
    let mut values: Vec<Option<i64>> = vec![None; cells];
    let mut comp_of = vec![u32::MAX; cells];
    let mut stack = Vec::new();
    let mut comp_count = 0u32;
    for start in 0..cells {
        if undefined[start] || comp_of[start] != u32::MAX {
            continue;
        }
        let v = idx.winding(cell_rect(start).center())?;
        comp_of[start] = comp_count;
        values[start] = Some(v);
        stack.push(start);
        while let Some(c) = stack.pop() {
            let (i, j) = (c % nx, c / nx);
            let mut visit = |n: usize| {
                if !undefined[n] && comp_of[n] == u32::MAX {
                    comp_of[n] = comp_count;
                    values[n] = Some(v);
                    stack.push(n);
                }
            };
            if i > 0 {
                visit(c - 1);
            }
            if i + 1 < nx {
                visit(c + 1);
            }
            if j > 0 {
                visit(c - nx);
            }
            if j + 1 < ny {
                visit(c + nx);
            }
        }
        comp_count += 1;
    }

    // audit the flood fill against direct evaluation
    let defined: Vec<usize> = (0..cells).filter(|&c| !undefined[c]).collect();
    let n_audit = ((defined.len() as f64 * opts.audit_fraction).ceil() as usize).min(defined.len());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let picks: Vec<usize> = sample(&mut rng, defined.len(), n_audit).into_iter().map(|i| defined[i]).collect();
    let mismatches: Vec<usize> = picks
        .par_iter()
        .filter_map(|&c| match idx.winding(cell_rect(c).center()) {
            Ok(v) if Some(v) == values[c] => None,
            _ => Some(c),
        })
        .collect();
    if let Some(&c) = mismatches.first() {
        return Err(Error::Numerical(format!(
            "flood-fill audit mismatch at cell {c} ({} of {} audited)",
            mismatches.len(),
            n_audit
        )));
    }

    // refine cells meeting the curve
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &(c, k) in &hits {
        match groups.last_mut() {
            Some((gc, ks)) if *gc == c as usize => ks.push(k as usize),
            _ => groups.push((c as usize, vec![k as usize])),
        }
    }
    let partial: Vec<(usize, PartialCell)> = groups
        .par_iter()
        .map(|(c, ks)| {
            let mut pc = PartialCell::default();
            let local: Vec<(Point, Point)> = ks.iter().map(|&k| (segs[k].0, segs[k].1)).collect();
            refine(idx, &local, cell_rect(*c), opts.refine_depth, &mut pc)?;
            Ok((*c, pc))
        })
        .collect::<Result<_>>()?;

    Ok(DegreeField {
        rect,
        h,
        nx,
        ny,
        eps_excl,
        values,
        partial,
        audited: n_audit,
        image_bbox: hull,
    })
}

fn refine(idx: &WindingIndex, segs: &[(Point, Point)], r: Rect, depth: u32, out: &mut PartialCell) -> Result<()> {
    let near: Vec<(Point, Point)> = segs
        .iter()
        .copied()
        .filter(|&(a, b)| segment_intersects_rect(a, b, &r))
        .collect();
    if near.is_empty() {
        match idx.winding(r.center()) {
            Ok(v) => {
                match out.known.iter_mut().find(|(k, _)| *k == v) {
                    Some(e) => e.1 += r.area(),
                    None => out.known.push((v, r.area())),
                }
                return Ok(());
            }
            Err(Error::OnBoundary { .. }) => {
                out.unknown_area += r.area();
                return Ok(());
            }
            Err(e) => return Err(e),
        }
    }
    if depth == 0 {
        out.unknown_area += r.area();
        return Ok(());
    }
    let c = r.center();
    for q in [
        Rect::new(r.x0, r.y0, c.x, c.y),
        Rect::new(c.x, r.y0, r.x1, c.y),
        Rect::new(r.x0, c.y, c.x, r.y1),
        Rect::new(c.x, c.y, r.x1, r.y1),
    ] {
        refine(idx, &near, q, depth - 1, out)?;
    }
    Ok(())
}

impl DegreeField {
    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn eps_excl(&self) -> f64 {
        self.eps_excl
    }

    pub fn audited_cells(&self) -> usize {
        self.audited
    }

    pub fn image_bbox(&self) -> Rect {
        self.image_bbox
    }

    pub fn value(&self, i: usize, j: usize) -> Option<i64> {
        self.values[j * self.nx + i]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.rect.x0 + (i as f64 + 0.5) * self.h,
            self.rect.y0 + (j as f64 + 0.5) * self.h,
        )
    }

    /// Value of the cell containing `p` (half-open cells); `None` outside the
    /// grid or in an undefined cell.
    pub fn value_at(&self, p: Point) -> Option<i64> {
        let i = ((p.x - self.rect.x0) / self.h).floor();
        let j = ((p.y - self.rect.y0) / self.h).floor();
        if i < 0.0 || j < 0.0 || i >= self.nx as f64 || j >= self.ny as f64 {
            return None;
        }
        self.value(i as usize, j as usize)
    }

    pub fn undefined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Refinement data of cells meeting the curve, keyed by linear cell index
    /// `j * nx + i`.
    pub fn partial_cells(&self) -> &[(usize, PartialCell)] {
        &self.partial
    }

    /// Row-major iterator over `(i, j, value)`.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, Option<i64>)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(c, v)| (c % self.nx, c / self.nx, *v))
    }

    fn max_neighbour(&self, c: usize, pc: &PartialCell) -> i64 {
        let mut best: Option<i64> = pc.known.iter().map(|(v, _)| v.abs()).max();
        let (i, j) = ((c % self.nx) as i64, (c / self.nx) as i64);
        for radius in 1..=3i64 {
            for dj in -radius..=radius {
                for di in -radius..=radius {
                    let (a, b) = (i + di, j + dj);
                    if a < 0 || b < 0 || a >= self.nx as i64 || b >= self.ny as i64 {
                        continue;
                    }
                    if let Some(v) = self.values[b as usize * self.nx + a as usize] {
                        best = Some(best.map_or(v.abs(), |x: i64| x.max(v.abs())));
                    }
                }
            }
            if best.is_some() {
                break;
            }
        }
        best.unwrap_or_else(|| self.values.iter().flatten().map(|v| v.abs()).max().unwrap_or(0))
    }
}

/// `L^p` norm of a degree field with a bracketing interval for the cells
/// meeting the curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpNorm {
    pub p: f64,
    /// Norm over defined cells only.
    pub defined: f64,
    /// Lower end of the bracket: defined cells plus refined sub-cells of known
    /// degree.
    pub lo: f64,
    /// Upper end: remaining unknown area counted at the largest neighbouring
    /// value.
    pub hi: f64,
    pub undefined_area: f64,
    /// Undefined area relative to the image hull area.
    pub undefined_fraction: f64,
    pub warning: bool,
}

impl LpNorm {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn relative_width(&self) -> f64 {
        if self.hi == 0.0 {
            0.0
        } else {
            (self.hi - self.lo) / self.hi
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

pub fn lp_norm(field: &DegreeField, p: f64) -> Result<LpNorm> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::param("p", "p must be a finite real >= 1"));
    }
    let cell = field.h * field.h;
    let mut defined = 0.0;
    for v in field.values.iter().flatten() {
        if *v != 0 {
            defined += (v.abs() as f64).powf(p) * cell;
        }
    }
    let mut lo = defined;
    let mut extra = 0.0;
    let mut undefined_area = 0.0;
    for (c, pc) in &field.partial {
        for &(v, a) in &pc.known {
            lo += (v.abs() as f64).powf(p) * a;
        }
        if pc.unknown_area > 0.0 {
            let m = field.max_neighbour(*c, pc) as f64;
            extra += m.powf(p) * pc.unknown_area;
        }
        undefined_area += cell;
    }
    let hull_area = field.image_bbox.area().max(cell);
    let fraction = undefined_area / hull_area;
    Ok(LpNorm {
        p,
        defined: defined.powf(1.0 / p),
        lo: lo.powf(1.0 / p),
        hi: (lo + extra).powf(1.0 / p),
        undefined_area,
        undefined_fraction: fraction,
        warning: fraction > 0.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::BoundaryMap;

    #[test]
    fn identity_square_field() {
        let bm = BoundaryMap::unit_square();
        let f = degree_field(&bm, Rect::new(-1.0, -1.0, 2.0, 2.0), 0.1, 1e-9, &FieldOptions::default()).unwrap();
        assert_eq!(f.value_at(Point::new(0.55, 0.55)), Some(1));
        assert_eq!(f.value_at(Point::new(1.55, 0.55)), Some(0));
        assert_eq!(f.value_at(Point::new(-0.95, -0.95)), Some(0));
        let n = lp_norm(&f, 1.0).unwrap();
        assert!(n.lo <= 1.0 + 1e-12 && n.hi >= 1.0 - 1e-12, "{n:?}");
        // the boundary of the unit square lies on grid lines: its cells are
        // refined exactly
        assert!((n.lo - 1.0).abs() < 1e-9 || n.hi - n.lo < 0.05);
    }

    #[test]
    fn doubled_map_field() {
        let bm = BoundaryMap::unit_square().scaled(2.0);
        let f = degree_field(&bm, Rect::new(-1.0, -1.0, 3.0, 3.0), 0.125, 1e-9, &FieldOptions::default()).unwrap();
        for (i, j, v) in f.cells() {
            let c = f.cell_center(i, j);
            if let Some(v) = v {
                let inside = c.x > 0.0 && c.x < 2.0 && c.y > 0.0 && c.y < 2.0;
                assert_eq!(v, inside as i64);
            }
        }
    }

    #[test]
    fn disc_norm_is_bracketed() {
        let bm = BoundaryMap::regular_polygon(512, 0.5, Point::ORIGIN);
        let f = degree_field(&bm, Rect::new(-1.0, -1.0, 1.0, 1.0), 0.5 / 64.0, 0.0, &FieldOptions::default()).unwrap();
        for p in [1.0, 2.0] {
            let n = lp_norm(&f, p).unwrap();
            let exact = (std::f64::consts::PI * 0.25).powf(1.0 / p);
            assert!(n.contains(exact), "{n:?} {exact}");
            assert!(n.relative_width() < 0.02);
        }
    }

    #[test]
    fn p_below_one_rejected() {
        let bm = BoundaryMap::unit_square();
        let f = degree_field(&bm, Rect::new(-1.0, -1.0, 2.0, 2.0), 0.25, 0.0, &FieldOptions::default()).unwrap();
        assert!(lp_norm(&f, 0.5).is_err());
    }
}

//! Hölder seminorms of sampled functions, tent-kernel mollified families and
//! the Whitney extension operator for functions given on a finite set.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::Kernel;
use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::spatial::KdTree;

/// Largest site count for which [`holder_seminorm`] scans every pair.
pub const EXACT_PAIR_LIMIT: usize = 20_000;
/// Pair budget of the banded estimator used beyond [`EXACT_PAIR_LIMIT`].
pub const SUBSAMPLE_PAIR_BUDGET: u64 = 1_000_000;
/// Finest dyadic level of the extension's cube search.
pub const EXTENSION_K_MAX: i32 = 20;

/// Nearest-neighbour distance statistics of a site set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Real or planar values attached to distinct sites.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampledFunction {
    sites: Vec<Point>,
    /// Scalar functions keep their value in `x` and zero in `y`.
    values: Vec<Point>,
    scalar: bool,
    spacing: SpacingStats,
}

impl SampledFunction {
    pub fn scalar(sites: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        let values = values.into_iter().map(|v| Point::new(v, 0.0)).collect();
        Self::build(sites, values, true)
    }

    pub fn planar(sites: Vec<Point>, values: Vec<Point>) -> Result<Self> {
        Self::build(sites, values, false)
    }

    pub fn from_scalar_fn(sites: Vec<Point>, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = sites.iter().map(|&p| f(p)).collect();
        Self::scalar(sites, values)
    }

    fn build(sites: Vec<Point>, values: Vec<Point>, scalar: bool) -> Result<Self> {
        if sites.len() != values.len() {
            return Err(Error::param("values", "one value per site is required"));
        }
        if sites.is_empty() {
            return Err(Error::InsufficientData("no sample sites".into()));
        }
        if sites.iter().chain(values.iter()).any(|p| !p.is_finite()) {
            return Err(Error::param("sites", "non-finite coordinate or value"));
        }
        let mut seen = HashSet::with_capacity(sites.len());
        for p in &sites {
            if !seen.insert((p.x.to_bits(), p.y.to_bits())) {
                return Err(Error::param("sites", format!("duplicate site ({}, {})", p.x, p.y)));
            }
        }
        let spacing = spacing_stats(&sites);
        Ok(SampledFunction {
            sites,
            values,
            scalar,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn is_scalar(&self) -> bool {
        self.scalar
    }

    pub fn spacing(&self) -> SpacingStats {
        self.spacing
    }

    /// `max |f|` over the sites.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Uniform hash of points into square cells.
struct CellHash {
    cell: f64,
    map: HashMap<(i64, i64), Vec<u32>>,
}

impl CellHash {
    fn new(pts: &[Point], cell: f64) -> Self {
        let mut map: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            map.entry(Self::key_of(*p, cell)).or_default().push(i as u32);
        }
        CellHash { cell, map }
    }

    fn key_of(p: Point, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    fn key(&self, p: Point) -> (i64, i64) {
        Self::key_of(p, self.cell)
    }
}

fn spacing_stats(sites: &[Point]) -> SpacingStats {
    let n = sites.len();
    if n < 2 {
        return SpacingStats {
            min: 0.0,
            max: 0.0,
            mean: 0.0,
        };
    }
    let bb = Rect::bounding(sites).expect("non-empty");
    let extent = bb.width().max(bb.height()).max(f64::MIN_POSITIVE);
    let cell = extent / (n as f64).sqrt().max(1.0);
    let hash = CellHash::new(sites, cell);
    let nn: Vec<f64> = sites
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let (kx, ky) = hash.key(p);
            let mut best = f64::INFINITY;
            let mut ring = 0i64;
            loop {
                for dx in -ring..=ring {
                    for dy in -ring..=ring {
                        if dx.abs() != ring && dy.abs() != ring {
                            continue;
                        }
                        if let Some(ids) = hash.map.get(&(kx + dx, ky + dy)) {
                            for &j in ids {
                                if j as usize != i {
                                    best = best.min(p.dist(sites[j as usize]));
                                }
                            }
                        }
                    }
                }
                // Every point outside the scanned rings is at least `ring * cell` away.
                if best <= ring as f64 * cell {
                    break;
                }
                ring += 1;
            }
            best
        })
        .collect();
    SpacingStats {
        min: nn.iter().copied().fold(f64::INFINITY, f64::min),
        max: nn.iter().copied().fold(0.0, f64::max),
        mean: nn.iter().sum::<f64>() / n as f64,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeminormMode {
    /// Every pair scanned: the value is the exact maximum over the sample.
    Exact,
    /// Dyadic distance bands sampled under a pair budget: a lower bound only.
    Subsampled,
}

/// Largest quotient seen among pairs whose distance falls in `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandMax {
    pub lo: f64,
    pub hi: f64,
    pub max: f64,
    pub pairs: u64,
}

/// Lower bound for `[f]_alpha` from sampled pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub alpha: f64,
    pub seminorm: f64,
    pub pairs: u64,
    pub mode: SeminormMode,
    /// Indices of a maximizing pair.
    pub argmax: Option<(usize, usize)>,
    pub bands: Vec<BandMax>,
}

impl HolderEstimate {
    pub fn is_lower_bound_only(&self) -> bool {
        self.mode == SeminormMode::Subsampled
    }
}

fn band_index(d: f64, base: f64) -> usize {
    ((d / base).log2().floor().max(0.0)) as usize
}

struct BandAcc {
    base: f64,
    max: Vec<f64>,
    pairs: Vec<u64>,
}

impl BandAcc {
    fn new(base: f64, diam: f64) -> Self {
        let n = band_index(diam, base) + 1;
        BandAcc {
            base,
            max: vec![0.0; n],
            pairs: vec![0; n],
        }
    }

    fn record(&mut self, d: f64, q: f64) {
        let b = band_index(d, self.base).min(self.max.len() - 1);
        self.pairs[b] += 1;
        if q > self.max[b] {
            self.max[b] = q;
        }
    }

    fn merge(mut self, o: BandAcc) -> BandAcc {
        for b in 0..self.max.len() {
            self.max[b] = self.max[b].max(o.max[b]);
            self.pairs[b] += o.pairs[b];
        }
        self
    }

    fn finish(self) -> Vec<BandMax> {
        (0..self.max.len())
            .filter(|&b| self.pairs[b] > 0)
            .map(|b| BandMax {
                lo: self.base * 2f64.powi(b as i32),
                hi: self.base * 2f64.powi(b as i32 + 1),
                max: self.max[b],
                pairs: self.pairs[b],
            })
            .collect()
    }
}

/// `[f]_alpha = sup |f(x) - f(y)| / |x - y|^alpha` over sampled pairs.
///
/// Up to [`EXACT_PAIR_LIMIT`] sites every pair is examined. Larger samples
/// are estimated from dyadic distance bands under [`SUBSAMPLE_PAIR_BUDGET`]
/// pairs and flagged as a lower bound.
pub fn holder_seminorm(f: &SampledFunction, alpha: f64) -> Result<HolderEstimate> {
    if f.len() > EXACT_PAIR_LIMIT {
        holder_seminorm_subsampled(f, alpha, SUBSAMPLE_PAIR_BUDGET, 0)
    } else {
        holder_seminorm_exact(f, alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", format!("{alpha} is outside (0, 1]")));
    }
    Ok(())
}

fn band_base(f: &SampledFunction) -> (f64, f64) {
    let bb = Rect::bounding(&f.sites).expect("non-empty");
    let diam = bb.diag().max(f64::MIN_POSITIVE);
    let base = if f.spacing.min > 0.0 { f.spacing.min } else { diam };
    (base, diam)
}

/// Exact maximum over all pairs, with a sweep in `x` that skips pairs whose
/// horizontal gap alone already rules them out.
pub fn holder_seminorm_exact(f: &SampledFunction, alpha: f64) -> Result<HolderEstimate> {
    check_alpha(alpha)?;
    if f.len() < 2 {
        return Err(Error::InsufficientData("at least two sites are needed".into()));
    }
    let (base, diam) = band_base(f);
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f.sites[a].x.total_cmp(&f.sites[b].x).then(f.sites[a].y.total_cmp(&f.sites[b].y)));
    let vb = Rect::bounding(&f.values).expect("non-empty");
    let osc = vb.diag();
    // Seed the running maximum with consecutive pairs so the sweep prunes early.
    let mut seed = 0.0f64;
    let mut seed_arg = (0usize, 0usize);
    let mut seed_acc = BandAcc::new(base, diam);
    for w in order.windows(2) {
        let d = f.sites[w[0]].dist(f.sites[w[1]]);
        let q = f.values[w[0]].dist(f.values[w[1]]) / d.powf(alpha);
        seed_acc.record(d, q);
        if q > seed {
            seed = q;
            seed_arg = (w[0].min(w[1]), w[0].max(w[1]));
        }
    }
    let n = order.len();
    let results: Vec<(f64, (usize, usize), BandAcc, u64)> = (0..n)
        .into_par_iter()
        .fold(
            || (0.0f64, (0usize, 0usize), BandAcc::new(base, diam), 0u64),
            |(mut best, mut arg, mut acc, mut count), a| {
                let i = order[a];
                let (pi, vi) = (f.sites[i], f.values[i]);
                let running = best.max(seed);
                for &j in &order[a + 1..] {
                    let pj = f.sites[j];
                    let gap = pj.x - pi.x;
                    if running > 0.0 && gap > 0.0 && gap.powf(alpha) * running >= osc {
                        break;
                    }
                    let d = pi.dist(pj);
                    let q = vi.dist(f.values[j]) / d.powf(alpha);
                    acc.record(d, q);
                    count += 1;
                    if q > best {
                        best = q;
                        arg = (i.min(j), i.max(j));
                    }
                }
                (best, arg, acc, count)
            },
        )
        .collect();
    // The pruning test may skip the pairs that attain the seed itself.
    let mut best = seed;
    let mut arg = (seed > 0.0).then_some(seed_arg);
    let mut acc = seed_acc;
    let mut pairs = 0;
    for (b, a, ac, c) in results {
        if b > best || (b == best && arg.map_or(true, |x| a < x) && b > 0.0) {
            best = b;
            arg = Some(a);
        }
        acc = acc.merge(ac);
        pairs += c;
    }
    if arg.is_none() {
        arg = Some((order[0].min(order[1]), order[0].max(order[1])));
    }
    Ok(HolderEstimate {
        alpha,
        seminorm: best,
        pairs,
        mode: SeminormMode::Exact,
        argmax: arg,
        bands: acc.finish(),
    })
}

/// Banded lower bound: for each dyadic distance band, anchors are visited in
/// a seeded random order and paired with every site in the band found in the
/// surrounding hash cells until the band's share of the budget is spent.
pub fn holder_seminorm_subsampled(f: &SampledFunction, alpha: f64, budget: u64, seed: u64) -> Result<HolderEstimate> {
    check_alpha(alpha)?;
    if f.len() < 2 {
        return Err(Error::InsufficientData("at least two sites are needed".into()));
    }
    let (base, diam) = band_base(f);
    let nb = band_index(diam, base) + 1;
    let per_band = (budget / nb as u64).max(1);
    let bands: Vec<(f64, (usize, usize), BandMax)> = (0..nb)
        .into_par_iter()
        .map(|b| {
            let lo = base * 2f64.powi(b as i32);
            let hi = 2.0 * lo;
            let hash = CellHash::new(&f.sites, hi);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut anchors: Vec<u32> = (0..f.len() as u32).collect();
            anchors.shuffle(&mut rng);
            // Candidates drawn per anchor and cell; dense cells are sampled.
            let cell_cap = ((per_band / f.len() as u64) as usize).max(8);
            let mut best = 0.0f64;
            let mut arg = (0, 0);
            let mut count = 0u64;
            let mut examined = 0u64;
            'outer: for &i in &anchors {
                let i = i as usize;
                let (pi, vi) = (f.sites[i], f.values[i]);
                let (kx, ky) = hash.key(pi);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let Some(ids) = hash.map.get(&(kx + dx, ky + dy)) else { continue };
                        let take = ids.len().min(cell_cap);
                        for t in 0..take {
                            let j = if ids.len() > cell_cap { ids[rng.gen_range(0..ids.len())] } else { ids[t] } as usize;
                            examined += 1;
                            if j == i {
                                continue;
                            }
                            let d = pi.dist(f.sites[j]);
                            let in_band = if b + 1 == nb { d >= lo } else { d >= lo && d < hi };
                            if in_band || (b == 0 && d < lo) {
                                let q = vi.dist(f.values[j]) / d.powf(alpha);
                                count += 1;
                                if q > best {
                                    best = q;
                                    arg = (i.min(j), i.max(j));
                                }
                            }
                            if count >= per_band || examined >= 8 * per_band {
                                break 'outer;
                            }
                        }
                    }
                }
            }
            (best, arg, BandMax { lo, hi, max: best, pairs: count })
        })
        .collect();
    let mut best = 0.0;
    let mut arg = None;
    let mut pairs = 0;
    for (q, a, bm) in &bands {
        pairs += bm.pairs;
        if *q > best {
            best = *q;
            arg = Some(*a);
        }
    }
    Ok(HolderEstimate {
        alpha,
        seminorm: best,
        pairs,
        mode: SeminormMode::Subsampled,
        argmax: arg,
        bands: bands.into_iter().map(|x| x.2).filter(|b| b.pairs > 0).collect(),
    })
}

/// `sup |f| + [f]_alpha`.
pub fn holder_norm(f: &SampledFunction, alpha: f64) -> Result<f64> {
    Ok(f.sup_norm() + holder_seminorm(f, alpha)?.seminorm)
}

/// Function sampled on a regular grid (`ny == 1` for functions of one variable).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSamples {
    pub origin: Point,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `values[j * nx + i]` at `origin + h (i, j)`.
    pub values: Vec<f64>,
}

impl GridSamples {
    pub fn from_fn_1d(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 || !(b > a) {
            return Err(Error::param("grid", "need b > a and at least two samples"));
        }
        let h = (b - a) / (n - 1) as f64;
        Ok(GridSamples {
            origin: Point::new(a, 0.0),
            h,
            nx: n,
            ny: 1,
            values: (0..n).map(|i| f(a + h * i as f64)).collect(),
        })
    }

    pub fn from_fn_2d(origin: Point, h: f64, nx: usize, ny: usize, f: impl Fn(Point) -> f64) -> Result<Self> {
        if nx < 2 || ny < 2 || !(h > 0.0) {
            return Err(Error::param("grid", "need h > 0 and at least 2 x 2 samples"));
        }
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(origin + Point::new(h * i as f64, h * j as f64)));
            }
        }
        Ok(GridSamples { origin, h, nx, ny, values })
    }

    pub fn site(&self, i: usize, j: usize) -> Point {
        self.origin + Point::new(self.h * i as f64, self.h * j as f64)
    }

    pub fn to_sampled(&self) -> Result<SampledFunction> {
        let mut sites = Vec::with_capacity(self.values.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                sites.push(self.site(i, j));
            }
        }
        SampledFunction::scalar(sites, self.values.clone())
    }

    fn dims(&self) -> usize {
        if self.ny == 1 {
            1
        } else {
            2
        }
    }
}

/// Normalized tent weights at integer offsets `-w..=w` for scale `t`.
fn tent_weights(t: f64, h: f64) -> Vec<f64> {
    let w = (t / h).ceil() as i64;
    (-w..=w).map(|s| (1.0 - (s as f64 * h).abs() / t).max(0.0)).collect()
}

/// Separable convolution along one axis; weights renormalized where the
/// kernel leaves the grid.
fn convolve_axis(values: &[f64], nx: usize, ny: usize, along_x: bool, weights: &[f64]) -> Vec<f64> {
    let w = (weights.len() / 2) as i64;
    let (len, lines) = if along_x { (nx, ny) } else { (ny, nx) };
    let idx = |line: usize, k: usize| if along_x { line * nx + k } else { k * nx + line };
    let mut out = vec![0.0; values.len()];
    let rows: Vec<Vec<(usize, f64)>> = (0..lines)
        .into_par_iter()
        .map(|line| {
            (0..len)
                .map(|k| {
                    let (mut s, mut z) = (0.0, 0.0);
                    for (o, &wt) in weights.iter().enumerate() {
                        let kk = k as i64 + o as i64 - w;
                        if kk >= 0 && (kk as usize) < len && wt > 0.0 {
                            s += wt * values[idx(line, kk as usize)];
                            z += wt;
                        }
                    }
                    (idx(line, k), s / z)
                })
                .collect()
        })
        .collect();
    for row in rows {
        for (i, v) in row {
            out[i] = v;
        }
    }
    out
}

fn mollify_grid(f: &GridSamples, t: f64) -> Vec<f64> {
    let wts = tent_weights(t, f.h);
    let v = convolve_axis(&f.values, f.nx, f.ny, true, &wts);
    if f.dims() == 2 {
        convolve_axis(&v, f.nx, f.ny, false, &wts)
    } else {
        v
    }
}

/// One scale of a mollified family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifiedRow {
    pub t: f64,
    /// `max |v(t) - f|` over interior cells.
    pub sup_diff: f64,
    /// `t^{1-alpha} max |D v(t)|` from centred difference quotients.
    pub c1_bound: f64,
    /// `t^{1-alpha} max |v'(t)|` from a centred quotient in `t`.
    pub dt_bound: f64,
    /// Sites whose kernel support lies inside the grid.
    pub interior: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifiedFamily {
    pub alpha: f64,
    pub kernel: Kernel,
    /// `sup |f| + [f]_alpha` of the base samples.
    pub base_norm: f64,
    pub rows: Vec<MollifiedRow>,
    /// Smoothed samples `v(t)` per accepted scale, aligned with `rows`.
    pub smoothed: Vec<Vec<f64>>,
    /// Scales refused because they are below twice the sample spacing or
    /// leave no interior sites.
    pub rejected: Vec<f64>,
}

impl MollifiedFamily {
    /// Smallest `C` with every row bounded by `C ||f||`, counting
    /// `sup_diff / t^alpha` for the approximation property.
    pub fn constant(&self) -> f64 {
        if self.base_norm == 0.0 {
            return 0.0;
        }
        self.rows
            .iter()
            .map(|r| r.c1_bound.max(r.dt_bound).max(r.sup_diff / r.t.powf(self.alpha)))
            .fold(0.0, f64::max)
            / self.base_norm
    }
}

/// Tent-kernel smoothings `v(t)` of grid samples at the given scales.
///
/// Statistics are taken over interior sites (kernel support fully inside the
/// grid, plus one cell for difference quotients). The `t`-derivative uses the
/// quotient `(v(t(1+delta)) - v(t(1-delta))) / (2 t delta)` with `delta = 0.05`.
pub fn mollified_family(f: &GridSamples, alpha: f64, scales: &[f64]) -> Result<MollifiedFamily> {
    check_alpha(alpha)?;
    if f.values.len() != f.nx * f.ny {
        return Err(Error::param("grid", "value count does not match dimensions"));
    }
    let seminorm = if f.values.len() <= EXACT_PAIR_LIMIT {
        holder_seminorm_exact(&f.to_sampled()?, alpha)?.seminorm
    } else {
        holder_seminorm(&f.to_sampled()?, alpha)?.seminorm
    };
    let sup = f.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut fam = MollifiedFamily {
        alpha,
        kernel: Kernel::Tent,
        base_norm: sup + seminorm,
        rows: Vec::new(),
        smoothed: Vec::new(),
        rejected: Vec::new(),
    };
    const DELTA: f64 = 0.05;
    for &t in scales {
        if !(t >= 2.0 * f.h) || !t.is_finite() {
            fam.rejected.push(t);
            continue;
        }
        let reach = ((t * (1.0 + DELTA)) / f.h).ceil() as usize + 1;
        let interior_x = |i: usize| i >= reach && i + reach < f.nx;
        let interior_y = |j: usize| f.dims() == 1 || (j >= reach && j + reach < f.ny);
        let v = mollify_grid(f, t);
        let vp = mollify_grid(f, t * (1.0 + DELTA));
        let vm = mollify_grid(f, t * (1.0 - DELTA));
        let scale = t.powf(1.0 - alpha);
        let (mut sup_diff, mut dmax, mut tmax, mut interior) = (0.0f64, 0.0f64, 0.0f64, 0usize);
        for j in 0..f.ny {
            if !interior_y(j) {
                continue;
            }
            for i in 0..f.nx {
                if !interior_x(i) {
                    continue;
                }
                interior += 1;
                let k = j * f.nx + i;
                sup_diff = sup_diff.max((v[k] - f.values[k]).abs());
                let gx = (v[k + 1] - v[k - 1]) / (2.0 * f.h);
                let g = if f.dims() == 2 {
                    let gy = (v[k + f.nx] - v[k - f.nx]) / (2.0 * f.h);
                    gx.hypot(gy)
                } else {
                    gx.abs()
                };
                dmax = dmax.max(g);
                tmax = tmax.max(((vp[k] - vm[k]) / (2.0 * t * DELTA)).abs());
            }
        }
        if interior == 0 {
            fam.rejected.push(t);
            continue;
        }
        fam.rows.push(MollifiedRow {
            t,
            sup_diff,
            c1_bound: scale * dmax,
            dt_bound: scale * tmax,
            interior,
        });
        fam.smoothed.push(v);
    }
    Ok(fam)
}

/// Quintic smootherstep bump: 1 on `[0, 1]`, 0 beyond `1.5`, slope at most 3.75.
fn bump(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else if s >= 1.5 {
        0.0
    } else {
        let u = (s - 1.0) / 0.5;
        1.0 - u * u * u * (u * (6.0 * u - 15.0) + 10.0)
    }
}

/// How an extension value was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionKind {
    /// The query is a site; the sample value is returned.
    Site,
    /// Partition-of-unity average over Whitney cubes.
    Interpolated,
    /// No Whitney cube above the finest level: nearest-site value.
    Deep,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionValue {
    pub value: Point,
    /// `sum_i phi_i` at the query (1 up to rounding).
    pub pou_sum: f64,
    pub kind: ExtensionKind,
    pub cubes: usize,
}

/// Whitney extension of a function known on a finite set `K`.
///
/// The complement of `K` is tiled by maximal dyadic cubes `Q` with
/// `dist(Q, K) >= diam Q` (levels between `k_min` and [`EXTENSION_K_MAX`]).
/// Each cube carries a bump equal to 1 on its closure and supported in its
/// 1.5-dilate; normalized bumps form the partition of unity, and each cube
/// contributes the value at a nearest site of `K`.
pub struct WhitneyExtension {
    tree: KdTree,
    values: Vec<Point>,
    scalar: bool,
    k_min: i32,
    k_max: i32,
}

impl WhitneyExtension {
    pub fn new(f: &SampledFunction) -> Result<Self> {
        let bb = Rect::bounding(&f.sites).expect("non-empty");
        let size = bb.diag().max(1e-300);
        let k_min = -(size.log2().ceil() as i32) - 1;
        Ok(WhitneyExtension {
            tree: KdTree::new(f.sites.clone()),
            values: f.values.clone(),
            scalar: f.scalar,
            k_min: k_min.min(EXTENSION_K_MAX - 1),
            k_max: EXTENSION_K_MAX,
        })
    }

    pub fn is_scalar(&self) -> bool {
        self.scalar
    }

    fn cube_rect(k: i32, i: i64, j: i64) -> Rect {
        let s = 2f64.powi(-k);
        Rect::new(i as f64 * s, j as f64 * s, (i + 1) as f64 * s, (j + 1) as f64 * s)
    }

    fn admissible(&self, k: i32, i: i64, j: i64) -> bool {
        let r = Self::cube_rect(k, i, j);
        self.tree.dist_to_rect(&r) >= r.diag()
    }

    fn is_whitney(&self, k: i32, i: i64, j: i64) -> bool {
        self.admissible(k, i, j) && (k == self.k_min || !self.admissible(k - 1, i.div_euclid(2), j.div_euclid(2)))
    }

    pub fn evaluate(&self, x: Point) -> ExtensionValue {
        let (near, d) = self.tree.nearest(x).expect("non-empty site set");
        if d == 0.0 {
            return ExtensionValue {
                value: self.values[near],
                pou_sum: 1.0,
                kind: ExtensionKind::Site,
                cubes: 0,
            };
        }
        let mut level = None;
        for k in self.k_min..=self.k_max {
            let s = 2f64.powi(-k);
            let (i, j) = ((x.x / s).floor() as i64, (x.y / s).floor() as i64);
            if self.admissible(k, i, j) {
                level = Some(k);
                break;
            }
        }
        let Some(k0) = level else {
            return ExtensionValue {
                value: self.values[near],
                pou_sum: 1.0,
                kind: ExtensionKind::Deep,
                cubes: 0,
            };
        };
        let mut weights: Vec<(f64, Point)> = Vec::new();
        for k in (k0 - 4).max(self.k_min)..=(k0 + 4).min(self.k_max) {
            let s = 2f64.powi(-k);
            let (ix0, ix1) = (((x.x - 0.25 * s) / s).floor() as i64, ((x.x + 0.25 * s) / s).floor() as i64);
            let (iy0, iy1) = (((x.y - 0.25 * s) / s).floor() as i64, ((x.y + 0.25 * s) / s).floor() as i64);
            for i in ix0..=ix1 {
                for j in iy0..=iy1 {
                    let r = Self::cube_rect(k, i, j);
                    let c = r.center();
                    let half = 0.5 * s;
                    let eta = bump((x.x - c.x).abs() / half) * bump((x.y - c.y).abs() / half);
                    if eta == 0.0 || !self.is_whitney(k, i, j) {
                        continue;
                    }
                    let (p, _) = self.tree.nearest_to_rect(&r).expect("non-empty");
                    weights.push((eta, self.values[p]));
                }
            }
        }
        let total: f64 = weights.iter().map(|w| w.0).sum();
        let mut value = Point::ORIGIN;
        let mut pou = 0.0;
        for &(eta, v) in &weights {
            let phi = eta / total;
            pou += phi;
            value = value + v * phi;
        }
        ExtensionValue {
            value,
            pou_sum: pou,
            kind: ExtensionKind::Interpolated,
            cubes: weights.len(),
        }
    }

    pub fn evaluate_many(&self, queries: &[Point]) -> Vec<ExtensionValue> {
        queries.par_iter().map(|&q| self.evaluate(q)).collect()
    }
}

/// Summary of an extension evaluated at a batch of queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    pub values: Vec<ExtensionValue>,
    /// `max |sum phi - 1|` over interpolated queries.
    pub pou_error: f64,
    /// `max |f~ - f|` over queries that are sites.
    pub interpolation_error: f64,
    pub deep_queries: usize,
}

/// Evaluate the Whitney extension of `f` at `queries`.
pub fn whitney_extend(f: &SampledFunction, queries: &[Point]) -> Result<ExtensionReport> {
    let ext = WhitneyExtension::new(f)?;
    let values = ext.evaluate_many(queries);
    let mut pou_error = 0.0f64;
    let mut deep = 0;
    for v in &values {
        match v.kind {
            ExtensionKind::Interpolated => pou_error = pou_error.max((v.pou_sum - 1.0).abs()),
            ExtensionKind::Deep => deep += 1,
            ExtensionKind::Site => {}
        }
    }
    let lookup: HashMap<(u64, u64), usize> = f
        .sites
        .iter()
        .enumerate()
        .map(|(i, p)| ((p.x.to_bits(), p.y.to_bits()), i))
        .collect();
    let mut interpolation_error = 0.0f64;
    for (q, v) in queries.iter().zip(&values) {
        if let Some(&i) = lookup.get(&(q.x.to_bits(), q.y.to_bits())) {
            interpolation_error = interpolation_error.max(v.value.dist(f.values[i]));
        }
    }
    Ok(ExtensionReport {
        values,
        pou_error,
        interpolation_error,
        deep_queries: deep,
    })
}

/// Seminorm of a sampled function against that of its extension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    pub alpha: f64,
    pub seminorm_f: f64,
    /// Seminorm over the sites together with the extension values at the
    /// queries.
    pub seminorm_ext: f64,
    pub amplification: f64,
    pub pou_error: f64,
    pub interpolation_error: f64,
    pub queries: usize,
    pub deep_queries: usize,
    pub lower_bound_only: bool,
}

/// Extend `f` to `queries` and compare `[f~]_alpha` on `K` plus the queries
/// with `[f]_alpha` on `K`.
pub fn extension_amplification(f: &SampledFunction, alpha: f64, queries: &[Point]) -> Result<AmplificationReport> {
    check_alpha(alpha)?;
    let base = holder_seminorm(f, alpha)?;
    let rep = whitney_extend(f, queries)?;
    let mut seen: HashSet<(u64, u64)> =
        f.sites.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
    let mut sites = f.sites.clone();
    let mut values = f.values.clone();
    for (q, v) in queries.iter().zip(&rep.values) {
        if seen.insert((q.x.to_bits(), q.y.to_bits())) {
            sites.push(*q);
            values.push(v.value);
        }
    }
    let joint = if f.scalar {
        SampledFunction::scalar(sites, values.iter().map(|v| v.x).collect())?
    } else {
        SampledFunction::planar(sites, values)?
    };
    let ext = holder_seminorm(&joint, alpha)?;
    let amplification = if base.seminorm > 0.0 { ext.seminorm / base.seminorm } else if ext.seminorm > 0.0 { f64::INFINITY } else { 1.0 };
    Ok(AmplificationReport {
        alpha,
        seminorm_f: base.seminorm,
        seminorm_ext: ext.seminorm,
        amplification,
        pou_error: rep.pou_error,
        interpolation_error: rep.interpolation_error,
        queries: queries.len(),
        deep_queries: rep.deep_queries,
        lower_bound_only: base.is_lower_bound_only() || ext.is_lower_bound_only(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(f: &SampledFunction, alpha: f64) -> f64 {
        let mut best = 0.0f64;
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                let q = f.values[i].dist(f.values[j]) / f.sites[i].dist(f.sites[j]).powf(alpha);
                best = best.max(q);
            }
        }
        best
    }

    fn line_sites(n: usize, a: f64, b: f64) -> Vec<Point> {
        (0..n).map(|i| Point::new(a + (b - a) * i as f64 / (n - 1) as f64, 0.0)).collect()
    }

    fn weierstrass_1d(x: f64, alpha: f64) -> f64 {
        (0..=10).map(|k| 2f64.powf(-alpha * k as f64) * (2f64.powi(k) * std::f64::consts::PI * x).cos()).sum()
    }

    #[test]
    fn two_point_pair_is_not_pruned() {
        let f = SampledFunction::scalar(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)], vec![0.0, 1.0]).unwrap();
        let e = holder_seminorm_exact(&f, 1.0).unwrap();
        assert_eq!(e.seminorm, 1.0);
        assert_eq!(e.argmax, Some((0, 1)));
    }

    #[test]
    fn amplification_on_a_smooth_function() {
        let sites: Vec<Point> = (0..40).map(|i| Point::new((i % 8) as f64 / 7.0, (i / 8) as f64 / 4.0)).collect();
        let f = SampledFunction::from_scalar_fn(sites.clone(), |p| p.x - 0.5 * p.y).unwrap();
        let q: Vec<Point> = (0..100).map(|i| Point::new(-0.2 + 0.014 * i as f64, 0.37)).chain(sites).collect();
        let r = extension_amplification(&f, 1.0, &q).unwrap();
        assert!(r.interpolation_error <= 1e-15 && r.pou_error <= 1e-12);
        assert!(r.amplification >= 1.0 && r.amplification <= 50.0, "{r:?}");
    }

    #[test]
    fn trivial_seminorms() {
        let f = SampledFunction::from_scalar_fn(line_sites(101, 0.0, 1.0), |p| p.x).unwrap();
        assert!((holder_seminorm(&f, 1.0).unwrap().seminorm - 1.0).abs() < 1e-12);
        let c = SampledFunction::from_scalar_fn(line_sites(50, 0.0, 1.0), |_| 3.0).unwrap();
        assert_eq!(holder_seminorm(&c, 0.5).unwrap().seminorm, 0.0);
        assert!(holder_seminorm(&c, 0.0).is_err());
        assert!(holder_seminorm(&c, 1.5).is_err());
    }

    #[test]
    fn duplicate_sites_rejected() {
        let s = vec![Point::new(0.0, 0.0), Point::new(0.0, 0.0)];
        assert!(SampledFunction::scalar(s, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn exact_mode_matches_brute_force() {
        let f = SampledFunction::from_scalar_fn(line_sites(1025, 0.0, 1.0), |p| weierstrass_1d(p.x, 0.5)).unwrap();
        let e = holder_seminorm(&f, 0.5).unwrap();
        assert_eq!(e.mode, SeminormMode::Exact);
        assert!((e.seminorm - brute(&f, 0.5)).abs() < 1e-12 * e.seminorm);
        assert!(e.seminorm > 0.8 && e.seminorm < 30.0, "{}", e.seminorm);
        let (i, j) = e.argmax.unwrap();
        let q = f.values[i].dist(f.values[j]) / f.sites[i].dist(f.sites[j]).sqrt();
        assert!((q - e.seminorm).abs() < 1e-12);
    }

    #[test]
    fn weierstrass_estimate_stable_under_refinement() {
        let coarse = SampledFunction::from_scalar_fn(line_sites(1025, 0.0, 1.0), |p| weierstrass_1d(p.x, 0.5)).unwrap();
        let fine = SampledFunction::from_scalar_fn(line_sites(4097, 0.0, 1.0), |p| weierstrass_1d(p.x, 0.5)).unwrap();
        let a = holder_seminorm(&coarse, 0.5).unwrap().seminorm;
        let b = holder_seminorm(&fine, 0.5).unwrap().seminorm;
        assert!((a - b).abs() <= 0.05 * b, "{a} vs {b}");
    }

    #[test]
    fn subsampled_is_a_lower_bound() {
        let f = SampledFunction::from_scalar_fn(line_sites(3000, 0.0, 1.0), |p| weierstrass_1d(p.x, 0.6)).unwrap();
        let exact = holder_seminorm_exact(&f, 0.6).unwrap();
        let sub = holder_seminorm_subsampled(&f, 0.6, 200_000, 7).unwrap();
        assert!(sub.is_lower_bound_only());
        assert!(sub.seminorm <= exact.seminorm + 1e-12);
        assert!(sub.seminorm >= 0.7 * exact.seminorm);
    }

    #[test]
    fn spacing_of_a_grid() {
        let f = SampledFunction::from_scalar_fn(line_sites(11, 0.0, 1.0), |p| p.x).unwrap();
        let s = f.spacing();
        assert!((s.min - 0.1).abs() < 1e-12 && (s.max - 0.1).abs() < 1e-12);
    }

    #[test]
    fn extension_of_constant_is_constant() {
        let sites: Vec<Point> = (0..40)
            .map(|i| {
                let a = i as f64 * 0.157;
                Point::new(a.cos(), a.sin())
            })
            .collect();
        let f = SampledFunction::scalar(sites.clone(), vec![2.5; 40]).unwrap();
        let mut q: Vec<Point> = (0..30).flat_map(|i| (0..30).map(move |j| Point::new(-1.5 + 0.1 * i as f64, -1.5 + 0.1 * j as f64))).collect();
        q.extend_from_slice(&sites);
        let rep = whitney_extend(&f, &q).unwrap();
        for v in &rep.values {
            assert!((v.value.x - 2.5).abs() < 1e-12);
        }
        assert!(rep.pou_error < 1e-9);
        assert!(rep.interpolation_error <= 1e-12);
    }

    #[test]
    fn two_point_extension_is_monotone_and_lipschitz() {
        let f = SampledFunction::scalar(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)], vec![0.0, 1.0]).unwrap();
        let q: Vec<Point> = (0..=2000).map(|i| Point::new(i as f64 / 2000.0, 0.0)).collect();
        let rep = whitney_extend(&f, &q).unwrap();
        let vals: Vec<f64> = rep.values.iter().map(|v| v.value.x).collect();
        assert_eq!(vals[0], 0.0);
        assert_eq!(vals[2000], 1.0);
        for w in vals.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        let g = SampledFunction::scalar(q, vals).unwrap();
        let lip = holder_seminorm(&g, 1.0).unwrap().seminorm;
        assert!(lip < 50.0, "{lip}");
    }

    #[test]
    fn mollified_linear_is_reproduced() {
        let f = GridSamples::from_fn_1d(-1.0, 1.0, 1025, |x| 3.0 * x - 1.0).unwrap();
        let fam = mollified_family(&f, 0.5, &[0.01, 0.1]).unwrap();
        for r in &fam.rows {
            assert!(r.sup_diff < 1e-12, "{}", r.sup_diff);
            assert!((r.c1_bound - 3.0 * r.t.sqrt()).abs() < 1e-9);
            assert!(r.dt_bound < 1e-9);
        }
        let rej = mollified_family(&f, 0.5, &[1e-4]).unwrap();
        assert_eq!(rej.rejected, vec![1e-4]);
    }

    #[test]
    fn mollified_abs_power_matches_closed_form_derivative() {
        let alpha = 0.5;
        let h = 2f64.powi(-11);
        let n = (6.0 / h) as usize + 1;
        let f = GridSamples::from_fn_1d(-3.0, 3.0, n, |x: f64| x.abs().powf(alpha)).unwrap();
        let prim = |x: f64| x.signum() * x.abs().powf(alpha + 1.0) / (alpha + 1.0);
        let scales: Vec<f64> = (0..=10).map(|k| 2f64.powi(-k)).collect();
        let fam = mollified_family(&f, alpha, &scales).unwrap();
        assert!(fam.rejected.is_empty());
        let mut bound = 0.0f64;
        for (r, v) in fam.rows.iter().zip(&fam.smoothed) {
            let t = r.t;
            let (mut exact_max, mut discrete_max) = (0.0f64, 0.0f64);
            for i in 1..n - 1 {
                let x = -3.0 + h * i as f64;
                if x.abs() > 1.0 {
                    continue;
                }
                let d = (prim(x + t) - 2.0 * prim(x) + prim(x - t)) / (t * t);
                exact_max = exact_max.max(d.abs());
                discrete_max = discrete_max.max(((v[i + 1] - v[i - 1]) / (2.0 * h)).abs());
            }
            // The discrete tent only resolves the kink at 0 once it spans a few cells.
            if t >= 8.0 * h {
                assert!((discrete_max - exact_max).abs() < 0.1 * exact_max, "t={t}: {discrete_max} vs {exact_max}");
            }
            bound = bound.max(t.powf(1.0 - alpha) * exact_max.max(discrete_max));
        }
        assert!(bound < 3.0, "{bound}");
        assert!(fam.constant() < 20.0);
    }
}

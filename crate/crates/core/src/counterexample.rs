//! The divergent sequence of boundary maps: loop maps placed on every edge of
//! a pre-fractal, their degree fields and the sweeps over the level `m`.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degree::{
    degree_field_from_index, lp_norm, split_degree_check, BoundaryMap, DegreeField, FieldOptions, LpNorm, WindingIndex,
};
use crate::error::{Error, Result};
use crate::fractal_gen::{edge_count, edge_frame, iterate_prefractal, project_point, Generator, PreFractal};
use crate::geom::{Point, Rect};
use crate::holder::{holder_seminorm, holder_seminorm_exact, HolderEstimate, SampledFunction, WhitneyExtension};
use crate::whitney::PolygonDomain;
use crate::whitney::DomainOracle;

/// Ambient dimension.
const N_DIM: f64 = 2.0;
/// Default number of samples per loop.
pub const DEFAULT_LOOP_SAMPLES: usize = 64;
/// Smallest accepted number of samples per loop.
pub const MIN_LOOP_SAMPLES: usize = 16;

/// The unit loop profile `zeta(x) = (sign(x) sin(pi |x|), cos(pi |x|))` on `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopProfile {
    pub samples: usize,
}

impl LoopProfile {
    pub fn new(samples: usize) -> Result<Self> {
        if samples < MIN_LOOP_SAMPLES {
            return Err(Error::param("samples", format!("need at least {MIN_LOOP_SAMPLES} samples per loop")));
        }
        Ok(LoopProfile { samples })
    }

    pub fn zeta(x: f64) -> Point {
        let a = PI * x.abs();
        Point::new(x.signum() * a.sin(), a.cos())
    }

    /// Closed image curve of one loop traversed with decreasing abscissa,
    /// `zeta(1 - 2j/K)` for `j = 0..=K`; it winds once counterclockwise.
    pub fn curve(&self) -> Vec<Point> {
        let k = self.samples;
        let mut c: Vec<Point> = (0..=k).map(|j| Self::zeta(1.0 - 2.0 * j as f64 / k as f64)).collect();
        c[k] = c[0];
        c
    }
}

/// `zeta_rho(x) = rho^at zeta(x / rho)` on `[-rho, rho]`, `-rho^at e_2` outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopMap {
    pub rho: f64,
    pub alpha_tilde: f64,
}

pub fn loop_map(rho: f64, alpha_tilde: f64) -> Result<LoopMap> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::param("rho", "must be positive"));
    }
    Ok(LoopMap { rho, alpha_tilde })
}

impl LoopMap {
    /// Loop radius `rho^alpha_tilde`.
    pub fn radius(&self) -> f64 {
        self.rho.powf(self.alpha_tilde)
    }

    pub fn eval(&self, x: f64) -> Point {
        let r = self.radius();
        if x.abs() <= self.rho {
            LoopProfile::zeta(x / self.rho) * r
        } else {
            Point::new(0.0, -r)
        }
    }

    /// Exact Lipschitz constant `pi rho^{alpha_tilde - 1}` of the loop.
    pub fn lipschitz(&self) -> f64 {
        PI * self.radius() / self.rho
    }

    /// The loop sampled at `samples` points and closed through the constant
    /// part, traversed with decreasing abscissa.
    pub fn closed_curve(&self, samples: usize) -> Vec<Point> {
        let mut c: Vec<Point> = (0..=samples)
            .map(|j| self.eval(self.rho * (1.0 - 2.0 * j as f64 / samples as f64)))
            .collect();
        c.push(self.eval(2.0 * self.rho));
        c.push(c[0]);
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `p > n alpha / d`: the degree norms of the sequence blow up.
    Divergence,
    /// `p <= n alpha / d`: the degree converges in `L^p`.
    Convergence,
}

/// Exponents of one counterexample experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub alpha_tilde: f64,
    pub p: f64,
    /// Box dimension of the boundary.
    pub d: f64,
}

impl SequenceConfig {
    /// Default exponents. In the divergence regime `alpha_tilde` is the
    /// midpoint of `(alpha, min(p d / n, 1))`; otherwise the midpoint of
    /// `(alpha, 1)` capped at 0.99. `alpha_prime` is the midpoint of
    /// `(alpha, alpha_tilde)`.
    pub fn new(alpha: f64, p: f64, d: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", "must lie in (0, 1)"));
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::param("p", "must be a finite real >= 1"));
        }
        if !(d >= 1.0 && d < 2.0) {
            return Err(Error::param("d", "must lie in [1, 2)"));
        }
        let upper = if p > N_DIM * alpha / d { (p * d / N_DIM).min(1.0) } else { 1.0 };
        let alpha_tilde = (0.5 * (alpha + upper)).min(0.99);
        let cfg = SequenceConfig {
            alpha,
            alpha_prime: 0.5 * (alpha + alpha_tilde),
            alpha_tilde,
            p,
            d,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn for_generator(gen: &Generator, p: f64) -> Result<Self> {
        Self::new(gen.alpha, p, gen.target_dim)
    }

    pub fn with_overrides(mut self, alpha_prime: Option<f64>, alpha_tilde: Option<f64>) -> Result<Self> {
        if let Some(t) = alpha_tilde {
            self.alpha_tilde = t;
            if alpha_prime.is_none() {
                self.alpha_prime = 0.5 * (self.alpha + t);
            }
        }
        if let Some(a) = alpha_prime {
            self.alpha_prime = a;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.alpha && self.alpha < self.alpha_prime && self.alpha_prime < self.alpha_tilde && self.alpha_tilde < 1.0) {
            return Err(Error::param(
                "alpha_tilde",
                format!(
                    "need 0 < alpha < alpha' < alpha~ < 1, got {} < {} < {}",
                    self.alpha, self.alpha_prime, self.alpha_tilde
                ),
            ));
        }
        if self.regime() == Regime::Divergence && self.alpha_tilde >= self.p * self.d / N_DIM {
            return Err(Error::param(
                "alpha_tilde",
                format!("divergence needs alpha~ < p d / n = {}", self.p * self.d / N_DIM),
            ));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        if self.p > N_DIM * self.alpha / self.d {
            Regime::Divergence
        } else {
            Regime::Convergence
        }
    }

    /// Exponent `-d + n alpha~ / p`; the norm ratio per level is `r^exponent`.
    pub fn rate_exponent(&self) -> f64 {
        -self.d + N_DIM * self.alpha_tilde / self.p
    }
}

/// The level-`m` map `v_m`: one loop of radius `(r^m / 2)^{alpha~}` on every
/// edge of `dU^m`, constant `-(r^m/2)^{alpha~} e_2` at the vertices.
///
/// Every loop has the same image, so the image curve is stored once together
/// with its multiplicity `4 N^m`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoopSequenceMap {
    pub level: usize,
    pub rho: f64,
    pub alpha_tilde: f64,
    pub samples: usize,
    pub multiplicity: i64,
    pub r: f64,
    pub n: usize,
}

/// Build `v_m` for the generator.
pub fn build_vm(gen: &Generator, m: usize, alpha_tilde: f64, samples_per_edge: usize) -> Result<LoopSequenceMap> {
    LoopProfile::new(samples_per_edge)?;
    if !(alpha_tilde > 0.0 && alpha_tilde < 1.0) {
        return Err(Error::param("alpha_tilde", "must lie in (0, 1)"));
    }
    let count = edge_count(gen.n, m).ok_or(Error::Overflow("#Q^m"))?;
    let multiplicity = i64::try_from(count).map_err(|_| Error::Overflow("#Q^m"))?;
    Ok(LoopSequenceMap {
        level: m,
        rho: 0.5 * gen.r.powi(m as i32),
        alpha_tilde,
        samples: samples_per_edge,
        multiplicity,
        r: gen.r,
        n: gen.n,
    })
}

impl LoopSequenceMap {
    pub fn loop_map(&self) -> LoopMap {
        LoopMap {
            rho: self.rho,
            alpha_tilde: self.alpha_tilde,
        }
    }

    /// `(r^m / 2)^{alpha~}`, the radius of the image disc `B*`.
    pub fn radius(&self) -> f64 {
        self.loop_map().radius()
    }

    /// `#Q^m = 4 N^m`.
    pub fn q_count(&self) -> i64 {
        self.multiplicity
    }

    /// One loop of the image, `K + 1` points, closed.
    pub fn loop_curve(&self) -> Vec<Point> {
        let r = self.radius();
        LoopProfile { samples: self.samples }.curve().into_iter().map(|p| p * r).collect()
    }

    /// Largest image norm over the sampled loop.
    pub fn sup_norm(&self) -> f64 {
        self.loop_curve().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Winding index of the image with multiplicity `4 N^m`.
    pub fn winding_index(&self) -> Result<WindingIndex> {
        let c = self.loop_curve();
        let mult = self.multiplicity;
        WindingIndex::from_weighted_segments(c.windows(2).map(|w| (w[0], w[1], mult)))
    }

    /// Radius of the largest disc centred at 0 inside the sampled loop.
    pub fn inner_radius(&self) -> f64 {
        self.radius() * (PI / self.samples as f64).cos()
    }

    /// Value at the point with local abscissa `s` of its edge.
    pub fn value_local(&self, s: f64) -> Point {
        self.loop_map().eval(s)
    }

    /// Materialize `v_m` as a boundary map on the pre-fractal polyline with
    /// `K` samples per edge.
    pub fn boundary_map(&self, pf: &PreFractal) -> Result<BoundaryMap> {
        if pf.level != self.level {
            return Err(Error::param("pf", format!("level {} does not match m = {}", pf.level, self.level)));
        }
        let k = self.samples;
        let curve = self.loop_curve();
        let e = pf.edge_count();
        let mut dom = Vec::with_capacity(e * k + 1);
        let mut img = Vec::with_capacity(e * k + 1);
        for i in 0..e {
            let (a, b) = pf.edge(i);
            for j in 0..k {
                dom.push(a.lerp(b, j as f64 / k as f64));
                img.push(curve[j]);
            }
        }
        dom.push(dom[0]);
        img.push(img[0]);
        let mut bm = BoundaryMap::new(dom, img)?;
        bm.holder_exponent = Some(self.alpha_tilde);
        Ok(bm)
    }

    /// Closed form `#Q^m omega_2^{1/p} rho^{2 alpha~ / p}` of `||deg v_m||_p`.
    pub fn lp_exact(&self, p: f64) -> f64 {
        self.multiplicity as f64 * PI.powf(1.0 / p) * self.radius().powf(N_DIM / p)
    }

    /// Degree field on a grid of cell size `radius / divisor` covering the image.
    pub fn degree_field(&self, divisor: f64) -> Result<DegreeField> {
        let idx = self.winding_index()?;
        let h = self.radius() / divisor;
        degree_field_from_index(&idx, idx.bbox().expand(2.0 * h), h, 0.0, &FieldOptions::default())
    }
}

/// Distinct turning angles between consecutive edges of a closed polyline.
pub fn turning_angles(vertices: &[Point]) -> Vec<f64> {
    let n = vertices.len() - 1;
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let d0 = vertices[(i + n - 1) % n + 1] - vertices[(i + n - 1) % n];
            let d1 = vertices[i + 1] - vertices[i];
            d0.cross(d1).atan2(d0.dot(d1))
        })
        .collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    out
}

/// Turning angles of the level-`m` pre-fractal. Every generator starts and
/// ends with a horizontal step, so the set is the same for all `m >= 1`.
pub fn prefractal_turning_angles(gen: &Generator, m: usize) -> Result<Vec<f64>> {
    let pf = iterate_prefractal(gen, m.min(1))?;
    Ok(turning_angles(&pf.vertices))
}

/// `[v_m]_{alpha'}` over sampled pairs.
///
/// Points on edges whose closures are disjoint are at least `r^m = 2 rho`
/// apart, and their quotient is at most `2R / (2 rho)^{alpha'}`, below the
/// within-edge value `2R / rho^{alpha'}`. The supremum therefore lives on
/// single edges and on pairs of adjacent edges, which are congruent to a
/// two-edge configuration per turning angle. Those configurations are sampled
/// with `K` points per edge and scanned exactly.
pub fn vm_seminorm(vm: &LoopSequenceMap, angles: &[f64], alpha_prime: f64) -> Result<HolderEstimate> {
    let k = vm.samples;
    let side = 2.0 * vm.rho;
    let curve = vm.loop_curve();
    let mut best: Option<HolderEstimate> = None;
    for &theta in angles {
        let d0 = Point::new(1.0, 0.0);
        let d1 = Point::new(theta.cos(), theta.sin());
        let start = d0 * (-side);
        let mut sites = Vec::with_capacity(2 * k + 1);
        let mut vals = Vec::with_capacity(2 * k + 1);
        for j in 0..k {
            sites.push(start + d0 * (side * j as f64 / k as f64));
            vals.push(curve[j]);
        }
        for j in 0..=k {
            sites.push(d1 * (side * j as f64 / k as f64));
            vals.push(curve[j]);
        }
        let f = SampledFunction::planar(sites, vals)?;
        let e = holder_seminorm_exact(&f, alpha_prime)?;
        if best.as_ref().map_or(true, |b| e.seminorm > b.seminorm) {
            best = Some(e);
        }
    }
    best.ok_or_else(|| Error::InsufficientData("no turning angles".into()))
}

/// `v_m` sampled at its domain vertices as a planar sampled function.
pub fn vm_sampled(bm: &BoundaryMap) -> Result<SampledFunction> {
    let n = bm.domain().len() - 1;
    SampledFunction::planar(bm.domain()[..n].to_vec(), bm.image()[..n].to_vec())
}

/// `u_m = v_m ∘ P^m` sampled at the vertices of the level-`l` proxy.
#[derive(Clone, Debug)]
pub struct ProxyMap {
    pub m: usize,
    pub l: usize,
    pub proxy: PreFractal,
    pub values: Vec<Point>,
}

pub fn build_um(gen: &Generator, vm: &LoopSequenceMap, l: usize) -> Result<ProxyMap> {
    let m = vm.level;
    if l < m {
        return Err(Error::param("l", "proxy level must be at least m"));
    }
    let proxy = iterate_prefractal(gen, l)?;
    let e = proxy.edge_count();
    let values: Vec<Point> = (0..e)
        .into_par_iter()
        .map(|k| {
            let x = proxy.vertices[k];
            let addr = &proxy.edge_addresses[k];
            let p = if l == m { x } else { project_point(gen, l, m, x, addr)? };
            let frame = edge_frame(&addr.truncated(m).motion(gen));
            let s = frame.apply_inverse(p).x;
            Ok(vm.value_local(s.clamp(-vm.rho, vm.rho)))
        })
        .collect::<Result<_>>()?;
    Ok(ProxyMap { m, l, proxy, values })
}

impl ProxyMap {
    pub fn sampled(&self) -> Result<SampledFunction> {
        let e = self.proxy.edge_count();
        SampledFunction::planar(self.proxy.vertices[..e].to_vec(), self.values.clone())
    }

    /// The image curve as a closed polyline.
    pub fn image_curve(&self) -> Vec<Point> {
        let mut c = self.values.clone();
        c.push(c[0]);
        c
    }

    pub fn boundary_map(&self) -> Result<BoundaryMap> {
        BoundaryMap::new(self.proxy.vertices.clone(), self.image_curve())
    }
}

/// Whitney extension of `u_m` from the proxy vertices to a grid of `U^l`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtensionNorms {
    pub m: usize,
    pub l: usize,
    pub alpha: f64,
    pub sites: usize,
    pub queries: usize,
    /// `sup |u_m|` over the proxy.
    pub sup_um: f64,
    pub seminorm_um: HolderEstimate,
    pub sup_ext: f64,
    /// Seminorm over proxy sites and interior queries together.
    pub seminorm_ext: HolderEstimate,
    pub pou_error: f64,
}

impl ExtensionNorms {
    /// `sup |f~| + [f~]_alpha`.
    pub fn norm_ext(&self) -> f64 {
        self.sup_ext + self.seminorm_ext.seminorm
    }

    pub fn amplification(&self) -> f64 {
        if self.seminorm_um.seminorm == 0.0 {
            0.0
        } else {
            self.seminorm_ext.seminorm / self.seminorm_um.seminorm
        }
    }
}

/// Extend `u_m` into `U^l` and measure its `C^{0,alpha}` norm on the proxy
/// sites plus the grid points (spacing `1 / grid`) inside the proxy.
pub fn extension_norms(um: &ProxyMap, alpha: f64, grid: usize) -> Result<ExtensionNorms> {
    let f = um.sampled()?;
    let ext = WhitneyExtension::new(&f)?;
    let dom = PolygonDomain::new(&um.proxy.vertices)?;
    let bb = dom.bbox();
    let mut queries = Vec::new();
    for i in 0..=grid {
        for j in 0..=grid {
            let q = Point::new(
                bb.x0 + bb.width() * (i as f64 + 0.5) / (grid + 1) as f64,
                bb.y0 + bb.height() * (j as f64 + 0.5) / (grid + 1) as f64,
            );
            if matches!(dom.contains(q), Ok(true)) {
                queries.push(q);
            }
        }
    }
    let vals = ext.evaluate_many(&queries);
    let pou_error = vals.iter().map(|v| (v.pou_sum - 1.0).abs()).fold(0.0, f64::max);
    let mut sites = f.sites().to_vec();
    let mut values = f.values().to_vec();
    sites.extend_from_slice(&queries);
    values.extend(vals.iter().map(|v| v.value));
    let all = SampledFunction::planar(sites, values)?;
    Ok(ExtensionNorms {
        m: um.m,
        l: um.l,
        alpha,
        sites: f.len(),
        queries: queries.len(),
        sup_um: f.sup_norm(),
        seminorm_um: holder_seminorm(&f, alpha)?,
        sup_ext: all.sup_norm(),
        seminorm_ext: holder_seminorm(&all, alpha)?,
        pou_error,
    })
}

/// One level of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub m: usize,
    pub sup_vm: f64,
    pub seminorm: f64,
    pub eps_m: f64,
    pub q_count: i64,
    pub lp_exact: f64,
    pub lp_quad_lo: f64,
    pub lp_quad_hi: f64,
    /// Ratio of quadrature midpoints to the previous level (NaN on the first row).
    pub ratio: f64,
}

impl DivergenceRow {
    pub fn lp_quad_mid(&self) -> f64 {
        0.5 * (self.lp_quad_lo + self.lp_quad_hi)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub config: SequenceConfig,
    pub regime: Regime,
    pub r: f64,
    pub n: usize,
    pub samples: usize,
    /// Closed-form norm ratio `r^{-d + n alpha~ / p}` per level.
    pub expected_ratio: f64,
    pub rows: Vec<DivergenceRow>,
}

impl DivergenceReport {
    pub fn norms_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].lp_quad_lo > w[0].lp_quad_hi)
    }

    pub fn norms_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].lp_quad_hi < w[0].lp_quad_lo)
    }

    pub fn seminorms_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].seminorm < w[0].seminorm)
    }

    /// Every exact norm inside its quadrature bracket.
    pub fn brackets_hold(&self) -> bool {
        self.rows.iter().all(|r| r.lp_quad_lo <= r.lp_exact && r.lp_exact <= r.lp_quad_hi)
    }

    /// `[v_m]_{alpha'} / eps_m` per row.
    pub fn normalized_seminorms(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.seminorm / r.eps_m).collect()
    }
}

/// Resolution of the sweep quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub samples: usize,
    /// Degree-field cell size is `radius / h_divisor`.
    pub h_divisor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            samples: DEFAULT_LOOP_SAMPLES,
            h_divisor: 64.0,
        }
    }
}

/// Build `v_m` for every `m` in the range and tabulate its degree norm
/// (closed form and quadrature bracket), sup norm and `alpha'` seminorm.
pub fn divergence_sweep(
    gen: &Generator,
    cfg: &SequenceConfig,
    m_range: RangeInclusive<usize>,
    opts: &SweepOptions,
) -> Result<DivergenceReport> {
    cfg.validate()?;
    let angles = if m_range.is_empty() {
        Vec::new()
    } else {
        prefractal_turning_angles(gen, *m_range.end())?
    };
    let mut rows: Vec<DivergenceRow> = Vec::new();
    for m in m_range {
        let vm = build_vm(gen, m, cfg.alpha_tilde, opts.samples)?;
        let field = vm.degree_field(opts.h_divisor)?;
        let LpNorm { lo, hi, .. } = lp_norm(&field, cfg.p)?;
        let level_angles: Vec<f64> = if m == 0 {
            vec![0.5 * PI]
        } else {
            angles.clone()
        };
        let seminorm = vm_seminorm(&vm, &level_angles, cfg.alpha_prime)?.seminorm;
        let ratio = match rows.last() {
            Some(prev) => 0.5 * (lo + hi) / prev.lp_quad_mid(),
            None => f64::NAN,
        };
        rows.push(DivergenceRow {
            m,
            sup_vm: vm.sup_norm(),
            seminorm,
            eps_m: gen.r.powf(m as f64 * (cfg.alpha_tilde - cfg.alpha_prime)),
            q_count: vm.q_count(),
            lp_exact: vm.lp_exact(cfg.p),
            lp_quad_lo: lo,
            lp_quad_hi: hi,
            ratio,
        });
    }
    Ok(DivergenceReport {
        config: *cfg,
        regime: cfg.regime(),
        r: gen.r,
        n: gen.n,
        samples: opts.samples,
        expected_ratio: gen.r.powf(cfg.rate_exponent()),
        rows,
    })
}

/// [`divergence_sweep`] restricted to the convergence regime, where the
/// distance `||deg v_m - deg 0||_p = ||deg v_m||_p` must decrease.
pub fn convergence_sweep(
    gen: &Generator,
    cfg: &SequenceConfig,
    m_range: RangeInclusive<usize>,
    opts: &SweepOptions,
) -> Result<DivergenceReport> {
    if cfg.regime() != Regime::Convergence {
        return Err(Error::Precondition(format!(
            "p = {} exceeds n alpha / d = {}",
            cfg.p,
            N_DIM * cfg.alpha / cfg.d
        )));
    }
    divergence_sweep(gen, cfg, m_range, opts)
}

/// Comparison of `deg u_k` with `deg u` for one `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub sup_diff: f64,
    /// `2 sup |u - u_k|`.
    pub eps: f64,
    /// Area of cells where both degrees are defined and differ.
    pub disagreement_area: f64,
    /// Area of cells undefined in either field.
    pub undefined_area: f64,
    pub lp_distance_lo: f64,
    pub lp_distance_hi: f64,
    /// Disagreement cells farther than `eps` (plus half a cell diagonal)
    /// from `u(dU)`.
    pub mechanism_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub p: f64,
    pub h: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].disagreement_area <= w[0].disagreement_area && w[1].lp_distance_hi <= w[0].lp_distance_hi)
    }

    pub fn mechanism_holds(&self) -> bool {
        self.rows.iter().all(|r| r.mechanism_violations == 0)
    }
}

/// Compare degree fields of `u` and each `u_k` (same domain polyline) on a
/// common grid of cell size `h`.
pub fn convergence_check(u: &BoundaryMap, seq: &[BoundaryMap], p: f64, h: f64) -> Result<ConvergenceReport> {
    if !(p >= 1.0) {
        return Err(Error::param("p", "must be at least 1"));
    }
    let iu = u.winding_index()?;
    let mut rows = Vec::with_capacity(seq.len());
    for (k, uk) in seq.iter().enumerate() {
        if uk.domain() != u.domain() {
            return Err(Error::param("seq", "maps must share the domain polyline"));
        }
        let sup_diff = u
            .image()
            .iter()
            .zip(uk.image())
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max);
        let ik = uk.winding_index()?;
        let rect: Rect = iu.bbox().union(&ik.bbox()).expand(2.0 * h);
        let opts = FieldOptions::default();
        let fu = degree_field_from_index(&iu, rect, h, 0.0, &opts)?;
        let fk = degree_field_from_index(&ik, rect, h, 0.0, &opts)?;
        let cell = h * h;
        let eps = 2.0 * sup_diff;
        let (mut dis, mut undef, mut acc, mut undef_max) = (0.0, 0.0, 0.0, 0i64);
        let mut violations = 0;
        let (nx, ny) = fu.dims();
        for j in 0..ny {
            for i in 0..nx {
                match (fu.value(i, j), fk.value(i, j)) {
                    (Some(a), Some(b)) => {
                        if a != b {
                            dis += cell;
                            acc += ((a - b).abs() as f64).powf(p) * cell;
                            let c = fu.cell_center(i, j);
                            if iu.distance(c) > eps + h * std::f64::consts::FRAC_1_SQRT_2 {
                                violations += 1;
                            }
                        }
                    }
                    (a, b) => {
                        undef += cell;
                        undef_max = undef_max.max(a.unwrap_or(0).abs() + b.unwrap_or(0).abs());
                    }
                }
            }
        }
        let bound = (undef_max.max(1) as f64).powf(p) * undef;
        rows.push(ConvergenceRow {
            k,
            sup_diff,
            eps,
            disagreement_area: dis,
            undefined_area: undef,
            lp_distance_lo: acc.powf(1.0 / p),
            lp_distance_hi: (acc + bound).powf(1.0 / p),
            mechanism_violations: violations,
        });
    }
    Ok(ConvergenceReport { p, h, rows })
}

/// Outcome of excising the loops of `v_m` one at a time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExcisionReport {
    pub loops: usize,
    pub assertions: usize,
    pub failures: Vec<String>,
}

impl ExcisionReport {
    pub fn holds(&self) -> bool {
        self.failures.is_empty() && self.assertions == 3 * self.loops
    }
}

/// Remove the loops of the materialized `v_m` one by one. For each loop
/// assert that the splitting identity holds at every sample, that the
/// excised loop has degree 1 at the centre, and that the remaining map's
/// central degree dropped by exactly 1.
pub fn excision_check(vm: &LoopSequenceMap, bm: &BoundaryMap, samples: &[Point]) -> Result<ExcisionReport> {
    let k = vm.samples;
    let loops = bm.segment_count() / k;
    let y0 = Point::new(0.0, -vm.radius());
    let centre = Point::ORIGIN;
    let mut rep = ExcisionReport {
        loops,
        ..Default::default()
    };
    let mut current = bm.clone();
    let mut deg = current.degree_at(centre)?;
    let mut probe = samples.to_vec();
    probe.push(centre);
    for i in 0..loops {
        let v = i * k..(i + 1) * k;
        let split = split_degree_check(&current, v.clone(), y0, &probe)?;
        rep.assertions += 1;
        if !split.holds() || split.checked == 0 {
            rep.failures.push(format!("loop {i}: split identity failed at {} samples", split.failures.len()));
        }
        let (_, d, d1, d2) = *split.values.last().filter(|x| x.0 == centre).ok_or_else(|| {
            Error::Numerical(format!("loop {i}: centre lies on an image curve"))
        })?;
        rep.assertions += 1;
        if d1 != 1 {
            rep.failures.push(format!("loop {i}: excised loop has degree {d1}"));
        }
        rep.assertions += 1;
        if d != deg || d2 != deg - 1 {
            rep.failures.push(format!("loop {i}: degree {d} -> {d2}, expected {} -> {}", deg, deg - 1));
        }
        let img: Vec<Point> = current
            .image()
            .iter()
            .enumerate()
            .map(|(j, &p)| if j > v.start && j < v.end { y0 } else { p })
            .collect();
        current = current.with_image(img)?;
        deg = d2;
    }
    Ok(rep)
}

/// `count` points spread uniformly over the disc of radius `radius`
/// (sunflower pattern, deterministic).
pub fn disc_samples(radius: f64, count: usize) -> Vec<Point> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let r = radius * ((i as f64 + 0.5) / count as f64).sqrt();
            let t = golden * i as f64;
            Point::new(r * t.cos(), r * t.sin())
        })
        .collect()
}

/// `count` points on the circle of radius `radius`.
pub fn circle_samples(radius: f64, count: usize) -> Vec<Point> {
    (0..count)
        .map(|i| {
            let t = 2.0 * PI * (i as f64 + 0.25) / count as f64;
            Point::new(radius * t.cos(), radius * t.sin())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::winding_number;
    use crate::fractal_gen::build_generator;

    #[test]
    fn profile_values() {
        let z = LoopProfile::zeta(0.0);
        assert!(z.dist(Point::new(0.0, 1.0)) < 1e-15);
        for x in [-1.0, 1.0] {
            assert!(LoopProfile::zeta(x).dist(Point::new(0.0, -1.0)) < 1e-15);
        }
        for i in 0..=100 {
            let x = -1.0 + 0.02 * i as f64;
            assert!((LoopProfile::zeta(x).norm() - 1.0).abs() < 1e-15);
        }
        assert!(LoopProfile::new(8).is_err());
    }

    #[test]
    fn loop_map_winds_once() {
        let lm = loop_map(0.3, 0.8).unwrap();
        let c = lm.closed_curve(64);
        assert_eq!(winding_number(&c, Point::new(0.0, 0.5 * lm.radius())).unwrap(), 1);
        assert_eq!(winding_number(&c, Point::new(0.0, 2.0 * lm.radius())).unwrap(), 0);
        let one = loop_map(1.0, 0.8).unwrap();
        assert!(one.eval(0.0).dist(Point::new(0.0, 1.0)) < 1e-15);
        assert!(one.eval(5.0).dist(Point::new(0.0, -1.0)) < 1e-15);
        // Sampled Lipschitz constant stays below the exact one.
        let mut lip = 0.0f64;
        for i in 0..1000 {
            let (x, y) = (-0.3 + 0.0006 * i as f64, -0.3 + 0.0006 * (i + 1) as f64);
            lip = lip.max(lm.eval(x).dist(lm.eval(y)) / (y - x));
        }
        assert!(lip <= lm.lipschitz() * (1.0 + 1e-9));
    }

    #[test]
    fn default_exponents() {
        let c = SequenceConfig::new(0.7, 2.0, 1.5).unwrap();
        assert_eq!(c.regime(), Regime::Divergence);
        assert!((c.alpha_tilde - 0.85).abs() < 1e-15);
        assert!(c.rate_exponent() < 0.0);
        let conv = SequenceConfig::new(0.9, 1.0, 1.5).unwrap();
        assert_eq!(conv.regime(), Regime::Convergence);
        assert!(conv.rate_exponent() > 0.0);
        assert!(c.with_overrides(None, Some(0.95)).is_ok());
        let near = SequenceConfig::new(0.7, 1.2, 1.5).unwrap();
        assert!(near.with_overrides(None, Some(0.95)).is_err());
        assert!(SequenceConfig::new(0.7, 0.5, 1.5).is_err());
    }

    #[test]
    fn level_zero_degree_field() {
        let g = build_generator(1.5, 0.7).unwrap();
        let vm = build_vm(&g, 0, 0.8, 64).unwrap();
        assert_eq!(vm.q_count(), 4);
        let idx = vm.winding_index().unwrap();
        for y in disc_samples(0.95 * vm.inner_radius(), 50) {
            assert_eq!(idx.winding(y).unwrap(), 4);
        }
        for y in circle_samples(1.5 * vm.radius(), 50) {
            assert_eq!(idx.winding(y).unwrap(), 0);
        }
        let pf = iterate_prefractal(&g, 0).unwrap();
        let bm = vm.boundary_map(&pf).unwrap();
        assert_eq!(bm.degree_at(Point::ORIGIN).unwrap(), 4);
    }

    #[test]
    fn level_one_materialized_matches_compact() {
        let g = build_generator(1.5, 0.7).unwrap();
        let vm = build_vm(&g, 1, 0.8, 16).unwrap();
        let pf = iterate_prefractal(&g, 1).unwrap();
        let bm = vm.boundary_map(&pf).unwrap();
        let idx = vm.winding_index().unwrap();
        let full = bm.winding_index().unwrap();
        for y in disc_samples(0.9 * vm.inner_radius(), 30).into_iter().chain(circle_samples(2.0 * vm.radius(), 10)) {
            assert_eq!(idx.winding(y).unwrap(), full.winding(y).unwrap());
        }
        assert_eq!(full.winding(Point::ORIGIN).unwrap(), 148);
    }

    #[test]
    fn local_seminorm_matches_full_scan() {
        let g = build_generator(1.5, 0.7).unwrap();
        let angles = prefractal_turning_angles(&g, 1).unwrap();
        let a2 = turning_angles(&iterate_prefractal(&g, 2).unwrap().vertices);
        assert_eq!(angles.len(), a2.len());
        for m in 0..=1 {
            let vm = build_vm(&g, m, 0.85, 16).unwrap();
            let pf = iterate_prefractal(&g, m).unwrap();
            let bm = vm.boundary_map(&pf).unwrap();
            let full = holder_seminorm_exact(&vm_sampled(&bm).unwrap(), 0.775).unwrap().seminorm;
            let ang = if m == 0 { vec![0.5 * PI] } else { angles.clone() };
            let local = vm_seminorm(&vm, &ang, 0.775).unwrap().seminorm;
            assert!((full - local).abs() <= 1e-12 * full, "m={m}: {full} vs {local}");
        }
    }

    #[test]
    fn proxy_degree_matches() {
        let g = build_generator(1.5, 0.7).unwrap();
        let vm = build_vm(&g, 1, 0.85, 64).unwrap();
        let um = build_um(&g, &vm, 2).unwrap();
        let c = um.image_curve();
        for y in disc_samples(0.5 * vm.radius(), 20) {
            assert_eq!(winding_number(&c, y).unwrap(), 148);
        }
        assert!(um.values.iter().all(|v| v.norm() <= vm.radius() * (1.0 + 1e-12)));
        let same = build_um(&g, &vm, 1).unwrap();
        assert_eq!(same.values.len(), 148);
    }

    #[test]
    fn shifted_square_disagreement_is_a_thin_tube() {
        let u = BoundaryMap::unit_square();
        let seq: Vec<BoundaryMap> = (1..=4)
            .map(|k| u.with_image(u.image().iter().map(|&p| p + Point::new(1.0 / (4 * k) as f64, 0.0)).collect()).unwrap())
            .collect();
        let rep = convergence_check(&u, &seq, 1.0, 1.0 / 256.0).unwrap();
        assert!(rep.decreasing());
        assert!(rep.mechanism_holds());
        for (i, r) in rep.rows.iter().enumerate() {
            let k = 4.0 * (i + 1) as f64;
            assert!(r.disagreement_area <= 8.0 / k, "{}", r.disagreement_area);
        }
        let same = convergence_check(&u, &[u.clone()], 1.0, 1.0 / 64.0).unwrap();
        assert_eq!(same.rows[0].disagreement_area, 0.0);
    }

    #[test]
    fn excision_at_level_zero() {
        let g = build_generator(1.5, 0.7).unwrap();
        let vm = build_vm(&g, 0, 0.85, 32).unwrap();
        let bm = vm.boundary_map(&iterate_prefractal(&g, 0).unwrap()).unwrap();
        let rep = excision_check(&vm, &bm, &disc_samples(0.5 * vm.radius(), 10)).unwrap();
        assert_eq!(rep.loops, 4);
        assert!(rep.holds(), "{:?}", rep.failures);
    }
}

//! Deterministic test corpora shared by the checks, the command-line suite
//! and the acceptance tests.
//!
//! Every generator here is seeded, so two calls with the same arguments
//! return bit-identical data.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytic::Poly2;
use crate::counterexample::{build_vm, vm_sampled, SequenceConfig, MIN_LOOP_SAMPLES};
use crate::degree::{BoundaryMap, PiecewiseAffineMap, PiecewiseConstant};
use crate::error::Result;
use crate::fractal_gen::{build_generator, iterate_prefractal};
use crate::geom::{Point, Rect};
use crate::holder::SampledFunction;

pub const DEFAULT_AFFINE_SEED: u64 = 17;
pub const DEFAULT_AFFINE_COUNT: usize = 50;
/// Triangle cap of the piecewise-affine corpus.
pub const MAX_TRIANGLES: usize = 200;
pub const DEFAULT_POLY_SEED: u64 = 29;
pub const DEFAULT_POLY_COUNT: usize = 20;

/// A named closed boundary map.
#[derive(Clone, Debug)]
pub struct BoundaryCase {
    pub name: &'static str,
    pub map: BoundaryMap,
    /// Cell size giving a tight `L^p` bracket for this map.
    pub h: f64,
}

fn circle_domain(n: usize) -> Vec<Point> {
    let mut d: Vec<Point> = (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            Point::new(t.cos(), t.sin())
        })
        .collect();
    d.push(d[0]);
    d
}

fn cmul(a: Point, b: Point) -> Point {
    Point::new(a.x * b.x - a.y * b.y, a.x * b.y + a.y * b.x)
}

/// Boundary maps with nonzero degree: the identity on the unit square,
/// `z^2` and `z^3 + 0.3 conj(z)` on the unit circle, and the single loop map
/// `v_0` on the unit square (one loop per side, degree 4 near the origin).
pub fn boundary_corpus() -> Result<Vec<BoundaryCase>> {
    let square = BoundaryMap::unit_square();
    let z2 = BoundaryMap::from_fn(circle_domain(256), |z| cmul(z, z))?;
    let cubic = BoundaryMap::from_fn(circle_domain(384), |z| {
        cmul(cmul(z, z), z) + Point::new(z.x, -z.y) * 0.3
    })?;
    let gen = build_generator(1.5, 0.7)?;
    let cfg = SequenceConfig::for_generator(&gen, 2.0)?;
    let vm = build_vm(&gen, 0, cfg.alpha_tilde, 64)?;
    let v0 = vm.boundary_map(&iterate_prefractal(&gen, 0)?)?;
    let h_loop = vm.inner_radius() / 64.0;
    Ok(vec![
        BoundaryCase { name: "square_identity", map: square, h: 1.0 / 128.0 },
        BoundaryCase { name: "circle_z2", map: z2, h: 1.0 / 128.0 },
        BoundaryCase { name: "circle_cubic", map: cubic, h: 1.0 / 128.0 },
        BoundaryCase { name: "loop_v0", map: v0, h: h_loop },
    ])
}

/// A piecewise-affine map of the unit square with a test function on the
/// target.
#[derive(Clone, Debug)]
pub struct AffineCase {
    pub map: PiecewiseAffineMap,
    pub phi: PiecewiseConstant,
}

/// `count` seeded piecewise-affine maps. Vertex images come from a random
/// quadratic map, so folds and orientation reversals are common; triangle
/// counts stay at or below [`MAX_TRIANGLES`].
pub fn affine_corpus(count: usize, seed: u64) -> Result<Vec<AffineCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (nx, ny) = loop {
            let nx = rng.gen_range(1..=10usize);
            let ny = rng.gen_range(1..=10usize);
            if 2 * nx * ny <= MAX_TRIANGLES {
                break (nx, ny);
            }
        };
        let (f1, f2) = (Poly2::random(2, &mut rng), Poly2::random(2, &mut rng));
        let map = PiecewiseAffineMap::grid(Rect::new(0.0, 0.0, 1.0, 1.0), nx, ny, |p| Point::new(f1.eval(p), f2.eval(p)));
        let bb = Rect::bounding(&map.images).expect("non-empty grid");
        let cells = rng.gen_range(4..=12usize);
        let h = (bb.width().max(bb.height()) + 0.5) / cells as f64;
        let origin = Point::new(bb.x0 - rng.gen_range(0.0..h), bb.y0 - rng.gen_range(0.0..h));
        let n = cells + 2;
        let values = (0..n * n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        out.push(AffineCase {
            map,
            phi: PiecewiseConstant::new(origin, h, n, n, values)?,
        });
    }
    Ok(out)
}

/// Polynomial maps `u`, vector fields `psi` and sample points for the
/// pointwise Jacobian identity.
#[derive(Clone, Debug)]
pub struct PolyCase {
    pub u: (Poly2, Poly2),
    pub psi: (Poly2, Poly2),
    pub samples: Vec<Point>,
}

pub fn polynomial_corpus(count: usize, seed: u64) -> Vec<PolyCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let du = 1 + k % 3;
            let u = (Poly2::random(du, &mut rng), Poly2::random(du, &mut rng));
            let psi = (Poly2::random(2, &mut rng), Poly2::random(2, &mut rng));
            let samples = (0..50)
                .map(|_| Point::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
                .collect();
            PolyCase { u, psi, samples }
        })
        .collect()
}

/// A sampled Hölder function with the queries used to probe its extension.
#[derive(Clone, Debug)]
pub struct ExtensionCase {
    pub name: &'static str,
    pub alpha: f64,
    pub f: SampledFunction,
    /// Off-site queries plus every site, so interpolation is checked too.
    pub queries: Vec<Point>,
}

fn grid_queries(r: Rect, n: usize) -> Vec<Point> {
    let mut q = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            q.push(Point::new(
                r.x0 + r.width() * (i as f64 + 0.5) / n as f64,
                r.y0 + r.height() * (j as f64 + 0.5) / n as f64,
            ));
        }
    }
    q
}

fn with_sites(f: &SampledFunction, mut q: Vec<Point>) -> Vec<Point> {
    q.extend_from_slice(f.sites());
    q
}

/// Five functions on sets of different shape: two points, a circle, a
/// random cloud, a Cantor dust and the loop sequence map `v_1`.
pub fn extension_corpus() -> Result<Vec<ExtensionCase>> {
    let mut out = Vec::new();

    let two = SampledFunction::scalar(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)], vec![0.0, 1.0])?;
    let mut q: Vec<Point> = (0..=200).map(|i| Point::new(-0.5 + 2.0 * i as f64 / 200.0, 0.0)).collect();
    q.extend(grid_queries(Rect::new(-0.5, -1.0, 1.5, 1.0), 15));
    out.push(ExtensionCase { name: "two_points", alpha: 1.0, queries: with_sites(&two, q), f: two });

    let circle: Vec<Point> = circle_domain(256)[..256].to_vec();
    let w = |p: Point| -> f64 { (0..=8).map(|k| 2f64.powf(-0.6 * k as f64) * (2f64.powi(k) * PI * p.x).cos()).sum() };
    let f = SampledFunction::from_scalar_fn(circle, w)?;
    let q = grid_queries(Rect::new(-1.2, -1.2, 1.2, 1.2), 31);
    out.push(ExtensionCase { name: "weierstrass_circle", alpha: 0.6, queries: with_sites(&f, q), f });

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cloud: Vec<Point> = (0..600)
        .map(|_| Point::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
        .collect();
    let f = SampledFunction::from_scalar_fn(cloud, |p| p.norm().sqrt())?;
    let q = grid_queries(Rect::new(-1.1, -1.1, 1.1, 1.1), 31);
    out.push(ExtensionCase { name: "radial_power_cloud", alpha: 0.5, queries: with_sites(&f, q), f });

    let mut dust = vec![Point::ORIGIN];
    for level in 1..=4 {
        let s = 0.25f64.powi(level - 1) * 0.75;
        dust = dust
            .iter()
            .flat_map(|&p| [Point::new(0.0, 0.0), Point::new(s, 0.0), Point::new(0.0, s), Point::new(s, s)].map(|o| p + o))
            .collect();
    }
    let f = SampledFunction::from_scalar_fn(dust, |p| p.x + (3.0 * p.y).sin())?;
    let q = grid_queries(Rect::new(0.0, 0.0, 1.0, 1.0), 33);
    out.push(ExtensionCase { name: "cantor_dust", alpha: 0.7, queries: with_sites(&f, q), f });

    let gen = build_generator(1.2, 0.7)?;
    let cfg = SequenceConfig::for_generator(&gen, 2.0)?;
    let vm = build_vm(&gen, 1, cfg.alpha_tilde, MIN_LOOP_SAMPLES)?;
    let f = vm_sampled(&vm.boundary_map(&iterate_prefractal(&gen, 1)?)?)?;
    let q = grid_queries(Rect::new(-0.1, -0.1, 1.1, 1.1), 31);
    out.push(ExtensionCase { name: "loop_v1", alpha: cfg.alpha_prime, queries: with_sites(&f, q), f });

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::{change_of_variables_check, jacobian_decomposition_check, JacobianMode};

    #[test]
    fn affine_corpus_is_deterministic_and_bounded() {
        let a = affine_corpus(10, 3).unwrap();
        let b = affine_corpus(10, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.map.triangles.len() <= MAX_TRIANGLES);
            assert_eq!(x.map.images, y.map.images);
            assert_eq!(x.phi.values, y.phi.values);
            assert!(x.map.validate().is_ok());
        }
    }

    #[test]
    fn affine_and_polynomial_identities() {
        for c in affine_corpus(8, DEFAULT_AFFINE_SEED).unwrap() {
            let r = change_of_variables_check(&c.map, &c.phi).unwrap();
            assert!(r.residual <= 1e-9, "{r:?}");
        }
        for c in polynomial_corpus(6, DEFAULT_POLY_SEED) {
            let r = jacobian_decomposition_check((&c.u.0, &c.u.1), (&c.psi.0, &c.psi.1), &c.samples, JacobianMode::Exact);
            assert!(r.max_residual <= 1e-9, "{r:?}");
        }
    }

    #[test]
    fn boundary_degrees() {
        let cases = boundary_corpus().unwrap();
        let expect = [1, 2, 3, 4];
        for (c, e) in cases.iter().zip(expect) {
            let idx = c.map.winding_index().unwrap();
            let y = if c.name == "square_identity" { Point::new(0.5, 0.5) } else { Point::new(0.0, 0.01) };
            assert_eq!(idx.winding(y).unwrap(), e, "{}", c.name);
        }
    }

    #[test]
    fn extension_corpus_shapes() {
        let cases = extension_corpus().unwrap();
        assert_eq!(cases.len(), 5);
        assert_eq!(cases[3].f.len(), 256);
        assert!(cases.iter().all(|c| c.queries.len() > c.f.len()));
    }
}

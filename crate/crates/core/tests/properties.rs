use std::collections::HashSet;

use fractal_degree::analytic::Poly2;
use fractal_degree::corpus::polynomial_corpus;
use fractal_degree::degree::{winding_by_angle, winding_number};
use fractal_degree::fractal_gen::build_generator;
use fractal_degree::holder::{holder_seminorm_exact, SampledFunction};
use fractal_degree::stokes::{jacobian_poly, mform_poly, OneForm};
use fractal_degree::whitney::{whitney_decompose, DomainOracle, PolygonDomain, WhitneyRule};
use fractal_degree::Point;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point() -> impl Strategy<Value = Point> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y)| Point::new(x, y))
}

/// Star-shaped closed polygon around the origin with `radii.len()` corners.
fn star(radii: &[f64], turns: i32) -> Vec<Point> {
    let n = radii.len();
    let mut v: Vec<Point> = (0..n * turns.unsigned_abs() as usize)
        .map(|k| {
            let t = turns.signum() as f64 * 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let r = radii[k % n];
            Point::new(r * t.cos(), r * t.sin())
        })
        .collect();
    v.push(v[0]);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn winding_matches_angle_sum(radii in prop::collection::vec(0.5..1.5f64, 3..12), y in point(), turns in -3i32..=3) {
        prop_assume!(turns != 0);
        let curve = star(&radii, turns);
        let w = winding_number(&curve, y);
        let angle = winding_by_angle(&curve, y);
        // Points on the curve may be rejected; elsewhere both agree.
        if let Ok(w) = w {
            prop_assert!((angle - w as f64).abs() < 1e-6, "{w} vs {angle}");
        }
        prop_assert_eq!(winding_number(&curve, Point::new(0.0, 0.0)).unwrap(), turns as i64);
        prop_assert_eq!(winding_number(&curve, Point::new(3.0, 0.2)).unwrap(), 0);
    }

    #[test]
    fn winding_is_translation_invariant(radii in prop::collection::vec(0.5..1.5f64, 3..10), y in point(), s in point()) {
        let curve = star(&radii, 1);
        let moved: Vec<Point> = curve.iter().map(|&p| p + s).collect();
        if let (Ok(a), Ok(b)) = (winding_number(&curve, y), winding_number(&moved, y + s)) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn mform_is_antisymmetric_with_jacobian_derivative(seed in any::<u64>(), p in point()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u1 = Poly2::random(3, &mut rng);
        let u2 = Poly2::random(3, &mut rng);
        let m12 = mform_poly(&u1, &u2);
        let m21 = mform_poly(&u2, &u1);
        let (a, b) = (m12.eval(p), m21.eval(p));
        prop_assert!((a.x + b.x).abs() < 1e-10 && (a.y + b.y).abs() < 1e-10);
        let j = jacobian_poly(&u1, &u2).eval(p);
        prop_assert!((m12.d(p) - j).abs() <= 1e-9 * (1.0 + j.abs()));
    }

    #[test]
    fn seminorm_scales_and_matches_brute_force(
        pts in prop::collection::vec((point(), -1.0..1.0f64), 2..40),
        c in -4.0..4.0f64,
        alpha in 0.2..1.0f64,
    ) {
        let mut seen = HashSet::new();
        let pts: Vec<(Point, f64)> = pts.into_iter().filter(|(p, _)| seen.insert((p.x.to_bits(), p.y.to_bits()))).collect();
        prop_assume!(pts.len() >= 2);
        let sites: Vec<Point> = pts.iter().map(|q| q.0).collect();
        let vals: Vec<f64> = pts.iter().map(|q| q.1).collect();
        let mut brute = 0.0f64;
        for i in 0..sites.len() {
            for j in 0..i {
                brute = brute.max((vals[i] - vals[j]).abs() / sites[i].dist(sites[j]).powf(alpha));
            }
        }
        let f = SampledFunction::scalar(sites.clone(), vals.clone()).unwrap();
        let est = holder_seminorm_exact(&f, alpha).unwrap();
        prop_assert!((est.seminorm - brute).abs() <= 1e-12 * brute.max(1.0), "{} vs {brute}", est.seminorm);
        let g = SampledFunction::scalar(sites, vals.iter().map(|v| c * v).collect()).unwrap();
        let scaled = holder_seminorm_exact(&g, alpha).unwrap().seminorm;
        prop_assert!((scaled - c.abs() * brute).abs() <= 1e-12 * (1.0 + scaled));
    }

    #[test]
    fn whitney_cubes_are_disjoint_and_inside(radii in prop::collection::vec(0.3..0.9f64, 3..8)) {
        let dom = PolygonDomain::new(&star(&radii, 1)).unwrap();
        let wd = whitney_decompose(&dom, 7, WhitneyRule::MaximalAdmissible).unwrap();
        let cubes: Vec<_> = wd.cubes().map(|c| c.cube).collect();
        prop_assert!(!cubes.is_empty());
        for (k, a) in cubes.iter().enumerate() {
            prop_assert!(dom.contains(a.center()).unwrap());
            for b in &cubes[..k] {
                prop_assert!(!a.overlaps(b), "{a:?} overlaps {b:?}");
            }
        }
        let area: f64 = cubes.iter().map(|c| c.side() * c.side()).sum();
        prop_assert!(area <= dom.signed_area() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generator_is_exactly_self_similar(d in 1.1..1.7f64, alpha in 0.5..0.9f64) {
        let g = build_generator(d, alpha).unwrap();
        prop_assert!((g.n as f64 * g.r.powf(d) - 1.0).abs() <= 1e-9);
        prop_assert!(g.r < 0.5);
        prop_assert!(2.0 * g.r.powf(1.0 - alpha) <= 1.0 + 1e-12);
    }
}

#[test]
fn corpora_are_deterministic() {
    let a = polynomial_corpus(5, 3);
    let b = polynomial_corpus(5, 3);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert_ne!(format!("{a:?}"), format!("{:?}", polynomial_corpus(5, 4)));
}

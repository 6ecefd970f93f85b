//! Analytic test functions: bivariate polynomials with exact derivatives and
//! trigonometric series whose mollifications have closed forms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Point;

/// Scalar field on the plane with an exact gradient.
pub trait ScalarField: Sync {
    fn value(&self, p: Point) -> f64;
    fn grad(&self, p: Point) -> Point;
    /// Largest angular frequency among terms with amplitude above
    /// `rel_tol` times the total; 0 for polynomials.
    fn max_frequency(&self, _rel_tol: f64) -> f64 {
        0.0
    }
}

/// Polynomial `sum c[i][j] x^i y^j` with `i + j <= deg`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly2 {
    deg: usize,
    c: Vec<f64>,
}

impl Poly2 {
    pub fn zero(deg: usize) -> Self {
        Poly2 {
            deg,
            c: vec![0.0; (deg + 1) * (deg + 1)],
        }
    }

    pub fn constant(v: f64) -> Self {
        Poly2 { deg: 0, c: vec![v] }
    }

    pub fn x() -> Self {
        let mut p = Poly2::zero(1);
        p.set(1, 0, 1.0);
        p
    }

    pub fn y() -> Self {
        let mut p = Poly2::zero(1);
        p.set(0, 1, 1.0);
        p
    }

    pub fn monomial(i: usize, j: usize, coeff: f64) -> Self {
        let mut p = Poly2::zero(i + j);
        p.set(i, j, coeff);
        p
    }

    /// Random polynomial of total degree `deg` with coefficients in [-1, 1].
    pub fn random<R: Rng>(deg: usize, rng: &mut R) -> Self {
        let mut p = Poly2::zero(deg);
        for i in 0..=deg {
            for j in 0..=deg - i {
                p.set(i, j, rng.gen_range(-1.0..=1.0));
            }
        }
        p
    }

    pub fn degree(&self) -> usize {
        self.deg
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i + j > self.deg {
            0.0
        } else {
            self.c[i * (self.deg + 1) + j]
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let d = self.deg + 1;
        self.c[i * d + j] = v;
    }

    fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let d = self.deg + 1;
        self.c[i * d + j] += v;
    }

    pub fn eval(&self, p: Point) -> f64 {
        // Horner in y for each power of x, then Horner in x
        let d = self.deg;
        let mut acc = 0.0;
        for i in (0..=d).rev() {
            let mut row = 0.0;
            for j in (0..=d - i).rev() {
                row = row * p.y + self.coeff(i, j);
            }
            acc = acc * p.x + row;
        }
        acc
    }

    pub fn dx(&self) -> Poly2 {
        let mut out = Poly2::zero(self.deg.saturating_sub(1));
        for i in 1..=self.deg {
            for j in 0..=self.deg - i {
                out.set(i - 1, j, i as f64 * self.coeff(i, j));
            }
        }
        out
    }

    pub fn dy(&self) -> Poly2 {
        let mut out = Poly2::zero(self.deg.saturating_sub(1));
        for i in 0..self.deg {
            for j in 1..=self.deg - i {
                out.set(i, j - 1, j as f64 * self.coeff(i, j));
            }
        }
        out
    }

    pub fn add(&self, o: &Poly2) -> Poly2 {
        let mut out = Poly2::zero(self.deg.max(o.deg));
        for src in [self, o] {
            for i in 0..=src.deg {
                for j in 0..=src.deg - i {
                    out.add_to(i, j, src.coeff(i, j));
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Poly2 {
        Poly2 {
            deg: self.deg,
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, o: &Poly2) -> Poly2 {
        self.add(&o.scale(-1.0))
    }

    pub fn mul(&self, o: &Poly2) -> Poly2 {
        let mut out = Poly2::zero(self.deg + o.deg);
        for i in 0..=self.deg {
            for j in 0..=self.deg - i {
                let a = self.coeff(i, j);
                if a == 0.0 {
                    continue;
                }
                for k in 0..=o.deg {
                    for l in 0..=o.deg - k {
                        out.add_to(i + k, j + l, a * o.coeff(k, l));
                    }
                }
            }
        }
        out
    }

    /// The composite `self(p(x, y), q(x, y))`.
    pub fn compose(&self, p: &Poly2, q: &Poly2) -> Poly2 {
        let mut ppow = vec![Poly2::constant(1.0)];
        let mut qpow = vec![Poly2::constant(1.0)];
        for k in 1..=self.deg {
            ppow.push(ppow[k - 1].mul(p));
            qpow.push(qpow[k - 1].mul(q));
        }
        let mut out = Poly2::constant(0.0);
        for i in 0..=self.deg {
            for j in 0..=self.deg - i {
                let a = self.coeff(i, j);
                if a != 0.0 {
                    out = out.add(&ppow[i].mul(&qpow[j]).scale(a));
                }
            }
        }
        out
    }
}

impl ScalarField for Poly2 {
    fn value(&self, p: Point) -> f64 {
        self.eval(p)
    }

    fn grad(&self, p: Point) -> Point {
        Point::new(self.dx().eval(p), self.dy().eval(p))
    }
}

/// Smoothing kernel profile on `[-t, t]`, applied separably in each axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Normalized tent `(1 - |s|/t)/t`.
    Tent,
    /// Normalized Epanechnikov `3/(4t) (1 - s^2/t^2)`.
    Quadratic,
}

impl Kernel {
    /// Fourier multiplier of the unit-scale kernel at frequency `u`.
    pub fn multiplier(self, u: f64) -> f64 {
        match self {
            Kernel::Tent => {
                let s = sinc(0.5 * u);
                s * s
            }
            Kernel::Quadratic => {
                if u.abs() < 1e-3 {
                    let u2 = u * u;
                    1.0 - u2 / 10.0 + u2 * u2 / 280.0
                } else {
                    3.0 * (u.sin() - u * u.cos()) / (u * u * u)
                }
            }
        }
    }

    /// Derivative of [`Kernel::multiplier`] with respect to `u`.
    pub fn multiplier_deriv(self, u: f64) -> f64 {
        match self {
            Kernel::Tent => {
                let z = 0.5 * u;
                sinc(z) * sinc_deriv(z)
            }
            Kernel::Quadratic => {
                if u.abs() < 1e-3 {
                    -u / 5.0 + u * u * u / 70.0
                } else {
                    let u2 = u * u;
                    3.0 * (u2 * u.sin() - 3.0 * (u.sin() - u * u.cos())) / (u2 * u2)
                }
            }
        }
    }
}

fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 - z * z / 6.0
    } else {
        z.sin() / z
    }
}

fn sinc_deriv(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        -z / 3.0
    } else {
        (z * z.cos() - z.sin()) / (z * z)
    }
}

/// One term `amp * cos(freq . x + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amp: f64,
    pub freq: Point,
    pub phase: f64,
}

/// `c0 + g . x + sum_k a_k cos(w_k . x + phi_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticFn {
    pub c0: f64,
    pub linear: Point,
    pub waves: Vec<Wave>,
}

impl AnalyticFn {
    pub fn affine(c0: f64, linear: Point) -> Self {
        AnalyticFn {
            c0,
            linear,
            waves: Vec::new(),
        }
    }

    /// Coordinate function `x_axis` (axis 0 or 1).
    pub fn coordinate(axis: usize) -> Self {
        let g = if axis == 0 { Point::new(1.0, 0.0) } else { Point::new(0.0, 1.0) };
        AnalyticFn::affine(0.0, g)
    }

    /// Truncated Weierstrass function `sum_{k<=kmax} 2^{-alpha k} cos(2^k pi x_axis)`,
    /// Hölder of order `alpha` uniformly in `kmax`.
    pub fn weierstrass(alpha: f64, kmax: u32, axis: usize) -> Self {
        let waves = (0..=kmax)
            .map(|k| {
                let w = std::f64::consts::PI * (1u64 << k) as f64;
                Wave {
                    amp: 2f64.powf(-alpha * k as f64),
                    freq: if axis == 0 { Point::new(w, 0.0) } else { Point::new(0.0, w) },
                    phase: 0.0,
                }
            })
            .collect();
        AnalyticFn {
            c0: 0.0,
            linear: Point::ORIGIN,
            waves,
        }
    }

    pub fn add(mut self, o: &AnalyticFn) -> Self {
        self.c0 += o.c0;
        self.linear = self.linear + o.linear;
        self.waves.extend_from_slice(&o.waves);
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.c0 *= s;
        self.linear = self.linear * s;
        for w in &mut self.waves {
            w.amp *= s;
        }
        self
    }

    /// Convolution with the separable kernel at scale `t`. Affine parts are
    /// reproduced exactly because the kernels are even.
    pub fn mollified(&self, kernel: Kernel, t: f64) -> AnalyticFn {
        let mut out = self.clone();
        for w in &mut out.waves {
            w.amp *= kernel.multiplier(w.freq.x * t) * kernel.multiplier(w.freq.y * t);
        }
        out
    }

    /// Derivative in `t` of [`AnalyticFn::mollified`].
    pub fn mollified_dt(&self, kernel: Kernel, t: f64) -> AnalyticFn {
        let waves = self
            .waves
            .iter()
            .map(|w| {
                let (ux, uy) = (w.freq.x * t, w.freq.y * t);
                let d = w.freq.x * kernel.multiplier_deriv(ux) * kernel.multiplier(uy)
                    + w.freq.y * kernel.multiplier(ux) * kernel.multiplier_deriv(uy);
                Wave { amp: w.amp * d, ..*w }
            })
            .collect();
        AnalyticFn {
            c0: 0.0,
            linear: Point::ORIGIN,
            waves,
        }
    }

    /// Sum of `|amp| * |freq|`, an upper bound for the Lipschitz constant of
    /// the oscillating part.
    pub fn lipschitz_bound(&self) -> f64 {
        self.linear.norm() + self.waves.iter().map(|w| w.amp.abs() * w.freq.norm()).sum::<f64>()
    }

    pub fn sup_bound(&self) -> f64 {
        self.waves.iter().map(|w| w.amp.abs()).sum()
    }
}

impl ScalarField for AnalyticFn {
    fn value(&self, p: Point) -> f64 {
        let mut v = self.c0 + self.linear.dot(p);
        for w in &self.waves {
            v += w.amp * (w.freq.dot(p) + w.phase).cos();
        }
        v
    }

    fn max_frequency(&self, rel_tol: f64) -> f64 {
        let total = self.sup_bound();
        self.waves
            .iter()
            .filter(|w| w.amp.abs() > rel_tol * total)
            .map(|w| w.freq.norm())
            .fold(0.0, f64::max)
    }

    fn grad(&self, p: Point) -> Point {
        let mut g = self.linear;
        for w in &self.waves {
            g = g - w.freq * (w.amp * (w.freq.dot(p) + w.phase).sin());
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_legendre, GL8};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn polynomial_algebra() {
        let p = Poly2::x().mul(&Poly2::x()).add(&Poly2::y().scale(3.0)); // x^2 + 3y
        let q = Poly2::x().mul(&Poly2::y()); // xy
        let pt = Point::new(0.7, -1.3);
        assert!((p.eval(pt) - (0.49 - 3.9)).abs() < 1e-15);
        assert!((p.dx().eval(pt) - 1.4).abs() < 1e-15);
        assert!((p.dy().eval(pt) - 3.0).abs() < 1e-15);
        // p(q, y) = (xy)^2 + 3y
        let c = p.compose(&q, &Poly2::y());
        let want = (pt.x * pt.y).powi(2) + 3.0 * pt.y;
        assert!((c.eval(pt) - want).abs() < 1e-14);
    }

    #[test]
    fn random_composition_matches_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = Poly2::random(3, &mut rng);
        let a = Poly2::random(2, &mut rng);
        let b = Poly2::random(2, &mut rng);
        let c = f.compose(&a, &b);
        for _ in 0..50 {
            let pt = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let want = f.eval(Point::new(a.eval(pt), b.eval(pt)));
            assert!((c.eval(pt) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_multipliers_match_quadrature() {
        for kernel in [Kernel::Tent, Kernel::Quadratic] {
            for &w in &[0.3, 2.0, 17.0] {
                let t = 0.4;
                let prof = |s: f64| match kernel {
                    Kernel::Tent => (1.0 - s.abs() / t) / t,
                    Kernel::Quadratic => 0.75 / t * (1.0 - s * s / (t * t)),
                };
                let mut direct = 0.0;
                let n = 64;
                for k in 0..n {
                    let a = -t + 2.0 * t * k as f64 / n as f64;
                    let b = a + 2.0 * t / n as f64;
                    direct += gauss_legendre(&GL8, a, b, |s| prof(s) * (w * s).cos());
                }
                assert!((direct - kernel.multiplier(w * t)).abs() < 1e-10, "{kernel:?} {w}");
                let h = 1e-6;
                let fd = (kernel.multiplier(w * t + h) - kernel.multiplier(w * t - h)) / (2.0 * h);
                assert!((fd - kernel.multiplier_deriv(w * t)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn mollification_keeps_affine_part() {
        let f = AnalyticFn::affine(1.0, Point::new(2.0, -1.0)).add(&AnalyticFn::weierstrass(0.5, 4, 0));
        let g = f.mollified(Kernel::Tent, 0.1);
        assert_eq!(g.c0, 1.0);
        assert_eq!(g.linear, Point::new(2.0, -1.0));
        assert!(g.waves[4].amp.abs() < f.waves[4].amp.abs());
        let p = Point::new(0.3, 0.2);
        let h = 1e-6;
        let fd = (f.mollified(Kernel::Tent, 0.1 + h).value(p) - f.mollified(Kernel::Tent, 0.1 - h).value(p)) / (2.0 * h);
        assert!((fd - f.mollified_dt(Kernel::Tent, 0.1).value(p)).abs() < 1e-6);
    }
}

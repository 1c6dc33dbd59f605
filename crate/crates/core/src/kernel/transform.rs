//! Fourier symbol of the kernel.
//!
//! `K̂(0) − K̂(ξ) = a I + b T₂(ξ̂) + c T₃(ξ̂)` where the scalar coefficients
//! depend only on `|ξ|` and follow from the three eigenvalue drops of the
//! isotropic kernel.

use std::f64::consts::{FRAC_PI_2, PI};

use super::{direction_tensors, KernelError, KernelSpec, ProfileForm, RadialProfile};
use crate::basis::{Mat5, Vec3};
use crate::quadrature::GaussRule;
use crate::special::{one_minus_j0, sph_bessel};

/// Coefficients of the symbol drop at one wavenumber.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymbolDrop {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SymbolDrop {
    pub fn matrix(&self, xi_hat: &Vec3) -> Mat5 {
        let (t2, t3) = direction_tensors(xi_hat);
        Mat5::identity() * self.a + t2 * self.b + t3 * self.c
    }
}

/// Legendre coefficients `(c₀, c₂, c₄)` of the eigenmode `m` restricted to
/// profile `n`, as functions of `ξ̂·ẑ`.
const LEGENDRE: [[[f64; 3]; 3]; 3] = [
    // n = 1
    [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
    // n = 2, modes m = 0, 1, 2
    [
        [1.0 / 3.0, 1.0 / 3.0, 0.0],
        [1.0 / 3.0, 1.0 / 6.0, 0.0],
        [1.0 / 3.0, -1.0 / 3.0, 0.0],
    ],
    // n = 3
    [
        [2.0 / 15.0, 4.0 / 21.0, 12.0 / 35.0],
        [2.0 / 15.0, 2.0 / 21.0, -8.0 / 35.0],
        [2.0 / 15.0, -4.0 / 21.0, 2.0 / 35.0],
    ],
];

/// Radial integrand kinds: `1 − j₀`, `j₂`, `j₄`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    D0,
    J2,
    J4,
}

impl Kind {
    fn eval(self, x: f64) -> f64 {
        match self {
            Kind::D0 => one_minus_j0(x),
            Kind::J2 => sph_bessel(2, x),
            Kind::J4 => sph_bessel(4, x),
        }
    }

    fn order(self) -> usize {
        match self {
            Kind::D0 => 0,
            Kind::J2 => 2,
            Kind::J4 => 4,
        }
    }
}

const SPLIT: f64 = 8.0;
const BODY: f64 = 400.0;

/// Precomputed radial transforms for every profile of a kernel.
#[derive(Clone, Debug)]
pub struct KernelTransform {
    spec: KernelSpec,
    rule: GaussRule,
    /// `∫_8^∞ x^{2−q} F(x) dx` for unbounded inverse-power profiles.
    far: [Option<[f64; 3]>; 3],
}

impl KernelTransform {
    pub fn new(spec: &KernelSpec) -> Result<Self, KernelError> {
        spec.check_integrable()?;
        let rule = GaussRule::new(16);
        let mut far = [None; 3];
        for (i, p) in spec.profiles().iter().enumerate() {
            if p.is_zero() || p.form != ProfileForm::InversePower || p.r_max.is_some() {
                continue;
            }
            let q = p.exponent;
            let mut v = [0.0; 3];
            for (j, kind) in [Kind::D0, Kind::J2, Kind::J4].into_iter().enumerate() {
                v[j] = scaled_integral(&rule, q, kind, SPLIT, f64::INFINITY);
            }
            far[i] = Some(v);
        }
        Ok(KernelTransform {
            spec: spec.clone(),
            rule,
            far,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// `[∫gₙ(1−j₀(κr))r²dr, ∫gₙ j₂(κr) r²dr, ∫gₙ j₄(κr) r²dr]`.
    fn radial(&self, n: usize, kappa: f64) -> [f64; 3] {
        let p = self.spec.profiles()[n];
        if p.is_zero() {
            return [0.0; 3];
        }
        if kappa == 0.0 {
            return [0.0; 3];
        }
        match p.form {
            ProfileForm::InversePower => self.radial_inverse_power(n, p, kappa),
            _ => self.radial_generic(p, kappa),
        }
    }

    fn radial_inverse_power(&self, n: usize, p: &RadialProfile, kappa: f64) -> [f64; 3] {
        let q = p.exponent;
        let lo = kappa * p.r0;
        let hi = p.r_max.map_or(f64::INFINITY, |r| kappa * r);
        let scale = p.coefficient * kappa.powf(q - 3.0);
        let mut out = [0.0; 3];
        for (j, kind) in [Kind::D0, Kind::J2, Kind::J4].into_iter().enumerate() {
            let v = match self.far[n] {
                Some(far) if lo < SPLIT => scaled_integral(&self.rule, q, kind, lo, SPLIT) + far[j],
                _ => scaled_integral(&self.rule, q, kind, lo, hi),
            };
            out[j] = scale * v;
        }
        out
    }

    fn radial_generic(&self, p: &RadialProfile, kappa: f64) -> [f64; 3] {
        let (lo, hi) = p.support();
        let hi = hi.expect("non-power profiles have compact support");
        let mut knots = vec![lo];
        if let ProfileForm::Table { r, .. } = &p.form {
            knots.extend(r.iter().copied().filter(|x| *x > lo && *x < hi));
        }
        knots.push(hi);
        let width = (2.0 / kappa).max(1e-12);
        let mut out = [0.0; 3];
        for w in knots.windows(2) {
            let pieces = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
            let step = (w[1] - w[0]) / pieces as f64;
            for k in 0..pieces {
                let a = w[0] + k as f64 * step;
                let b = if k + 1 == pieces { w[1] } else { a + step };
                for (j, kind) in [Kind::D0, Kind::J2, Kind::J4].into_iter().enumerate() {
                    out[j] += self.rule.integrate(a, b, |r| p.eval(r) * kind.eval(kappa * r) * r * r);
                }
            }
        }
        out
    }

    /// Drops `K̂(0) − K̂(ξ)` of the eigenvalues for modes `m = 0, 1, 2`.
    pub fn eigen_drops(&self, kappa: f64) -> [f64; 3] {
        let mut d = [0.0; 3];
        for n in 0..3 {
            let [d0, h2, h4] = self.radial(n, kappa);
            for m in 0..3 {
                let [c0, c2, c4] = LEGENDRE[n][m];
                d[m] += 4.0 * PI * (c0 * d0 + c2 * h2 - c4 * h4);
            }
        }
        d
    }

    pub fn drop_coefficients(&self, kappa: f64) -> SymbolDrop {
        let [d0, d1, d2] = self.eigen_drops(kappa);
        let b = 2.0 * (d1 - d2);
        SymbolDrop {
            a: d2,
            b,
            c: 1.5 * (d0 - d2) - b,
        }
    }

    /// The 5×5 matrix `K̂(0) − K̂(ξ)`.
    pub fn drop_matrix(&self, xi: &Vec3) -> Mat5 {
        let kappa = xi.norm();
        if kappa == 0.0 {
            return Mat5::zeros();
        }
        self.drop_coefficients(kappa).matrix(&(xi / kappa))
    }
}

/// `∫_a^b x^{2−q} F(x) dx` with geometric panels below 8, unit-width-2
/// panels to `max(a, 8) + 400` and an asymptotic tail beyond.
fn scaled_integral(rule: &GaussRule, q: f64, kind: Kind, a: f64, b: f64) -> f64 {
    let f = |x: f64| x.powf(2.0 - q) * kind.eval(x);
    let mut s = 0.0;
    let mut x = a;
    if x < SPLIT {
        if x <= 0.0 {
            // leading small-x behaviour: F ~ x^ℓ/(2ℓ+1)!! or x²/6
            let x0: f64 = 1e-6;
            let (pow, coeff) = match kind {
                Kind::D0 => (2.0, 1.0 / 6.0),
                Kind::J2 => (2.0, 1.0 / 15.0),
                Kind::J4 => (4.0, 1.0 / 945.0),
            };
            let e = 3.0 - q + pow;
            s += coeff * x0.powf(e) / e;
            x = x0;
        }
        let end = SPLIT.min(b);
        while x < end {
            let next = (2.0 * x).min(end);
            s += rule.integrate(x, next, f);
            x = next;
        }
        if b <= SPLIT {
            return s;
        }
    }
    let body_end = (x + BODY).min(b);
    while x < body_end {
        let next = (x + 2.0).min(body_end);
        s += rule.integrate(x, next, f);
        x = next;
    }
    if b > body_end {
        s += tail(q, kind, body_end);
        if b.is_finite() {
            s -= tail(q, kind, b);
        }
    }
    s
}

/// Leading asymptotics of `∫_X^∞ x^{2−q} F(x) dx`.
fn tail(q: f64, kind: Kind, x: f64) -> f64 {
    let phase = x - kind.order() as f64 * FRAC_PI_2;
    let osc = x.powf(1.0 - q) * phase.cos() - (1.0 - q) * x.powf(-q) * phase.sin();
    match kind {
        Kind::D0 => x.powf(3.0 - q) / (q - 3.0) - osc,
        _ => osc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::QTensor;
    use crate::kernel::{quadrature_form, rank_one_gradient, QuadratureSpec};
    use approx::assert_relative_eq;

    fn unit() -> KernelSpec {
        KernelSpec::inverse_power([1.0, 1.0, 1.0], 6.0, 0.1)
    }

    #[test]
    fn large_wavenumber_recovers_zeroth_moment() {
        let t = KernelTransform::new(&unit()).unwrap();
        let k0 = crate::kernel::moments(&unit(), &QuadratureSpec::default()).unwrap().k0;
        let d = t.eigen_drops(1e4);
        // drops tend to K̂(0) = k₀ I
        for v in d {
            assert_relative_eq!(v, k0, max_relative = 1e-3);
        }
    }

    #[test]
    fn small_wavenumber_matches_second_moment() {
        let spec = unit();
        let t = KernelTransform::new(&spec).unwrap();
        let q = QuadratureSpec::default();
        let xi = Vec3::new(0.3, -0.2, 0.5) * 1e-3;
        let p = QTensor::new([0.4, -0.1, 0.3, 0.2, -0.6]);
        let m = t.drop_matrix(&xi);
        let lhs = p.0.dot(&(m * p.0));
        let rhs = 0.5 * quadrature_form(&spec, &q, &rank_one_gradient(&p.matrix(), &xi)).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-4);
    }

    #[test]
    fn direct_angular_quadrature_oracle() {
        // K̂(0) − K̂(ξ) = ∫ K(z)(1 − cos ξ·z) dz by brute force on a truncated kernel
        let spec = KernelSpec {
            g1: RadialProfile::inverse_power(1.0, 6.0, 0.1).with_r_max(2.0),
            g2: RadialProfile::inverse_power(0.7, 6.0, 0.1).with_r_max(2.0),
            g3: RadialProfile::inverse_power(0.4, 6.0, 0.1).with_r_max(2.0),
            m_bound: None,
        };
        let t = KernelTransform::new(&spec).unwrap();
        let xi = Vec3::new(1.1, 2.3, -0.7);
        let m = t.drop_matrix(&xi);
        let ang = crate::quadrature::AngularRule::new(48);
        let rule = GaussRule::new(16);
        let mut brute = Mat5::zeros();
        let panels = 64;
        let ratio = (2.0f64 / 0.1).powf(1.0 / panels as f64);
        let mut a = 0.1;
        for _ in 0..panels {
            let b = a * ratio;
            let half = 0.5 * (b - a);
            for (x, w) in rule.x.iter().zip(&rule.w) {
                let r = 0.5 * (a + b) + half * x;
                for (d, wd) in ang.dirs.iter().zip(&ang.weights) {
                    let z = d * r;
                    let k = crate::kernel::kernel_matrix(&spec, &z);
                    brute += k * (w * half * wd * r * r * (1.0 - xi.dot(&z).cos()));
                }
            }
            a = b;
        }
        assert_relative_eq!(m, brute, max_relative = 1e-6, epsilon = 1e-6 * brute.amax());
    }

    #[test]
    fn table_profile_matches_power_law() {
        let r: Vec<f64> = (0..=2000).map(|i| 0.5 + i as f64 * 1.5 / 2000.0).collect();
        let g: Vec<f64> = r.iter().map(|x| x.powf(-6.0)).collect();
        let table = KernelSpec {
            g1: RadialProfile {
                form: ProfileForm::Table { r, g },
                coefficient: 1.0,
                exponent: 0.0,
                r0: 0.0,
                r_max: None,
            },
            ..KernelSpec::zero()
        };
        let power = KernelSpec {
            g1: RadialProfile::inverse_power(1.0, 6.0, 0.5).with_r_max(2.0),
            ..KernelSpec::zero()
        };
        let a = KernelTransform::new(&table).unwrap().eigen_drops(3.0);
        let b = KernelTransform::new(&power).unwrap().eigen_drops(3.0);
        assert_relative_eq!(a[0], b[0], max_relative = 1e-5);
    }
}

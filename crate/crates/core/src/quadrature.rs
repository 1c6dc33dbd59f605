//! Gauss–Legendre rules and the angular product rule on the unit sphere.

use std::f64::consts::{PI, TAU};

use crate::basis::Vec3;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [−1, 1],
/// nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, z);
                dp = d;
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let nf = n as f64;
    let d = nf * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|t| half * t).collect(),
    )
}

/// Reusable rule on [−1, 1] for integrating over many intervals.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        GaussRule { x, w }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut s = 0.0;
        for (x, w) in self.x.iter().zip(&self.w) {
            s += w * f(mid + half * x);
        }
        s * half
    }
}

/// Restriction of the azimuthal range; `Wedge` is a diagnostic that breaks
/// the rotational symmetry of the rule on purpose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AngularDomain {
    Full,
    Wedge { phi_max: f64 },
}

/// Product rule on S²: Gauss–Legendre in cos θ and the trapezoid rule in φ.
#[derive(Clone, Debug)]
pub struct AngularRule {
    pub dirs: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl AngularRule {
    /// `order` Gauss points in cos θ and `2·order` equispaced azimuths.
    pub fn new(order: usize) -> Self {
        Self::with_domain(order, AngularDomain::Full)
    }

    pub fn with_domain(order: usize, domain: AngularDomain) -> Self {
        let (u, wu) = gauss_legendre(order);
        let n_phi = 2 * order;
        let mut dirs = Vec::with_capacity(order * n_phi);
        let mut weights = Vec::with_capacity(order * n_phi);
        for (ui, wi) in u.iter().zip(&wu) {
            let s = (1.0 - ui * ui).max(0.0).sqrt();
            for j in 0..n_phi {
                let (phi, wphi) = match domain {
                    AngularDomain::Full => (TAU * j as f64 / n_phi as f64, TAU / n_phi as f64),
                    AngularDomain::Wedge { phi_max } => {
                        let d = phi_max / n_phi as f64;
                        ((j as f64 + 0.5) * d, d)
                    }
                };
                dirs.push(Vec3::new(s * phi.cos(), s * phi.sin(), *ui));
                weights.push(wi * wphi);
            }
        }
        AngularRule { dirs, weights }
    }

    pub fn integrate<F: FnMut(&Vec3) -> f64>(&self, mut f: F) -> f64 {
        self.dirs
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w * f(d))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1, 2, 5, 16, 64] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((approx - exact).abs() < 1e-14, "n={n}");
            let even = 2 * (n - 1);
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(even as i32)).sum();
            assert_relative_eq!(approx, 2.0 / (even as f64 + 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn nodes_are_symmetric_and_sorted() {
        let (x, _) = gauss_legendre(9);
        for i in 0..9 {
            assert_eq!(x[i], -x[8 - i]);
        }
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn sphere_rule_moments() {
        let rule = AngularRule::new(8);
        let four_pi = 4.0 * PI;
        assert_relative_eq!(rule.integrate(|_| 1.0), four_pi, epsilon = 1e-13);
        assert_relative_eq!(rule.integrate(|w| w[0].powi(2)), four_pi / 3.0, epsilon = 1e-13);
        assert_relative_eq!(rule.integrate(|w| w[0].powi(4)), four_pi / 5.0, epsilon = 1e-13);
        assert_relative_eq!(
            rule.integrate(|w| w[0].powi(2) * w[1].powi(2) * w[2].powi(2)),
            four_pi / 105.0,
            epsilon = 1e-13
        );
    }
}

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{KernelError, KernelSpec, QuadratureSpec};
use crate::basis::{random_rotation, Mat3, QTensor, Vec3};
use crate::quadrature::{AngularDomain, AngularRule, GaussRule};

/// Gradient of a Q-field at a point: `gq[γ] = ∂_γ Q`.
pub type GradQ = [Mat3; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    #[serde(rename = "G1_100")]
    pub g1_100: f64,
    #[serde(rename = "G2_110")]
    pub g2_110: f64,
    #[serde(rename = "G2_200")]
    pub g2_200: f64,
    #[serde(rename = "G3_111")]
    pub g3_111: f64,
    #[serde(rename = "G3_210")]
    pub g3_210: f64,
    #[serde(rename = "G3_300")]
    pub g3_300: f64,
    pub k0: f64,
    /// `∫g₁`, `∫g₂ ẑ₁²`, `(2/3)∫g₃ ẑ₁⁴`.
    pub k0_parts: [f64; 3],
    /// `∫g₃ ẑ₁⁴` without the 2/3 factor (alternative bookkeeping of the
    /// third contribution).
    pub k0_third_unweighted: f64,
    /// `∫gₙ dz` over R³ for each profile.
    pub zeroth_moments: [f64; 3],
    /// `∫gₙ |z|² dz` over R³ for each profile.
    pub second_moments: [f64; 3],
}

impl MomentTable {
    pub fn is_finite(&self) -> bool {
        [
            self.g1_100,
            self.g2_110,
            self.g2_200,
            self.g3_111,
            self.g3_210,
            self.g3_300,
            self.k0,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Closed-form Frank constants per unit `s*²`: `(K₁, K₂)`.
    pub fn frank_formula(&self) -> (f64, f64) {
        let k1 = 2.0 * self.g1_100 + self.g2_110 + self.g2_200 + self.g3_300 - self.g3_210;
        let k2 = 2.0 * (self.g1_100 + self.g2_110 + self.g3_210 - self.g3_111);
        (k1, k2)
    }
}

/// Radial moments `∫ gₙ r^m dr` for the three profiles.
fn radial_moments(spec: &KernelSpec, m: f64, quad: &QuadratureSpec) -> Result<[f64; 3], KernelError> {
    let mut out = [0.0; 3];
    for (i, p) in spec.profiles().iter().enumerate() {
        out[i] = p.radial_moment(m, quad).map_err(|e| match e {
            KernelError::NotIntegrable { reason, .. } => KernelError::NotIntegrable { profile: i + 1, reason },
            other => other,
        })?;
    }
    Ok(out)
}

pub fn moments(spec: &KernelSpec, quad: &QuadratureSpec) -> Result<MomentTable, KernelError> {
    quad.validate()?;
    spec.check_integrable()?;
    let r4 = radial_moments(spec, 4.0, quad)?;
    let r2 = radial_moments(spec, 2.0, quad)?;
    let rule = AngularRule::new(quad.angular_order);
    let sph = |f: &dyn Fn(&Vec3) -> f64| rule.integrate(f);
    let s_100 = sph(&|w| w[0] * w[0]);
    let s_110 = sph(&|w| w[0] * w[0] * w[1] * w[1]);
    let s_200 = sph(&|w| w[0].powi(4));
    let s_111 = sph(&|w| (w[0] * w[1] * w[2]).powi(2));
    let s_210 = sph(&|w| w[0].powi(4) * w[1] * w[1]);
    let s_300 = sph(&|w| w[0].powi(6));
    let s_0 = sph(&|_| 1.0);
    let zeroth = [s_0 * r2[0], s_0 * r2[1], s_0 * r2[2]];
    let second = [s_0 * r4[0], s_0 * r4[1], s_0 * r4[2]];
    let k0_parts = [zeroth[0], r2[1] * s_100, 2.0 / 3.0 * r2[2] * s_200];
    let table = MomentTable {
        g1_100: r4[0] * s_100,
        g2_110: r4[1] * s_110,
        g2_200: r4[1] * s_200,
        g3_111: r4[2] * s_111,
        g3_210: r4[2] * s_210,
        g3_300: r4[2] * s_300,
        k0: k0_parts.iter().sum(),
        k0_parts,
        k0_third_unweighted: r2[2] * s_200,
        zeroth_moments: zeroth,
        second_moments: second,
    };
    if !table.is_finite() {
        return Err(KernelError::InvalidQuadrature("non-finite moment".into()));
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticCoefficients {
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "L3")]
    pub l3: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "K3")]
    pub k3: f64,
    pub s_star: f64,
    pub s_star_scaling_applied: bool,
    /// Relative residual of the fourth (consistency) probe.
    pub probe_residual: f64,
}

impl ElasticCoefficients {
    /// Frank constants of the tensor form `(L₁, L₂, L₃)` at order `s_star`.
    pub fn from_l(l1: f64, l2: f64, l3: f64, s_star: f64) -> Self {
        let s2 = s_star * s_star;
        let k1 = (2.0 * l1 + l2 + l3) * s2;
        ElasticCoefficients {
            l1,
            l2,
            l3,
            k1,
            k2: 2.0 * l1 * s2,
            k3: k1,
            s_star,
            s_star_scaling_applied: s_star != 1.0,
            probe_residual: 0.0,
        }
    }

    /// Coefficients of a pure Dirichlet form `κ|∇Q|²` (one-constant case).
    pub fn one_constant(l1: f64, s_star: f64) -> Self {
        ElasticCoefficients::from_l(l1, 0.0, 0.0, s_star)
    }

    /// Saddle-splay coefficient paired with the Frank constants so that the
    /// director energy reproduces the tensor form exactly.
    pub fn k24(&self) -> f64 {
        (2.0 * self.l1 + self.l3) * self.s_star * self.s_star
    }

    pub fn ratio(&self) -> f64 {
        (self.k1 - self.k2).abs() / self.k1
    }
}

fn check_traceless(gq: &GradQ) -> Result<(), KernelError> {
    let mut scale: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for m in gq {
        scale = scale.max(m.amax());
        defect = defect.max((m - m.transpose()).amax()).max(m.trace().abs());
    }
    if defect > 1e-10 * scale.max(1.0) {
        return Err(KernelError::NotTraceless(defect));
    }
    Ok(())
}

/// `L₁ Q_{αβ,γ}Q_{αβ,γ} + L₂ Q_{αβ,β}Q_{αγ,γ} + L₃ Q_{αβ,γ}Q_{αγ,β}`.
pub fn quadratic_form(c: &ElasticCoefficients, gq: &GradQ) -> Result<f64, KernelError> {
    check_traceless(gq)?;
    Ok(quadratic_form_unchecked(c.l1, c.l2, c.l3, gq))
}

pub(crate) fn invariants(gq: &GradQ) -> [f64; 3] {
    let mut i1 = 0.0;
    let mut i3 = 0.0;
    let mut div = Vector3::<f64>::zeros();
    for a in 0..3 {
        for b in 0..3 {
            div[a] += gq[b][(a, b)];
            for g in 0..3 {
                i1 += gq[g][(a, b)] * gq[g][(a, b)];
                i3 += gq[g][(a, b)] * gq[b][(a, g)];
            }
        }
    }
    [i1, div.norm_squared(), i3]
}

#[inline]
pub(crate) fn quadratic_form_unchecked(l1: f64, l2: f64, l3: f64, gq: &GradQ) -> f64 {
    let [i1, i2, i3] = invariants(gq);
    l1 * i1 + l2 * i2 + l3 * i3
}

/// `∫ K(z)(z·∇)Q·(z·∇)Q dz` by radial × angular product quadrature.
pub fn quadrature_form(spec: &KernelSpec, quad: &QuadratureSpec, gq: &GradQ) -> Result<f64, KernelError> {
    let r4 = radial_moments(spec, 4.0, quad)?;
    let rule = AngularRule::new(quad.angular_order);
    Ok(angular_form(&rule, &r4, gq))
}

fn angular_form(rule: &AngularRule, r4: &[f64; 3], gq: &GradQ) -> f64 {
    let (mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0);
    for (w, wt) in rule.dirs.iter().zip(&rule.weights) {
        let m: Matrix3<f64> = gq[0] * w[0] + gq[1] * w[1] + gq[2] * w[2];
        let mw = m * w;
        f1 += wt * m.norm_squared();
        f2 += wt * mw.norm_squared();
        f3 += wt * w.dot(&mw).powi(2);
    }
    r4[0] * f1 + r4[1] * f2 + r4[2] * f3
}

fn outer(a: &Vec3, b: &Vec3) -> Mat3 {
    a * b.transpose()
}

/// `A ⊗ e` as a gradient: `∂_γ Q = A e_γ`.
pub fn rank_one_gradient(a: &Mat3, e: &Vec3) -> GradQ {
    [a * e[0], a * e[1], a * e[2]]
}

/// The four probe gradients used to extract `(L₁, L₂, L₃)`; the last one is
/// only used as a consistency check.
pub fn probe_gradients() -> [GradQ; 4] {
    let e = |i| Vec3::ith(i, 1.0);
    let d = outer(&e(0), &e(0)) - outer(&e(1), &e(1));
    let x = outer(&e(0), &e(1)) + outer(&e(1), &e(0));
    let p1 = rank_one_gradient(&d, &e(2));
    let p2 = rank_one_gradient(&d, &e(1));
    let mut p3 = rank_one_gradient(&x, &e(0));
    let extra = rank_one_gradient(&d, &e(1));
    for g in 0..3 {
        p3[g] += extra[g];
    }
    let a = QTensor::new([0.3, -0.7, 0.2, 0.5, -0.1]).matrix();
    let b = QTensor::new([-0.4, 0.1, 0.6, 0.2, 0.3]).matrix();
    let c = QTensor::new([0.2, 0.2, -0.3, 0.1, 0.8]).matrix();
    [p1, p2, p3, [a, b, c]]
}

pub fn elastic_tensor(spec: &KernelSpec, quad: &QuadratureSpec, s_star: f64) -> Result<ElasticCoefficients, KernelError> {
    quad.validate()?;
    spec.check_integrable()?;
    let r4 = radial_moments(spec, 4.0, quad)?;
    let rule = AngularRule::new(quad.angular_order);
    let probes = probe_gradients();
    let mut a = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (row, p) in probes[..3].iter().enumerate() {
        let inv = invariants(p);
        for col in 0..3 {
            a[(row, col)] = inv[col];
        }
        rhs[row] = angular_form(&rule, &r4, p);
    }
    let det = a.determinant();
    if det.abs() < 1e-12 {
        return Err(KernelError::SingularProbeSystem(det));
    }
    let l = a
        .lu()
        .solve(&rhs)
        .ok_or(KernelError::SingularProbeSystem(det))?;
    let check = angular_form(&rule, &r4, &probes[3]);
    let predicted = quadratic_form_unchecked(l[0], l[1], l[2], &probes[3]);
    let probe_residual = (check - predicted).abs() / check.abs().max(f64::MIN_POSITIVE);
    Ok(ElasticCoefficients {
        probe_residual,
        ..ElasticCoefficients::from_l(l[0], l[1], l[2], s_star)
    })
}

/// Largest relative deviation of the quadrature form between `A⊗e` and the
/// rotated gradient `RAR^T ⊗ Re` over random rotations.
pub fn frame_check(spec: &KernelSpec, quad: &QuadratureSpec, trials: usize, seed: u64) -> Result<f64, KernelError> {
    let r4 = radial_moments(spec, 4.0, quad)?;
    let rule = AngularRule::new(quad.angular_order);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let r = random_rotation(&mut rng);
        let a = QTensor::new(std::array::from_fn(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0))).matrix();
        let e = crate::basis::random_unit(&mut rng);
        let base = angular_form(&rule, &r4, &rank_one_gradient(&a, &e));
        let rot = angular_form(&rule, &r4, &rank_one_gradient(&(r * a * r.transpose()), &(r * e)));
        worst = worst.max((base - rot).abs() / base.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Normalized `∫(z₁⁴ − 3z₁²z₂²) g` over `∫(z₁⁴ + 3z₁²z₂²) g`, with `g` the
/// smallest eigenvalue profile of the kernel.
pub fn odd_moment_check(spec: &KernelSpec, quad: &QuadratureSpec) -> Result<f64, KernelError> {
    odd_moment_check_on(spec, quad, AngularDomain::Full)
}

/// As [`odd_moment_check`] but integrating over a restricted angular domain.
pub fn odd_moment_check_on(spec: &KernelSpec, quad: &QuadratureSpec, domain: AngularDomain) -> Result<f64, KernelError> {
    spec.check_shapes()?;
    let lo = spec.inner_radius();
    let hi = match spec.outer_radius() {
        Some(h) => h,
        None => {
            for (i, p) in spec.profiles().iter().enumerate() {
                if !p.radial_moment_finite(6.0) {
                    return Err(KernelError::NotIntegrable {
                        profile: i + 1,
                        reason: "fourth moment is infinite".into(),
                    });
                }
            }
            lo.max(1e-3) * 1e4
        }
    };
    if !lo.is_finite() {
        return Ok(0.0);
    }
    let g = |r: f64| spec.eigenvalues(r).iter().copied().fold(f64::INFINITY, f64::min);
    let rule = GaussRule::new(8);
    let panels = (quad.radial_nodes / 8).max(4);
    let start = if lo > 0.0 { lo } else { hi * 1e-8 };
    let ratio = (hi / start).powf(1.0 / panels as f64);
    let mut radial = 0.0;
    let mut a = start;
    for k in 0..panels {
        let b = if k + 1 == panels { hi } else { a * ratio };
        radial += rule.integrate(a, b, |r| g(r) * r.powi(6));
        a = b;
    }
    let ang = AngularRule::with_domain(quad.angular_order, domain);
    let num = ang.integrate(|w| w[0].powi(4) - 3.0 * w[0] * w[0] * w[1] * w[1]);
    let den = ang.integrate(|w| w[0].powi(4) + 3.0 * w[0] * w[0] * w[1] * w[1]);
    let den = radial * den;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(radial * num / den)
}

/// Exact sphere integral `∫_{S²} ω₁^{2a} ω₂^{2b} ω₃^{2c}`.
pub fn sphere_monomial(a: u32, b: u32, c: u32) -> f64 {
    fn dfact(n: i64) -> f64 {
        (1..=n).rev().step_by(2).map(|k| k as f64).product()
    }
    let n = (a + b + c) as i64;
    4.0 * PI * dfact(2 * a as i64 - 1) * dfact(2 * b as i64 - 1) * dfact(2 * c as i64 - 1) / dfact(2 * n + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RadialProfile;
    use approx::assert_relative_eq;

    fn unit() -> KernelSpec {
        KernelSpec::inverse_power([1.0, 1.0, 1.0], 6.0, 0.1)
    }

    #[test]
    fn sphere_monomials() {
        assert_relative_eq!(sphere_monomial(0, 0, 0), 4.0 * PI);
        assert_relative_eq!(sphere_monomial(1, 0, 0), 4.0 * PI / 3.0);
        assert_relative_eq!(sphere_monomial(2, 1, 0), 4.0 * PI / 35.0);
        assert_relative_eq!(sphere_monomial(1, 1, 1), 4.0 * PI / 105.0);
    }

    #[test]
    fn moment_table_matches_factorization() {
        let t = moments(&unit(), &QuadratureSpec::default()).unwrap();
        let expect = [
            (t.g1_100, 40.0 * PI / 3.0),
            (t.g2_110, 8.0 * PI / 3.0),
            (t.g2_200, 8.0 * PI),
            (t.g3_111, 8.0 * PI / 21.0),
            (t.g3_210, 8.0 * PI / 7.0),
            (t.g3_300, 40.0 * PI / 7.0),
            (t.k0_parts[0], 4000.0 * PI / 3.0),
            (t.k0_parts[1], 4000.0 * PI / 9.0),
            (t.k0_parts[2], 1600.0 * PI / 9.0),
        ];
        for (got, want) in expect {
            assert_relative_eq!(got, want, max_relative = 1e-10);
        }
    }

    #[test]
    fn moments_reject_slow_decay() {
        let spec = KernelSpec::inverse_power([1.0, 0.0, 0.0], 4.5, 0.1);
        assert!(matches!(
            moments(&spec, &QuadratureSpec::default()),
            Err(KernelError::NotIntegrable { profile: 1, .. })
        ));
    }

    #[test]
    fn quadratic_form_on_probe_fields() {
        let c = ElasticCoefficients {
            l1: 1.5,
            l2: 0.25,
            l3: -0.5,
            ..ElasticCoefficients::one_constant(1.0, 1.0)
        };
        let p = probe_gradients();
        assert_relative_eq!(quadratic_form(&c, &p[0]).unwrap(), 3.0);
        assert_relative_eq!(quadratic_form(&c, &p[1]).unwrap(), 3.0 + 0.25 - 0.5);
        assert_eq!(quadratic_form(&c, &[Mat3::zeros(); 3]).unwrap(), 0.0);
        let bad = rank_one_gradient(&Mat3::identity(), &Vec3::x());
        assert!(matches!(quadratic_form(&c, &bad), Err(KernelError::NotTraceless(_))));
    }

    #[test]
    fn probe_invariants() {
        let p = probe_gradients();
        assert_eq!(invariants(&p[0]), [2.0, 0.0, 0.0]);
        assert_eq!(invariants(&p[1]), [2.0, 1.0, 1.0]);
        assert_eq!(invariants(&p[2]), [4.0, 0.0, 4.0]);
    }

    #[test]
    fn elastic_tensor_matches_closed_form() {
        let q = QuadratureSpec::default();
        let t = moments(&unit(), &q).unwrap();
        let c = elastic_tensor(&unit(), &q, 1.0).unwrap();
        let (k1, k2) = t.frank_formula();
        assert_relative_eq!(c.k1, k1, max_relative = 1e-10);
        assert_relative_eq!(c.k2, k2, max_relative = 1e-10);
        assert_eq!(c.k3, c.k1);
        assert!(c.probe_residual < 1e-10);
        assert_relative_eq!(c.ratio(), 0.2, epsilon = 1e-10);
    }

    #[test]
    fn s_star_scales_frank_constants() {
        let q = QuadratureSpec::default();
        let a = elastic_tensor(&unit(), &q, 1.0).unwrap();
        let b = elastic_tensor(&unit(), &q, 0.5).unwrap();
        assert_relative_eq!(b.k1, 0.25 * a.k1, max_relative = 1e-14);
        assert!(b.s_star_scaling_applied && !a.s_star_scaling_applied);
    }

    #[test]
    fn one_constant_kernel() {
        let spec = KernelSpec::inverse_power([1.0, 0.0, 0.0], 6.0, 0.1);
        let q = QuadratureSpec::default();
        let c = elastic_tensor(&spec, &q, 1.0).unwrap();
        assert!(c.l2.abs() < 1e-8 * c.l1 && c.l3.abs() < 1e-8 * c.l1);
        assert_relative_eq!(c.k1, c.k2, max_relative = 1e-12);
        assert_relative_eq!(c.k1, 2.0 * 40.0 * PI / 3.0, max_relative = 1e-10);
    }

    #[test]
    fn frame_indifference() {
        let q = QuadratureSpec::default();
        assert!(frame_check(&unit(), &q, 50, 3).unwrap() < 1e-10);
    }

    #[test]
    fn odd_moments_vanish_on_full_sphere() {
        let q = QuadratureSpec::default();
        let trunc = KernelSpec {
            g1: RadialProfile::inverse_power(1.0, 6.0, 0.1).with_r_max(1.0),
            ..KernelSpec::zero()
        };
        assert!(odd_moment_check(&trunc, &q).unwrap().abs() < 1e-12);
        let wedge = odd_moment_check_on(&trunc, &q, AngularDomain::Wedge { phi_max: PI / 4.0 }).unwrap();
        assert!(wedge.abs() > 0.1);
        assert!(odd_moment_check(&unit(), &q).is_err());
    }
}

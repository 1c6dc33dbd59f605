//! Isotropic three-term interaction kernel on Sym₀(3).
//!
//! `K(z)P·Q = g₁ P·Q + g₂ (Pẑ)·(Qẑ) + g₃ (ẑ·Pẑ)(ẑ·Qẑ)` with radial profiles
//! `g₁, g₂, g₃`.

mod moments;
mod transform;

pub use moments::{
    elastic_tensor, frame_check, moments, odd_moment_check, odd_moment_check_on, probe_gradients,
    rank_one_gradient, sphere_monomial,
    quadrature_form, quadratic_form, GradQ, ElasticCoefficients, MomentTable,
};
pub use transform::{KernelTransform, SymbolDrop};
pub(crate) use moments::quadratic_form_unchecked;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{basis_matrix, Mat5, QTensor, Vec3};
use crate::quadrature::GaussRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel direction undefined at z = 0")]
    ZeroDirection,
    #[error("profile g{profile} is not admissible: {reason}")]
    NotIntegrable { profile: usize, reason: String },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid quadrature specification: {0}")]
    InvalidQuadrature(String),
    #[error("probe system is singular (determinant {0:e})")]
    SingularProbeSystem(f64),
    #[error("gradient is not symmetric traceless in its first two indices (defect {0:e})")]
    NotTraceless(f64),
    #[error("kernel transform failed: {0}")]
    Transform(String),
}

/// Shape of a radial profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum ProfileForm {
    /// `coefficient · r^(−exponent)`.
    InversePower,
    /// Piecewise-linear interpolation of `(r, g)` samples, scaled by `coefficient`.
    Table { r: Vec<f64>, g: Vec<f64> },
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    #[serde(flatten)]
    pub form: ProfileForm,
    pub coefficient: f64,
    pub exponent: f64,
    /// Inner cutoff: the profile vanishes for `r < r0`.
    pub r0: f64,
    /// Outer truncation; `None` means unbounded support.
    pub r_max: Option<f64>,
}

impl RadialProfile {
    pub fn inverse_power(coefficient: f64, exponent: f64, r0: f64) -> Self {
        RadialProfile {
            form: ProfileForm::InversePower,
            coefficient,
            exponent,
            r0,
            r_max: None,
        }
    }

    pub fn zero() -> Self {
        RadialProfile {
            form: ProfileForm::Zero,
            coefficient: 0.0,
            exponent: 0.0,
            r0: 0.0,
            r_max: None,
        }
    }

    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.r_max = Some(r_max);
        self
    }

    pub fn with_coefficient(mut self, c: f64) -> Self {
        self.coefficient = c;
        self
    }

    /// True when the profile is identically zero.
    pub fn is_zero(&self) -> bool {
        matches!(self.form, ProfileForm::Zero) || self.coefficient == 0.0
    }

    /// Support `[lo, hi]`; `hi = None` for unbounded support.
    pub fn support(&self) -> (f64, Option<f64>) {
        match &self.form {
            ProfileForm::Table { r, .. } => {
                let lo = self.r0.max(r.first().copied().unwrap_or(0.0));
                let hi = r.last().copied().unwrap_or(0.0);
                (lo, Some(self.r_max.map_or(hi, |m| m.min(hi))))
            }
            _ => (self.r0, self.r_max),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if self.is_zero() || r < self.r0 {
            return 0.0;
        }
        if let Some(rm) = self.r_max {
            if r > rm {
                return 0.0;
            }
        }
        match &self.form {
            ProfileForm::Zero => 0.0,
            ProfileForm::InversePower => self.coefficient * r.powf(-self.exponent),
            ProfileForm::Table { r: rs, g } => {
                if rs.is_empty() || r < rs[0] || r > *rs.last().unwrap() {
                    return 0.0;
                }
                let i = match rs.binary_search_by(|x| x.total_cmp(&r)) {
                    Ok(i) => return self.coefficient * g[i],
                    Err(i) => i,
                };
                let t = (r - rs[i - 1]) / (rs[i] - rs[i - 1]);
                self.coefficient * (g[i - 1] + t * (g[i] - g[i - 1]))
            }
        }
    }

    fn check_shape(&self) -> Result<(), KernelError> {
        if !self.coefficient.is_finite() || !self.exponent.is_finite() || self.r0 < 0.0 {
            return Err(KernelError::InvalidProfile(
                "coefficient, exponent and cutoff must be finite, cutoff ≥ 0".into(),
            ));
        }
        if let Some(rm) = self.r_max {
            if rm <= self.r0 {
                return Err(KernelError::InvalidProfile("r_max must exceed r0".into()));
            }
        }
        if let ProfileForm::Table { r, g } = &self.form {
            if r.len() < 2 || r.len() != g.len() {
                return Err(KernelError::InvalidProfile(
                    "table needs at least two (r, g) pairs of equal length".into(),
                ));
            }
            if !r.windows(2).all(|w| w[0] < w[1]) || r[0] < 0.0 {
                return Err(KernelError::InvalidProfile("table radii must increase".into()));
            }
        }
        Ok(())
    }

    /// Whether `∫ g(r) r^m dr` over the support is finite.
    pub fn radial_moment_finite(&self, m: f64) -> bool {
        if self.is_zero() {
            return true;
        }
        match self.form {
            ProfileForm::InversePower => {
                let p = m - self.exponent;
                let near_zero = self.r0 > 0.0 || p > -1.0;
                let at_infinity = self.r_max.is_some() || p < -1.0;
                near_zero && at_infinity
            }
            _ => true,
        }
    }

    /// `∫ g(r) r^m dr` by Gauss–Legendre panels with an analytic tail for
    /// unbounded inverse-power profiles.
    pub fn radial_moment(&self, m: f64, quad: &QuadratureSpec) -> Result<f64, KernelError> {
        if self.is_zero() {
            return Ok(0.0);
        }
        if !self.radial_moment_finite(m) {
            return Err(KernelError::NotIntegrable {
                profile: 0,
                reason: format!("∫ g r^{m} dr diverges"),
            });
        }
        let rule = GaussRule::new(quad.radial_nodes.min(8).max(4));
        let panels = (quad.radial_nodes / 8).max(1) * 4;
        let (lo, hi) = self.support();
        match &self.form {
            ProfileForm::Table { r, .. } => {
                let mut knots: Vec<f64> = r.iter().copied().filter(|x| *x > lo && *x < hi.unwrap()).collect();
                knots.insert(0, lo);
                knots.push(hi.unwrap());
                let mut s = 0.0;
                for w in knots.windows(2) {
                    s += rule.integrate(w[0], w[1], |x| self.eval(x) * x.powf(m));
                }
                Ok(s)
            }
            ProfileForm::InversePower => {
                let q = self.exponent;
                let c = self.coefficient;
                let p = m - q;
                let r_switch = match hi {
                    Some(h) => h,
                    None => lo.max(1e-3) * 1e4,
                };
                let (mut s, start) = if lo > 0.0 {
                    (0.0, lo)
                } else {
                    let a = r_switch * 1e-6;
                    (c * a.powf(p + 1.0) / (p + 1.0), a)
                };
                let ratio = (r_switch / start).powf(1.0 / panels as f64);
                let mut a = start;
                for k in 0..panels {
                    let b = if k + 1 == panels { r_switch } else { a * ratio };
                    s += rule.integrate(a, b, |x| c * x.powf(p));
                    a = b;
                }
                if hi.is_none() && quad.tail_mode == TailMode::Analytic {
                    s += c * r_switch.powf(p + 1.0) / (-(p + 1.0));
                }
                Ok(s)
            }
            ProfileForm::Zero => Ok(0.0),
        }
    }
}

/// Treatment of the radial tail beyond the last quadrature panel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TailMode {
    #[default]
    Analytic,
    /// Drop everything beyond the panel range (sensitivity studies only).
    Truncate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Total radial Gauss nodes (grouped in panels of up to 8).
    pub radial_nodes: usize,
    /// Gauss order in cos θ; the azimuth uses twice as many points.
    pub angular_order: usize,
    pub tail_mode: TailMode,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            radial_nodes: 64,
            angular_order: 8,
            tail_mode: TailMode::Analytic,
        }
    }
}

impl QuadratureSpec {
    pub fn doubled(&self) -> Self {
        QuadratureSpec {
            radial_nodes: 2 * self.radial_nodes,
            angular_order: 2 * self.angular_order,
            tail_mode: self.tail_mode,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.radial_nodes < 4 || self.angular_order < 4 {
            return Err(KernelError::InvalidQuadrature("node counts must be at least 4".into()));
        }
        if self.angular_order % 2 != 0 {
            return Err(KernelError::InvalidQuadrature("angular order must be even".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub g1: RadialProfile,
    pub g2: RadialProfile,
    pub g3: RadialProfile,
    /// User-supplied bound `M` with `λ_max(K) ≤ M λ_min(K)`.
    pub m_bound: Option<f64>,
}

impl KernelSpec {
    /// Three inverse-power profiles sharing exponent and cutoff.
    pub fn inverse_power(coefficients: [f64; 3], exponent: f64, r0: f64) -> Self {
        let p = |c| RadialProfile::inverse_power(c, exponent, r0);
        KernelSpec {
            g1: p(coefficients[0]),
            g2: p(coefficients[1]),
            g3: p(coefficients[2]),
            m_bound: None,
        }
    }

    pub fn zero() -> Self {
        KernelSpec {
            g1: RadialProfile::zero(),
            g2: RadialProfile::zero(),
            g3: RadialProfile::zero(),
            m_bound: None,
        }
    }

    pub fn profiles(&self) -> [&RadialProfile; 3] {
        [&self.g1, &self.g2, &self.g3]
    }

    pub fn is_zero(&self) -> bool {
        self.profiles().iter().all(|p| p.is_zero())
    }

    pub fn is_one_constant(&self) -> bool {
        self.g2.is_zero() && self.g3.is_zero()
    }

    pub fn check_shapes(&self) -> Result<(), KernelError> {
        for (i, p) in self.profiles().iter().enumerate() {
            p.check_shape().map_err(|e| match e {
                KernelError::InvalidProfile(r) => KernelError::InvalidProfile(format!("g{}: {r}", i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Zeroth and second moments must be finite for every profile.
    pub fn check_integrable(&self) -> Result<(), KernelError> {
        self.check_shapes()?;
        for (i, p) in self.profiles().iter().enumerate() {
            if !p.radial_moment_finite(2.0) {
                return Err(KernelError::NotIntegrable {
                    profile: i + 1,
                    reason: "g is not integrable over R³".into(),
                });
            }
            if !p.radial_moment_finite(4.0) {
                return Err(KernelError::NotIntegrable {
                    profile: i + 1,
                    reason: "g |z|² is not integrable over R³".into(),
                });
            }
        }
        Ok(())
    }

    /// Radial values `(g₁, g₂, g₃)` at distance `r`.
    #[inline]
    pub fn radial(&self, r: f64) -> [f64; 3] {
        [self.g1.eval(r), self.g2.eval(r), self.g3.eval(r)]
    }

    /// Eigenvalues of `K(z)` at `|z| = r` (they do not depend on `ẑ`):
    /// multiplicities 2, 2, 1.
    pub fn eigenvalues(&self, r: f64) -> [f64; 3] {
        let [g1, g2, g3] = self.radial(r);
        [g1, g1 + 0.5 * g2, g1 + 2.0 / 3.0 * (g2 + g3)]
    }

    /// Largest support radius over all profiles (`None` if unbounded).
    pub fn outer_radius(&self) -> Option<f64> {
        let mut out: f64 = 0.0;
        for p in self.profiles() {
            if p.is_zero() {
                continue;
            }
            match p.support().1 {
                Some(h) => out = out.max(h),
                None => return None,
            }
        }
        Some(out)
    }

    /// Smallest inner cutoff over non-zero profiles.
    pub fn inner_radius(&self) -> f64 {
        self.profiles()
            .iter()
            .filter(|p| !p.is_zero())
            .map(|p| p.support().0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// The bilinear form `K(z)P·Q`.
pub fn eval_kernel(spec: &KernelSpec, z: &Vec3, p: &QTensor, q: &QTensor) -> Result<f64, KernelError> {
    let r = z.norm();
    if r == 0.0 {
        return Err(KernelError::ZeroDirection);
    }
    let zh = z / r;
    let [g1, g2, g3] = spec.radial(r);
    let pm = p.matrix();
    let qm = q.matrix();
    let pz = pm * zh;
    let qz = qm * zh;
    Ok(g1 * p.dot(q) + g2 * pz.dot(&qz) + g3 * zh.dot(&pz) * zh.dot(&qz))
}

/// `T₂(ẑ)_ab = (E_a ẑ)·(E_b ẑ)` and `T₃(ẑ)_ab = (ẑ·E_a ẑ)(ẑ·E_b ẑ)`.
#[inline]
pub fn direction_tensors(zh: &Vec3) -> (Mat5, Mat5) {
    let mut ez = [Vec3::zeros(); 5];
    let mut zez = [0.0; 5];
    for a in 0..5 {
        ez[a] = basis_matrix(a) * zh;
        zez[a] = zh.dot(&ez[a]);
    }
    let mut t2 = Mat5::zeros();
    let mut t3 = Mat5::zeros();
    for a in 0..5 {
        for b in a..5 {
            let v2 = ez[a].dot(&ez[b]);
            let v3 = zez[a] * zez[b];
            t2[(a, b)] = v2;
            t2[(b, a)] = v2;
            t3[(a, b)] = v3;
            t3[(b, a)] = v3;
        }
    }
    (t2, t3)
}

/// The 5×5 matrix of `K(z)`; zero inside the cutoff and at `z = 0`.
pub fn kernel_matrix(spec: &KernelSpec, z: &Vec3) -> Mat5 {
    let r = z.norm();
    if r == 0.0 {
        return Mat5::zeros();
    }
    let [g1, g2, g3] = spec.radial(r);
    if g1 == 0.0 && g2 == 0.0 && g3 == 0.0 {
        return Mat5::zeros();
    }
    let (t2, t3) = direction_tensors(&(z / r));
    Mat5::identity() * g1 + t2 * g2 + t3 * g3
}

/// Outcome of the standing-assumption checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub integrable: bool,
    pub second_moment_finite: bool,
    /// Smallest sampled eigenvalue of `K(z)` over the radial grid.
    pub min_eigenvalue: f64,
    /// Largest sampled `λ_min`, must be positive somewhere.
    pub max_min_eigenvalue: f64,
    pub nonnegative: bool,
    /// Disagreement between the closed-form eigenvalues and random-direction
    /// assembly of the 5×5 matrix.
    pub direction_check_defect: f64,
    /// Largest sampled `λ_max / λ_min` where `λ_min > 0`.
    pub max_eigen_ratio: f64,
    pub m_bound: Option<f64>,
    pub m_bound_holds: Option<bool>,
    /// Fitted decay exponent of `λ_min` over the last decade (infinite for
    /// compact support).
    pub decay_exponent: f64,
    pub alpha: Option<f64>,
    /// `(1−α)(p−3) > 2` and `0 < α < 1`.
    pub collar_condition: Option<bool>,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.integrable
            && self.second_moment_finite
            && self.nonnegative
            && self.m_bound_holds.unwrap_or(true)
            && self.collar_condition.unwrap_or(true)
    }
}

/// Checks integrability, pointwise non-negativity, the `λ_max ≤ M λ_min`
/// bound and the decay condition needed for the bounded-domain problem.
pub fn validate_assumptions(spec: &KernelSpec, alpha: Option<f64>) -> ValidationReport {
    use rand::SeedableRng;
    let mut messages = Vec::new();
    let shapes_ok = match spec.check_shapes() {
        Ok(()) => true,
        Err(e) => {
            messages.push(e.to_string());
            false
        }
    };
    let integrable = shapes_ok && spec.profiles().iter().all(|p| p.radial_moment_finite(2.0));
    let second = shapes_ok && spec.profiles().iter().all(|p| p.radial_moment_finite(4.0));
    if !integrable {
        messages.push("a profile is not integrable over R³".into());
    }
    if !second {
        messages.push("a profile has infinite second moment".into());
    }

    let lo = spec.inner_radius();
    let lo = if lo.is_finite() { lo.max(1e-6) } else { 1e-3 };
    let hi = spec.outer_radius().unwrap_or(lo * 1e4).max(lo * 1.0001);
    let samples = 400;
    let mut min_eig = f64::INFINITY;
    let mut max_min = f64::NEG_INFINITY;
    let mut ratio: f64 = 0.0;
    for i in 0..samples {
        let r = lo * (hi / lo).powf(i as f64 / (samples - 1) as f64);
        let e = spec.eigenvalues(r);
        let lmin = e.iter().copied().fold(f64::INFINITY, f64::min);
        let lmax = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        min_eig = min_eig.min(lmin);
        max_min = max_min.max(lmin);
        if lmin > 0.0 {
            ratio = ratio.max(lmax / lmin);
        }
    }
    let scale = spec
        .profiles()
        .iter()
        .map(|p| p.eval(lo).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let nonnegative = min_eig >= -1e-12 * scale && max_min > 0.0;
    if min_eig < -1e-12 * scale {
        messages.push(format!("K(z) has negative eigenvalue {min_eig:e}"));
    }
    if max_min <= 0.0 {
        messages.push("λ_min(K) is not bounded away from zero on any open set".into());
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let mut defect: f64 = 0.0;
    for i in 0..20 {
        let r = lo * (hi / lo).powf(i as f64 / 19.0);
        let dir = crate::basis::random_unit(&mut rng);
        let m = kernel_matrix(spec, &(dir * r));
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let e = spec.eigenvalues(r);
        let mut expect = vec![e[0], e[0], e[1], e[1], e[2]];
        expect.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&expect) {
            defect = defect.max((a - b).abs() / scale);
        }
    }

    let decay_exponent = match spec.outer_radius() {
        Some(_) => f64::INFINITY,
        None => {
            let r_far = 1e3 * lo.max(1.0);
            let g = |r: f64| {
                let e = spec.eigenvalues(r);
                e.iter().copied().fold(f64::INFINITY, f64::min)
            };
            let (a, b) = (g(r_far / 10.0), g(r_far));
            if a > 0.0 && b > 0.0 {
                -(b / a).log10()
            } else {
                f64::NAN
            }
        }
    };
    let m_bound_holds = spec.m_bound.map(|m| ratio <= m * (1.0 + 1e-12));
    if m_bound_holds == Some(false) {
        messages.push(format!("λ_max/λ_min reaches {ratio}, above the supplied bound"));
    }
    let collar_condition = alpha.map(|a| a > 0.0 && a < 1.0 && (1.0 - a) * (decay_exponent - 3.0) > 2.0);
    if collar_condition == Some(false) {
        messages.push(format!("(1−α)(p−3) > 2 fails for α = {}, p = {decay_exponent}", alpha.unwrap()));
    }
    ValidationReport {
        integrable,
        second_moment_finite: second,
        min_eigenvalue: min_eig,
        max_min_eigenvalue: max_min,
        nonnegative,
        direction_check_defect: defect,
        max_eigen_ratio: ratio,
        m_bound: spec.m_bound,
        m_bound_holds,
        decay_exponent,
        alpha,
        collar_condition,
        messages,
    }
}

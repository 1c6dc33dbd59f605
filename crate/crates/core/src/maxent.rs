//! Maximum-entropy singular potential on the Q-tensor moment set.
//!
//! `ψ_s(b) = Λ_b·b − log Z(Λ_b)` where `Λ_b` solves `∇log Z(Λ) = b` and
//! `Z(Λ) = ∫_{S²} exp(Λ·(p⊗p − I/3)) dσ(p)`.

use std::f64::consts::{PI, TAU};

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{basis_matrix, coefficients, sorted_eigen, Mat3, Mat5, Multiplier, QTensor, Vec3, Vec5, EIG_MAX, EIG_MIN};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaxentError {
    #[error("moment {eigenvalues:?} lies outside the open moment set")]
    OutOfDomain { eigenvalues: [f64; 3] },
    #[error("dual Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("ground state search failed: {0}")]
    GroundState(String),
}

/// Resolution of the product rule on S².
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereSpec {
    /// Gauss–Legendre nodes in cos θ (even).
    pub n_theta: usize,
    /// Trapezoid nodes in φ (multiple of 4).
    pub n_phi: usize,
}

impl Default for SphereSpec {
    fn default() -> Self {
        SphereSpec { n_theta: 64, n_phi: 128 }
    }
}

/// Product rule reduced by the reflection symmetries `pᵢ ↦ −pᵢ`, which the
/// integrand has in the eigenframe of `Λ`.
#[derive(Clone, Debug)]
pub struct SphereQuadrature {
    pub spec: SphereSpec,
    /// Squared Cartesian components `(p₁², p₂², p₃²)` with `p₃` the polar axis.
    nodes: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl SphereQuadrature {
    pub fn new(spec: SphereSpec) -> Self {
        assert!(spec.n_theta % 2 == 0 && spec.n_theta >= 2, "n_theta must be even");
        assert!(spec.n_phi % 4 == 0 && spec.n_phi >= 4, "n_phi must be a multiple of 4");
        let (u, wu) = gauss_legendre(spec.n_theta);
        let quarter = spec.n_phi / 4;
        let dphi = TAU / spec.n_phi as f64;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (ui, wi) in u.iter().zip(&wu).skip(spec.n_theta / 2) {
            let s2 = 1.0 - ui * ui;
            for j in 0..=quarter {
                let phi = j as f64 * dphi;
                let mult = if j == 0 || j == quarter { 2.0 } else { 4.0 };
                let (sn, cs) = phi.sin_cos();
                nodes.push([s2 * cs * cs, s2 * sn * sn, ui * ui]);
                // factor 2 for the mirrored hemisphere
                weights.push(2.0 * wi * mult * dphi);
            }
        }
        SphereQuadrature { spec, nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl Default for SphereQuadrature {
    fn default() -> Self {
        Self::new(SphereSpec::default())
    }
}

#[derive(Clone, Debug)]
pub struct Partition {
    pub log_z: f64,
    pub mean: QTensor,
    pub covariance: Mat5,
}

/// `log Z`, its gradient (the moment) and Hessian (the covariance of `a(p)`).
pub fn partition(lambda: &Multiplier, quad: &SphereQuadrature) -> Partition {
    let (vals, vecs) = sorted_eigen(&lambda.matrix());
    // polar axis: the eigenvalue farthest from the median
    let polar = if (vals[0] - vals[1]).abs() > (vals[2] - vals[1]).abs() { 0 } else { 2 };
    let order = if polar == 0 { [1, 2, 0] } else { [0, 1, 2] };
    let l = [vals[order[0]], vals[order[1]], vals[order[2]]];
    let lmax = vals[2];
    let mut z = 0.0;
    let mut m2 = [0.0; 3];
    let mut m4 = [[0.0; 3]; 3];
    for (p, w) in quad.nodes.iter().zip(&quad.weights) {
        let e = w * (l[0] * p[0] + l[1] * p[1] + l[2] * p[2] - lmax).exp();
        z += e;
        for i in 0..3 {
            m2[i] += e * p[i];
            for j in i..3 {
                m4[i][j] += e * p[i] * p[j];
            }
        }
    }
    for i in 0..3 {
        m2[i] /= z;
        for j in i..3 {
            m4[i][j] /= z;
            m4[j][i] = m4[i][j];
        }
    }
    let mut frame = Mat3::zeros();
    for (slot, &k) in order.iter().enumerate() {
        frame.set_column(slot, &vecs.column(k));
    }
    let mean_local = Mat3::from_diagonal(&Vec3::new(m2[0], m2[1], m2[2]));
    let mean_m = frame * mean_local * frame.transpose();
    let mean = QTensor(coefficients(&mean_m));

    let local: [Mat3; 5] = std::array::from_fn(|a| frame.transpose() * basis_matrix(a) * frame);
    let mut second = Mat5::zeros();
    for a in 0..5 {
        for b in a..5 {
            let (ea, eb) = (&local[a], &local[b]);
            let mut s = 0.0;
            for i in 0..3 {
                s += ea[(i, i)] * eb[(i, i)] * m4[i][i];
                for j in 0..3 {
                    if j != i {
                        s += (ea[(i, i)] * eb[(j, j)] + 2.0 * ea[(i, j)] * eb[(i, j)]) * m4[i][j];
                    }
                }
            }
            second[(a, b)] = s;
            second[(b, a)] = s;
        }
    }
    let covariance = second - mean.0 * mean.0.transpose();
    Partition {
        log_z: lmax + z.ln(),
        mean,
        covariance,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 200,
            armijo: 1e-4,
        }
    }
}

/// Converged dual solution at one moment.
#[derive(Clone, Debug)]
pub struct DualSolution {
    pub lambda: Multiplier,
    /// `ψ_s(b)`.
    pub psi_s: f64,
    pub covariance: Mat5,
    pub iterations: usize,
}

fn check_domain(b: &QTensor) -> Result<(), MaxentError> {
    if !b.is_finite() || !b.in_open_set(0.0) {
        return Err(MaxentError::OutOfDomain { eigenvalues: b.eigenvalues() });
    }
    Ok(())
}

/// Newton solve of `mean(Λ) = b` from `Λ = 0`.
pub fn solve_lambda(b: &QTensor, tol: f64, quad: &SphereQuadrature) -> Result<Multiplier, MaxentError> {
    let opts = NewtonOptions { tol, ..Default::default() };
    solve_dual(b, &Multiplier::zero(), &opts, quad).map(|s| s.lambda)
}

/// Damped Newton on the convex dual `F(Λ) = log Z(Λ) − Λ·b`, started at `start`.
pub fn solve_dual(b: &QTensor, start: &Multiplier, opts: &NewtonOptions, quad: &SphereQuadrature) -> Result<DualSolution, MaxentError> {
    check_domain(b)?;
    let mut lambda = start.0;
    if !lambda.iter().all(|x| x.is_finite()) {
        lambda = Vec5::zeros();
    }
    let mut part = partition(&Multiplier(lambda), quad);
    let mut f = part.log_z - lambda.dot(&b.0);
    for it in 0..=opts.max_iter {
        let grad = part.mean.0 - b.0;
        let res = grad.norm();
        if res <= opts.tol {
            return Ok(DualSolution {
                lambda: Multiplier(lambda),
                psi_s: -f,
                covariance: part.covariance,
                iterations: it,
            });
        }
        if it == opts.max_iter {
            return Err(MaxentError::NonConvergence { iterations: it, residual: res });
        }
        let step = match Cholesky::new(part.covariance) {
            Some(ch) => -ch.solve(&grad),
            None => -grad,
        };
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = lambda + step * t;
            let tp = partition(&Multiplier(trial), quad);
            let lb = trial.dot(&b.0);
            let ft = tp.log_z - lb;
            // near convergence F stalls at the rounding level of log Z and Λ·b;
            // accept on residual decrease
            let noise = 64.0 * f64::EPSILON * (tp.log_z.abs() + lb.abs() + 1.0);
            let stalled = (ft - f).abs() <= noise && (tp.mean.0 - b.0).norm() < res;
            if ft <= f + opts.armijo * t * slope || stalled {
                lambda = trial;
                part = tp;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(MaxentError::NonConvergence { iterations: it, residual: res });
        }
    }
    unreachable!()
}

pub fn psi_s(b: &QTensor, quad: &SphereQuadrature) -> Result<f64, MaxentError> {
    solve_dual(b, &Multiplier::zero(), &NewtonOptions::default(), quad).map(|s| s.psi_s)
}

/// Dual solver that remembers its last solution as a warm start.
#[derive(Clone, Debug)]
pub struct PsiSolver {
    pub quad: SphereQuadrature,
    pub opts: NewtonOptions,
    last: Option<(QTensor, Multiplier)>,
}

impl PsiSolver {
    pub fn new(spec: SphereSpec) -> Self {
        PsiSolver {
            quad: SphereQuadrature::new(spec),
            opts: NewtonOptions::default(),
            last: None,
        }
    }

    pub fn solve(&mut self, b: &QTensor) -> Result<DualSolution, MaxentError> {
        let start = match &self.last {
            Some((_, l)) => *l,
            None => Multiplier::zero(),
        };
        let sol = match solve_dual(b, &start, &self.opts, &self.quad) {
            Ok(s) => s,
            Err(MaxentError::NonConvergence { .. }) if self.last.is_some() => {
                solve_dual(b, &Multiplier::zero(), &self.opts, &self.quad)?
            }
            Err(e) => return Err(e),
        };
        self.last = Some((*b, sol.lambda));
        Ok(sol)
    }

    pub fn psi_s(&mut self, b: &QTensor) -> Result<f64, MaxentError> {
        self.solve(b).map(|s| s.psi_s)
    }
}

impl Default for PsiSolver {
    fn default() -> Self {
        Self::new(SphereSpec::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Isotropic,
    Nematic,
}

/// Ground-state data of the bulk potential `ψ = ψ_s − ½k₀|b|² − c₅`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulkData {
    pub k0: f64,
    pub s_star: f64,
    pub c5: f64,
    pub psi_at_sstar: f64,
    pub branch: Branch,
    pub sphere: SphereSpec,
}

impl BulkData {
    /// `ψ(b)` from an already computed `ψ_s(b)`.
    #[inline]
    pub fn psi_from(&self, psi_s: f64, b: &QTensor) -> f64 {
        psi_s - 0.5 * self.k0 * b.dot(b) - self.c5
    }

    pub fn psi(&self, b: &QTensor, solver: &mut PsiSolver) -> Result<f64, MaxentError> {
        Ok(self.psi_from(solver.psi_s(b)?, b))
    }

    /// A point of the ground-state manifold.
    pub fn ground_tensor(&self, n: &Vec3) -> QTensor {
        QTensor::uniaxial(self.s_star, n)
    }
}

fn axis_tensor() -> QTensor {
    QTensor::uniaxial(1.0, &Vec3::z())
}

/// `φ(s) = ψ_s(s u) − ⅓k₀s²` together with `φ'` and `φ''`.
fn ray_phi(s: f64, k0: f64, solver: &mut PsiSolver) -> Result<(f64, f64, f64), MaxentError> {
    let u = axis_tensor();
    let sol = solver.solve(&(u * s))?;
    let d1 = sol.lambda.0.dot(&u.0);
    let ch = Cholesky::new(sol.covariance).ok_or_else(|| MaxentError::GroundState("singular covariance".into()))?;
    let d2 = u.0.dot(&ch.solve(&u.0));
    Ok((sol.psi_s - k0 * s * s / 3.0, d1 - 2.0 * k0 * s / 3.0, d2 - 2.0 * k0 / 3.0))
}

/// Minimizes `φ(s)` over the uniaxial ray by a dense scan refined with
/// safeguarded Newton steps.
pub fn ground_state(k0: f64, sphere: SphereSpec) -> Result<BulkData, MaxentError> {
    if !k0.is_finite() {
        return Err(MaxentError::GroundState("k0 must be finite".into()));
    }
    let mut solver = PsiSolver::new(sphere);
    let (lo, hi) = (-0.5 + 0.02, 1.0 - 0.02);
    let samples = 97;
    let mut best = (0.0, f64::INFINITY);
    let mut scan = Vec::with_capacity(samples);
    // scan outward from 0 in both directions to keep warm starts close
    for dir in [1.0, -1.0] {
        solver.last = None;
        let end = if dir > 0.0 { hi } else { lo };
        for i in 0..samples {
            let s = end * i as f64 / (samples - 1) as f64;
            match ray_phi(s, k0, &mut solver) {
                Ok((phi, _, _)) => {
                    scan.push((s, phi));
                    if phi < best.1 {
                        best = (s, phi);
                    }
                }
                Err(_) => break,
            }
        }
    }
    if !best.1.is_finite() {
        return Err(MaxentError::GroundState("no admissible sample on the ray".into()));
    }
    let step = hi / (samples - 1) as f64;
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let mut s = best.0;
    solver.last = None;
    let mut last_err = None;
    for _ in 0..60 {
        let (_, d1, d2) = match ray_phi(s, k0, &mut solver) {
            Ok(v) => v,
            Err(e) => {
                last_err = Some(e);
                break;
            }
        };
        if d1.abs() < 1e-11 {
            break;
        }
        if d1 > 0.0 {
            b = s;
        } else {
            a = s;
        }
        let newton = s - d1 / d2;
        let next = if d2 > 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if (next - s).abs() < 1e-14 {
            break;
        }
        s = next;
    }
    if let Some(e) = last_err {
        return Err(MaxentError::GroundState(format!("refinement failed near s = {s}: {e}")));
    }
    if s.abs() < 1e-9 {
        s = 0.0;
    }
    let (c5, _, _) = ray_phi(s, k0, &mut solver)?;
    // guard against the refinement having left the scan's basin
    let c5 = if c5 <= best.1 + 1e-12 { c5 } else {
        s = best.0;
        best.1
    };
    let data = BulkData {
        k0,
        s_star: s,
        c5,
        psi_at_sstar: 0.0,
        branch: if s > 1e-6 { Branch::Nematic } else { Branch::Isotropic },
        sphere,
    };
    let psi_at = data.psi(&data.ground_tensor(&Vec3::z()), &mut solver)?;
    Ok(BulkData { psi_at_sstar: psi_at, ..data })
}

/// Euclidean projection of the eigenvalue triple onto
/// `{Σλ = 0, lo ≤ λᵢ ≤ hi}`.
fn project_eigenvalues(l: [f64; 3], lo: f64, hi: f64) -> [f64; 3] {
    let g = |mu: f64| -> f64 { l.iter().map(|x| (x - mu).clamp(lo, hi)).sum() };
    let mut knots: Vec<f64> = l.iter().flat_map(|x| [x - lo, x - hi]).collect();
    knots.sort_by(f64::total_cmp);
    // g is non-increasing and piecewise linear in μ
    let mut mu = knots[0];
    for w in knots.windows(2) {
        let (ga, gb) = (g(w[0]), g(w[1]));
        if ga >= 0.0 && gb <= 0.0 {
            mu = if ga == gb { w[0] } else { w[0] + (w[1] - w[0]) * ga / (ga - gb) };
            break;
        }
    }
    [
        (l[0] - mu).clamp(lo, hi),
        (l[1] - mu).clamp(lo, hi),
        (l[2] - mu).clamp(lo, hi),
    ]
}

/// Projection onto the closed moment set shrunk by `margin`.
pub fn project_qbar(raw: &Mat3, margin: f64) -> QTensor {
    let q = QTensor::project_matrix(raw);
    project_q(&q, margin)
}

pub fn project_q(q: &QTensor, margin: f64) -> QTensor {
    let lo = EIG_MIN + margin;
    let hi = EIG_MAX - margin;
    let (vals, vecs) = q.eigen();
    if vals[0] >= lo && vals[2] <= hi {
        return *q;
    }
    let p = project_eigenvalues(vals, lo, hi);
    let m = vecs * Mat3::from_diagonal(&Vec3::new(p[0], p[1], p[2])) * vecs.transpose();
    QTensor(coefficients(&m))
}

/// Distance to the ground-state manifold along the leading eigenvector.
pub fn dist_to_m(b: &QTensor, s_star: f64) -> f64 {
    let (_, vecs) = b.eigen();
    let n: Vec3 = vecs.column(2).into_owned();
    (*b - QTensor::uniaxial(s_star, &n)).norm()
}

/// One row of a uniaxial ray scan.
#[derive(Clone, Debug, Serialize)]
pub struct RayPoint {
    pub s: f64,
    pub psi_s: f64,
    pub psi: f64,
    pub lambda_norm: f64,
}

/// `ψ_s` and `ψ` along `s(e₃⊗e₃ − I/3)`.
pub fn psi_ray(bulk: &BulkData, s_values: &[f64], solver: &mut PsiSolver) -> Result<Vec<RayPoint>, MaxentError> {
    let u = axis_tensor();
    s_values
        .iter()
        .map(|&s| {
            let b = u * s;
            let sol = solver.solve(&b)?;
            Ok(RayPoint {
                s,
                psi_s: sol.psi_s,
                psi: bulk.psi_from(sol.psi_s, &b),
                lambda_norm: sol.lambda.norm(),
            })
        })
        .collect()
}

/// Growth of `ψ_s` as `s → 1` along the uniaxial ray.
#[derive(Clone, Debug, Serialize)]
pub struct BlowUpProbe {
    pub s: Vec<f64>,
    pub psi_s: Vec<f64>,
    pub strictly_increasing: bool,
    /// `ψ_s(0.995) − ψ_s(0)`.
    pub gain_at_0995: f64,
    /// Average increase of `ψ_s` per decade of `1 − s` over the last decade.
    pub gain_per_decade: f64,
}

pub fn blow_up_probe(sphere: SphereSpec) -> Result<BlowUpProbe, MaxentError> {
    let gaps = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005];
    let mut solver = PsiSolver::new(sphere);
    let mut s = Vec::new();
    let mut psi = Vec::new();
    for g in gaps {
        let sv = 1.0 - g;
        s.push(sv);
        psi.push(solver.psi_s(&(axis_tensor() * sv))?);
    }
    let strictly_increasing = psi.windows(2).all(|w| w[1] > w[0]);
    let n = psi.len();
    Ok(BlowUpProbe {
        gain_at_0995: psi[n - 1] - psi[0],
        gain_per_decade: psi[n - 1] - psi[n - 4],
        strictly_increasing,
        s,
        psi_s: psi,
    })
}

/// Exact isotropic covariance of `a(p)` under the uniform measure.
pub fn isotropic_covariance() -> Mat5 {
    Mat5::identity() * (2.0 / 15.0)
}

pub fn uniform_entropy() -> f64 {
    -(4.0 * PI).ln()
}

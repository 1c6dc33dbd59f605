use serde::{Deserialize, Serialize};

use super::cg::pcg;
use super::{EnergyError, Result};
use crate::basis::{basis_matrix, Vec3, Vec5};
use crate::field::{DomainMask, OrderField};

/// Boundary potential `φ₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Potential {
    Zero,
    /// `g·x + c`.
    Linear { gradient: [f64; 3], offset: f64 },
}

impl Potential {
    pub fn eval(&self, x: &Vec3) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Linear { gradient, offset } => Vec3::from(*gradient).dot(x) + offset,
        }
    }
}

/// Dielectric map `A(b) = A_iso I + A_aniso mat(b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrostaticConfig {
    #[serde(rename = "A_iso")]
    pub a_iso: f64,
    #[serde(rename = "A_aniso")]
    pub a_aniso: f64,
    pub phi0: Potential,
    #[serde(default = "default_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_maxiter")]
    pub cg_maxiter: usize,
}

fn default_tol() -> f64 {
    1e-12
}

fn default_maxiter() -> usize {
    20_000
}

impl ElectrostaticConfig {
    pub fn new(a_iso: f64, a_aniso: f64, phi0: Potential) -> Self {
        ElectrostaticConfig {
            a_iso,
            a_aniso,
            phi0,
            cg_tol: default_tol(),
            cg_maxiter: default_maxiter(),
        }
    }

    /// Smallest eigenvalue of `A(b)` over the closed moment set, whose
    /// eigenvalues lie in `[−1/3, 2/3]`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.a_iso + (self.a_aniso * -1.0 / 3.0).min(self.a_aniso * 2.0 / 3.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_eigenvalue() > 0.0) {
            return Err(EnergyError::Config(format!(
                "A(b) loses positivity: A_iso = {}, A_aniso = {}",
                self.a_iso, self.a_aniso
            )));
        }
        if !(self.cg_tol > 0.0) || self.cg_maxiter == 0 {
            return Err(EnergyError::Config("cg_tol and cg_maxiter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstatSolution {
    /// Potential on every cell; exterior cells carry `φ₀` at their centre.
    pub phi: Vec<f64>,
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Derivative of the discrete energy in each node's coefficients, at
    /// fixed `φ`.
    pub envelope_gradient: Vec<Vec5>,
}

struct Faces {
    /// Local index of each domain cell, `usize::MAX` outside.
    local: Vec<usize>,
    cells: Vec<usize>,
    /// `(i, j, axis)` with both cells in the domain.
    inner: Vec<(usize, usize, usize)>,
    /// `(i, axis, φ₀ at the face centre)`.
    outer: Vec<(usize, usize, f64)>,
    /// Diagonal of `A` per local cell.
    coef: Vec<[f64; 3]>,
}

fn faces(field: &OrderField, mask: &DomainMask, cfg: &ElectrostaticConfig) -> Result<Faces> {
    let g = field.grid;
    if mask.grid != g {
        return Err(EnergyError::Config("mask and field grids differ".into()));
    }
    let cells: Vec<usize> = (0..g.len()).filter(|&i| mask.in_domain(i)).collect();
    let mut local = vec![usize::MAX; g.len()];
    for (l, &i) in cells.iter().enumerate() {
        local[i] = l;
    }
    let mut coef = Vec::with_capacity(cells.len());
    for &i in &cells {
        let m = field.values[i].matrix();
        let a: [f64; 3] = std::array::from_fn(|k| cfg.a_iso + cfg.a_aniso * m[(k, k)]);
        if a.iter().any(|v| !(*v > 0.0)) {
            return Err(EnergyError::Config(format!("dielectric coefficient {a:?} at cell {i} is not positive")));
        }
        coef.push(a);
    }
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    for (l, &i) in cells.iter().enumerate() {
        let x = g.point(i);
        for axis in 0..3 {
            for sign in [1i64, -1] {
                let mut d = [0i64; 3];
                d[axis] = sign;
                let j = g.shifted(i, d);
                if local[j] != usize::MAX {
                    if sign == 1 {
                        inner.push((l, local[j], axis));
                    }
                } else {
                    let mut y = x;
                    y[axis] += 0.5 * sign as f64 * g.h;
                    outer.push((l, axis, cfg.phi0.eval(&y)));
                }
            }
        }
    }
    Ok(Faces {
        local,
        cells,
        inner,
        outer,
        coef,
    })
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// `−½ Σ_f a_f h² (Δφ)² / d_f` for potential values on the domain cells.
fn discrete_energy(f: &Faces, phi: &[f64], h: f64) -> f64 {
    let mut e = 0.0;
    for &(i, j, ax) in &f.inner {
        let dphi = phi[i] - phi[j];
        e += harmonic(f.coef[i][ax], f.coef[j][ax]) * h * dphi * dphi;
    }
    for &(i, ax, v) in &f.outer {
        let dphi = phi[i] - v;
        e += 2.0 * f.coef[i][ax] * h * dphi * dphi;
    }
    -0.5 * e
}

/// Solves the finite-volume problem `∇·(A(b)∇φ) = 0` on the domain cells
/// with Dirichlet data on faces shared with exterior cells.
pub fn estat_solve(field: &OrderField, mask: &DomainMask, cfg: &ElectrostaticConfig) -> Result<EstatSolution> {
    cfg.validate()?;
    let g = field.grid;
    let h = g.h;
    let f = faces(field, mask, cfg)?;
    let n = f.cells.len();
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for &(i, j, ax) in &f.inner {
        let w = harmonic(f.coef[i][ax], f.coef[j][ax]) * h;
        diag[i] += w;
        diag[j] += w;
    }
    for &(i, ax, v) in &f.outer {
        let w = 2.0 * f.coef[i][ax] * h;
        diag[i] += w;
        rhs[i] += w * v;
    }
    let weights: Vec<f64> = f
        .inner
        .iter()
        .map(|&(i, j, ax)| harmonic(f.coef[i][ax], f.coef[j][ax]) * h)
        .collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        for k in 0..n {
            y[k] = diag[k] * x[k];
        }
        for (&(i, j, _), w) in f.inner.iter().zip(&weights) {
            y[i] -= w * x[j];
            y[j] -= w * x[i];
        }
    };
    // start from the boundary data evaluated at cell centres
    let mut phi_local: Vec<f64> = f.cells.iter().map(|&i| cfg.phi0.eval(&g.point(i))).collect();
    let report = pcg(apply, &diag, &rhs, &mut phi_local, cfg.cg_tol, cfg.cg_maxiter)?;
    let energy = discrete_energy(&f, &phi_local, h);

    let mut da = vec![[0.0; 3]; n];
    for &(i, j, ax) in &f.inner {
        let (ai, aj) = (f.coef[i][ax], f.coef[j][ax]);
        let dphi = phi_local[i] - phi_local[j];
        let s = -0.5 * h * dphi * dphi * 2.0 / ((ai + aj) * (ai + aj));
        da[i][ax] += s * aj * aj;
        da[j][ax] += s * ai * ai;
    }
    for &(i, ax, v) in &f.outer {
        let dphi = phi_local[i] - v;
        da[i][ax] -= h * dphi * dphi;
    }
    let diag_basis: [[f64; 3]; 5] = std::array::from_fn(|c| {
        let m = basis_matrix(c);
        [m[(0, 0)], m[(1, 1)], m[(2, 2)]]
    });
    let mut envelope_gradient = vec![Vec5::zeros(); g.len()];
    for (l, &i) in f.cells.iter().enumerate() {
        envelope_gradient[i] = Vec5::from_fn(|c, _| {
            cfg.a_aniso * (0..3).map(|ax| da[l][ax] * diag_basis[c][ax]).sum::<f64>()
        });
    }
    let phi = (0..g.len())
        .map(|i| match f.local[i] {
            usize::MAX => cfg.phi0.eval(&g.point(i)),
            l => phi_local[l],
        })
        .collect();
    Ok(EstatSolution {
        phi,
        energy,
        residual: report.residual,
        iterations: report.iterations,
        envelope_gradient,
    })
}

/// The discrete electrostatic functional at an arbitrary potential (values
/// on exterior cells are ignored).
pub fn estat_functional(field: &OrderField, mask: &DomainMask, cfg: &ElectrostaticConfig, phi: &[f64]) -> Result<f64> {
    let f = faces(field, mask, cfg)?;
    let local: Vec<f64> = f.cells.iter().map(|&i| phi[i]).collect();
    Ok(discrete_energy(&f, &local, field.grid.h))
}

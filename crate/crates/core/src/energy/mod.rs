//! Discrete energies: the periodic functional, its gradient, the gradient
//! limit, electrostatics and the bounded-domain functional.

mod bounded;
mod cg;
mod estat;
mod limit;

pub use bounded::{
    check_admissible, fit_exponent, g_eps, g_eps_gradient, harmonic_fill, remainder_ladder, remainders, BoundedProblem,
    LadderReport, RemainderReport,
};
pub use estat::{estat_functional, estat_solve, ElectrostaticConfig, EstatSolution, Potential};
pub use limit::{
    bilinear_vs_limit, Mat15, elastic_matrix, frank_split, gamma_energy, gamma_energy_unchecked, FrankSplit, LimitRow,
};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{QTensor, Vec5};
use crate::fft::Fft3;
use crate::field::{FieldError, OrderField, PeriodizedKernelGrid};
use crate::kernel::KernelError;
use crate::maxent::{solve_dual, BulkData, MaxentError, NewtonOptions, SphereQuadrature, SphereSpec};
use crate::Multiplier;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("bulk potential at cell {cell}: {source}")]
    Maxent { cell: usize, source: MaxentError },
    #[error("{} cells within the projection margin of the boundary, first {:?}", .cells.len(), &.cells[..cells.len().min(8)])]
    Saturated { cells: Vec<usize> },
    #[error("{} frozen cells differ from the boundary data, first {:?}", .cells.len(), &.cells[..cells.len().min(8)])]
    Admissibility { cells: Vec<usize> },
    #[error("field is off the ground-state manifold: distance {distance:.3e} at cell {cell}")]
    OffManifold { cell: usize, distance: f64 },
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:.3e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, EnergyError>;

/// Terms of a discrete energy; `total` is summed in the order listed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub bulk: f64,
    pub bilinear: f64,
    pub electrostatic: f64,
    pub total: f64,
    pub epsilon: f64,
}

impl EnergyBreakdown {
    pub fn new(bulk: f64, bilinear: f64, electrostatic: f64, epsilon: f64) -> Self {
        EnergyBreakdown {
            bulk,
            bilinear,
            electrostatic,
            total: bulk + bilinear + electrostatic,
            epsilon,
        }
    }
}

/// Per-node dual solves of the bulk potential with warm starts kept between
/// calls.
#[derive(Clone, Debug)]
pub struct BulkSolver {
    pub quad: SphereQuadrature,
    pub opts: NewtonOptions,
    warm: Vec<Multiplier>,
}

impl BulkSolver {
    pub fn new(sphere: SphereSpec) -> Self {
        BulkSolver {
            quad: SphereQuadrature::new(sphere),
            opts: NewtonOptions::default(),
            warm: Vec::new(),
        }
    }

    pub fn for_bulk(bulk: &BulkData) -> Self {
        Self::new(bulk.sphere)
    }

    /// Sum of `ψ(b)` over the active cells and, if asked, `Λ_b − k₀b` per cell.
    pub fn evaluate(
        &mut self,
        values: &[QTensor],
        active: Option<&[bool]>,
        bulk: &BulkData,
        want_gradient: bool,
    ) -> Result<(f64, Option<Vec<Vec5>>)> {
        if self.warm.len() != values.len() {
            self.warm = vec![Multiplier::zero(); values.len()];
        }
        let bad: Vec<usize> = (0..values.len())
            .filter(|&i| active.map_or(true, |a| a[i]) && !(values[i].is_finite() && values[i].in_open_set(0.0)))
            .collect();
        if !bad.is_empty() {
            return Err(EnergyError::Saturated { cells: bad });
        }
        let quad = &self.quad;
        let opts = &self.opts;
        let results: Vec<std::result::Result<Option<(f64, Vec5)>, (usize, MaxentError)>> = values
            .par_iter()
            .zip(self.warm.par_iter_mut())
            .enumerate()
            .map(|(i, (b, warm))| {
                if !active.map_or(true, |a| a[i]) {
                    return Ok(None);
                }
                let sol = match solve_dual(b, warm, opts, quad) {
                    Ok(s) => s,
                    Err(_) => solve_dual(b, &Multiplier::zero(), opts, quad).map_err(|e| (i, e))?,
                };
                *warm = sol.lambda;
                let psi = bulk.psi_from(sol.psi_s, b);
                Ok(Some((psi, sol.lambda.0 - b.0 * bulk.k0)))
            })
            .collect();
        let mut sum = 0.0;
        let mut grad = want_gradient.then(|| vec![Vec5::zeros(); values.len()]);
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(Some((psi, g))) => {
                    sum += psi;
                    if let Some(gr) = grad.as_mut() {
                        gr[i] = g;
                    }
                }
                Ok(None) => {}
                Err((cell, source)) => return Err(EnergyError::Maxent { cell, source }),
            }
        }
        Ok((sum, grad))
    }
}

/// Spectral evaluation of `(1/4ε²) h⁶ ΣΣ K_ε(x−y)(b(x)−b(y))^⊗2` and its
/// derivative with respect to the nodal values.
pub fn bilinear_spectral(values: &[QTensor], kgrid: &PeriodizedKernelGrid, want_gradient: bool) -> (f64, Option<Vec<Vec5>>) {
    let g = kgrid.grid;
    if kgrid.zero {
        return (0.0, want_gradient.then(|| vec![Vec5::zeros(); values.len()]));
    }
    let fft = Fft3::new(g.n);
    let mut hat: Vec<Vec<Complex64>> = (0..5)
        .map(|a| {
            let mut buf: Vec<Complex64> = values.iter().map(|q| Complex64::new(q.0[a], 0.0)).collect();
            fft.forward(&mut buf);
            buf
        })
        .collect();
    let eps2 = kgrid.epsilon * kgrid.epsilon;
    let h3 = g.cell_volume();
    let mut sum = 0.0;
    let mut out: Option<Vec<Vec<Complex64>>> = want_gradient.then(|| vec![vec![Complex64::default(); g.len()]; 5]);
    for k in 0..g.len() {
        let d = &kgrid.drops[k];
        let v: [Complex64; 5] = std::array::from_fn(|a| hat[a][k]);
        let w = crate::field::apply_sym(d, &v);
        for a in 0..5 {
            sum += v[a].re * w[a].re + v[a].im * w[a].im;
        }
        if let Some(o) = out.as_mut() {
            for a in 0..5 {
                o[a][k] = w[a];
            }
        }
    }
    let energy = h3 / (4.0 * eps2) * 2.0 / g.len() as f64 * sum;
    let grad = out.map(|mut o| {
        let scale = h3 / eps2;
        let mut grad = vec![Vec5::zeros(); g.len()];
        for (a, buf) in o.iter_mut().enumerate() {
            fft.inverse(buf);
            for (gr, v) in grad.iter_mut().zip(buf.iter()) {
                gr[a] = scale * v.re;
            }
        }
        grad
    });
    hat.clear();
    (energy, grad)
}

/// `(1/4ε²) h⁶ Σ_x Σ_y S(x−y)(b(x)−b(y))^⊗2` by direct summation over the
/// real-space samples. Cost `O(N⁶)`; meant for small grids.
pub fn bilinear_double_sum(values: &[QTensor], kgrid: &PeriodizedKernelGrid) -> f64 {
    let g = kgrid.grid;
    let samples = kgrid.real_space_samples();
    let h3 = g.cell_volume();
    let mut sum = 0.0;
    for x in 0..g.len() {
        let [xi, xj, xk] = g.coords(x);
        for y in 0..g.len() {
            if x == y {
                continue;
            }
            let [yi, yj, yk] = g.coords(y);
            let d = g.wrap(xi as i64 - yi as i64, xj as i64 - yj as i64, xk as i64 - yk as i64);
            let diff = values[x].0 - values[y].0;
            let s = &samples[d];
            let mut q = 0.0;
            for a in 0..5 {
                for b in 0..5 {
                    q += diff[a] * s[crate::field::sym_index(a, b)] * diff[b];
                }
            }
            sum += q;
        }
    }
    h3 * h3 / (4.0 * kgrid.epsilon * kgrid.epsilon) * sum
}

pub(crate) fn check_field(field: &OrderField, kgrid: &PeriodizedKernelGrid, epsilon: f64) -> Result<()> {
    kgrid.check(&field.grid, epsilon)?;
    if field.values.len() != field.grid.len() {
        return Err(FieldError::Mismatch("value count does not match the grid".into()).into());
    }
    Ok(())
}

/// The periodic energy `F_ε`.
pub fn f_eps(field: &OrderField, kgrid: &PeriodizedKernelGrid, bulk: &BulkData, epsilon: f64) -> Result<EnergyBreakdown> {
    f_eps_with(field, kgrid, bulk, epsilon, &mut BulkSolver::for_bulk(bulk))
}

pub fn f_eps_with(
    field: &OrderField,
    kgrid: &PeriodizedKernelGrid,
    bulk: &BulkData,
    epsilon: f64,
    solver: &mut BulkSolver,
) -> Result<EnergyBreakdown> {
    check_field(field, kgrid, epsilon)?;
    let scale = field.grid.cell_volume() / (epsilon * epsilon);
    let (psi, _) = solver.evaluate(&field.values, None, bulk, false)?;
    let (bil, _) = bilinear_spectral(&field.values, kgrid, false);
    Ok(EnergyBreakdown::new(scale * psi, bil, 0.0, epsilon))
}

/// `F_ε` together with its derivative with respect to the nodal values.
pub fn f_eps_gradient(
    field: &OrderField,
    kgrid: &PeriodizedKernelGrid,
    bulk: &BulkData,
    epsilon: f64,
    solver: &mut BulkSolver,
) -> Result<(EnergyBreakdown, OrderField)> {
    check_field(field, kgrid, epsilon)?;
    let scale = field.grid.cell_volume() / (epsilon * epsilon);
    let (psi, bg) = solver.evaluate(&field.values, None, bulk, true)?;
    let (bil, lg) = bilinear_spectral(&field.values, kgrid, true);
    let (bg, lg) = (bg.unwrap(), lg.unwrap());
    let values = bg.iter().zip(&lg).map(|(b, l)| QTensor(b * scale + l)).collect();
    Ok((
        EnergyBreakdown::new(scale * psi, bil, 0.0, epsilon),
        OrderField {
            grid: field.grid,
            values,
        },
    ))
}

//! Order-parameter fields on the torus `[0, 2π)³`.

mod director;
mod kernel_grid;
mod mask;

pub use director::{director_to_field, DirectorField, DirectorSpec};
pub use kernel_grid::{
    apply_sym, build_periodized_kernel, lattice_samples, pack, unpack, KernelSampling, LatticeOptions, LatticeSamples, PeriodizedKernelGrid, Sym5,
};
pub(crate) use kernel_grid::sym_index;
pub use mask::{build_mask, CollarLaw, DomainMask, Geometry, Label};

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{Mat3, QTensor, Vec3};
use crate::kernel::{GradQ, KernelError};
use crate::maxent::dist_to_m;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("grid size {0} must be even and at least 8")]
    BadGrid(usize),
    #[error("offset must be nonzero")]
    ZeroOffset,
    #[error("director vanishes at cell {0}")]
    ZeroDirector(usize),
    #[error("resolution: epsilon {epsilon} is below 4h = {limit}")]
    Resolution { epsilon: f64, limit: f64 },
    #[error("lattice sum tail bound {bound:e} exceeds tolerance {tol:e}")]
    Truncation { bound: f64, tol: f64 },
    #[error("domain configuration: {0}")]
    Config(String),
    #[error("grid mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Uniform cell-centred grid with `n` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub n: usize,
    pub h: f64,
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self, FieldError> {
        if n < 8 || n % 2 != 0 {
            return Err(FieldError::BadGrid(n));
        }
        Ok(TorusGrid { n, h: TAU / n as f64 })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn wrap(&self, i: i64, j: i64, k: i64) -> usize {
        let n = self.n as i64;
        self.index(i.rem_euclid(n) as usize, j.rem_euclid(n) as usize, k.rem_euclid(n) as usize)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        [idx % self.n, (idx / self.n) % self.n, idx / (self.n * self.n)]
    }

    /// Cell centre `((i+½)h, (j+½)h, (k+½)h)`.
    #[inline]
    pub fn point(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.h
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    pub fn volume(&self) -> f64 {
        TAU * TAU * TAU
    }

    /// Integer wavevector of a transform index.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        let [i, j, k] = self.coords(idx);
        [
            crate::fft::frequency(i, self.n),
            crate::fft::frequency(j, self.n),
            crate::fft::frequency(k, self.n),
        ]
    }

    /// Minimal-image offset of a flat index, in cells.
    #[inline]
    pub fn offset(&self, idx: usize) -> [i64; 3] {
        self.wavevector(idx)
    }

    /// Index shifted by a lattice offset with wraparound.
    #[inline]
    pub fn shifted(&self, idx: usize, d: [i64; 3]) -> usize {
        let [i, j, k] = self.coords(idx);
        self.wrap(i as i64 + d[0], j as i64 + d[1], k as i64 + d[2])
    }
}

/// A grid of order-parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderField {
    pub grid: TorusGrid,
    pub values: Vec<QTensor>,
}

impl OrderField {
    pub fn constant(grid: TorusGrid, q: QTensor) -> Self {
        OrderField {
            grid,
            values: vec![q; grid.len()],
        }
    }

    pub fn from_fn<F: FnMut(Vec3) -> QTensor>(grid: TorusGrid, mut f: F) -> Self {
        OrderField {
            grid,
            values: (0..grid.len()).map(|i| f(grid.point(i))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|q| q.is_finite())
    }

    /// True when every value lies in the closed moment set.
    pub fn in_closed_set(&self, tol: f64) -> bool {
        self.values.iter().all(|q| q.in_closed_set(tol))
    }

    /// `b(· + d h)`.
    pub fn translated(&self, d: [i64; 3]) -> Self {
        let g = self.grid;
        OrderField {
            grid: g,
            values: (0..g.len()).map(|i| self.values[g.shifted(i, d)]).collect(),
        }
    }

    /// `(h³ Σ |b|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|q| q.dot(q)).sum::<f64>()).sqrt()
    }

    pub fn l2_distance(&self, other: &OrderField) -> f64 {
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (*a - *b).norm().powi(2)).sum();
        (self.grid.cell_volume() * s).sqrt()
    }

    /// Largest distance to the ground-state manifold over `cells`.
    pub fn max_dist_to_m<I: IntoIterator<Item = usize>>(&self, cells: I, s_star: f64) -> f64 {
        cells.into_iter().map(|i| dist_to_m(&self.values[i], s_star)).fold(0.0, f64::max)
    }

    /// Component `a` of every value.
    pub fn component(&self, a: usize) -> Vec<f64> {
        self.values.iter().map(|q| q.0[a]).collect()
    }
}

/// `(b(x + hd) − b(x)) / |hd|` with periodic wraparound.
pub fn difference_quotient(field: &OrderField, d: [i64; 3]) -> Result<OrderField, FieldError> {
    if d == [0, 0, 0] {
        return Err(FieldError::ZeroOffset);
    }
    let g = field.grid;
    let len = g.h * ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
    Ok(OrderField {
        grid: g,
        values: (0..g.len())
            .map(|i| (field.values[g.shifted(i, d)] - field.values[i]) * (1.0 / len))
            .collect(),
    })
}

/// Central differences `∂_γ b` for each axis.
pub fn discrete_gradient(field: &OrderField) -> Vec<[QTensor; 3]> {
    let g = field.grid;
    let inv = 0.5 / g.h;
    (0..g.len())
        .map(|i| {
            std::array::from_fn(|axis| {
                let mut e = [0i64; 3];
                e[axis] = 1;
                let fwd = g.shifted(i, e);
                e[axis] = -1;
                let bwd = g.shifted(i, e);
                (field.values[fwd] - field.values[bwd]) * inv
            })
        })
        .collect()
}

/// The gradient at one node as a matrix triple `∂_γ Q`.
pub fn gradient_matrices(grad: &[QTensor; 3]) -> GradQ {
    let m: [Mat3; 3] = std::array::from_fn(|g| grad[g].matrix());
    m
}

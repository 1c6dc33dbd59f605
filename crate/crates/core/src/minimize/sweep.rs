use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::energy::BoundedProblem;
use crate::field::{
    build_mask, build_periodized_kernel, director_to_field, CollarLaw, DirectorSpec, FieldError, Geometry,
    KernelSampling, Label, LatticeOptions, OrderField, TorusGrid,
};
use crate::kernel::{elastic_tensor, KernelSpec, QuadratureSpec};
use crate::maxent::BulkData;

use super::{minimize_director, minimize_geps, DirectorResult, MinimizeError, MinimizeOptions, Result, StopReason};

/// Everything a ladder run needs. `grids` holds one size for the whole
/// ladder or one size per rung.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub kernel: KernelSpec,
    pub bulk: BulkData,
    pub geometry: Geometry,
    pub law: CollarLaw,
    pub boundary: DirectorSpec,
    pub epsilons: Vec<f64>,
    pub grids: Vec<usize>,
    pub sampling: KernelSampling,
    pub lattice: LatticeOptions,
    pub quadrature: QuadratureSpec,
    pub minimize: MinimizeOptions,
    pub director: MinimizeOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub n: usize,
    pub energy: f64,
    pub limit_energy: f64,
    /// `|E_ε − E_lim| / |E_lim|`, or the absolute error when the limit vanishes.
    pub rel_error: f64,
    /// `L²(Ω)` distance between the minimizer and the lifted limit minimizer.
    pub l2_distance: f64,
    pub max_dist_to_m: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn energies_bounded(&self) -> bool {
        self.rows.iter().all(|r| r.energy.is_finite())
    }

    pub fn dist_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].max_dist_to_m < w[0].max_dist_to_m)
    }

    pub fn error_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].rel_error < w[0].rel_error)
    }
}

impl SweepConfig {
    fn grid_for(&self, rung: usize) -> Result<usize> {
        match self.grids.len() {
            1 => Ok(self.grids[0]),
            n if n == self.epsilons.len() => Ok(self.grids[rung]),
            _ => Err(MinimizeError::Config(format!(
                "{} grid sizes given for {} ladder rungs",
                self.grids.len(),
                self.epsilons.len()
            ))),
        }
    }
}

/// Runs the bounded-domain ladder: on every rung the `G_ε` minimizer is
/// computed from the lifted boundary director and compared with the
/// minimizer of the discrete Frank energy on the same grid. Rungs come out
/// ordered by decreasing `ε`; rungs the kernel sampling cannot resolve are
/// skipped with a warning.
pub fn sweep_gamma(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.epsilons.is_empty() {
        return Err(MinimizeError::Config("empty ladder".into()));
    }
    let s_star = cfg.bulk.s_star;
    let coeffs = elastic_tensor(&cfg.kernel, &cfg.quadrature, s_star)?;
    let mut order: Vec<usize> = (0..cfg.epsilons.len()).collect();
    order.sort_by(|&a, &b| cfg.epsilons[b].total_cmp(&cfg.epsilons[a]));

    let mut limits: BTreeMap<usize, DirectorResult> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for rung in order {
        let eps = cfg.epsilons[rung];
        let grid = TorusGrid::new(cfg.grid_for(rung)?)?;
        let kgrid = match build_periodized_kernel(&cfg.kernel, grid, eps, cfg.sampling, &cfg.lattice) {
            Ok(k) => k,
            Err(FieldError::Resolution { epsilon, limit }) => {
                warnings.push(format!("skipping epsilon = {epsilon}: below the resolution limit {limit} at N = {}", grid.n));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mask = build_mask(&cfg.geometry, eps, &cfg.law, grid, None)?;
        let director = cfg.boundary.sample(grid)?;
        if !limits.contains_key(&grid.n) {
            let lim = minimize_director(&director, &mask, &coeffs, &cfg.director)?;
            limits.insert(grid.n, lim);
        }
        let limit = &limits[&grid.n];

        // closed-form boundary directors are defined on the whole torus, so
        // the lift is the sampled director itself
        let b0 = director_to_field(&director, s_star);
        let problem = BoundedProblem {
            b0: &b0,
            mask: &mask,
            kgrid: &kgrid,
            bulk: &cfg.bulk,
            estat: None,
        };
        let result = minimize_geps(&problem, &cfg.minimize)?;
        let energy = result.energy.total;
        let lifted = director_to_field(&limit.field, s_star);
        let rel_error = if limit.energy.abs() > 0.0 {
            (energy - limit.energy).abs() / limit.energy.abs()
        } else {
            energy.abs()
        };
        rows.push(SweepRow {
            epsilon: eps,
            n: grid.n,
            energy,
            limit_energy: limit.energy,
            rel_error,
            l2_distance: domain_distance(&result.field, &lifted, &mask.labels),
            max_dist_to_m: result.field.max_dist_to_m(mask.cells(Label::Interior), s_star),
            iterations: result.iterations,
            converged: result.stop != StopReason::MaxIters,
        });
    }
    Ok(SweepResult { rows, warnings })
}

fn domain_distance(a: &OrderField, b: &OrderField, labels: &[Label]) -> f64 {
    let s: f64 = (0..a.len())
        .filter(|&i| labels[i] != Label::Exterior)
        .map(|i| (a.values[i] - b.values[i]).norm().powi(2))
        .sum();
    (a.grid.cell_volume() * s).sqrt()
}

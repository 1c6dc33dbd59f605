//! Projected-gradient minimization of the discrete energies, the director
//! limit problem and the ε-sweep harness.

mod director;
mod probe;
mod sweep;

pub use director::{director_energy, director_gradient, minimize_director, DirectorResult};
pub use probe::{best_shift, local_min_probe, ProbeOptions, ProbeReport};
pub use sweep::{sweep_gamma, SweepConfig, SweepResult, SweepRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::Vec5;
use crate::energy::{f_eps_gradient, g_eps_gradient, BoundedProblem, BulkSolver, EnergyBreakdown, EnergyError};
use crate::field::{Label, OrderField, PeriodizedKernelGrid};
use crate::maxent::{dist_to_m, project_q, BulkData};
use crate::QTensor;

#[derive(Debug, Error)]
pub enum MinimizeError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Field(#[from] crate::field::FieldError),
    #[error(transparent)]
    Kernel(#[from] crate::kernel::KernelError),
    #[error("line search stalled at iteration {iteration}: energy {energy:.6e}, gradient norm {grad_norm:.3e}, step {step:.3e}")]
    Stall {
        iteration: usize,
        energy: f64,
        grad_norm: f64,
        step: f64,
    },
    #[error("director degenerates at cell {cell} (|n| = {norm:.3e})")]
    Degenerate { cell: usize, norm: f64 },
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, MinimizeError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizeOptions {
    pub step0: f64,
    pub backtrack: f64,
    /// Stop once the projected-gradient norm falls below this.
    pub grad_tol: f64,
    /// Also stop once an accepted step lowers the energy by less than
    /// `energy_tol · |E|`; zero disables the test.
    pub energy_tol: f64,
    pub max_iters: usize,
    pub projection_margin: f64,
    pub armijo: f64,
    pub min_step: f64,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            step0: 1e-2,
            backtrack: 0.5,
            grad_tol: 1e-6,
            energy_tol: 0.0,
            max_iters: 500,
            projection_margin: 1e-3,
            armijo: 1e-4,
            min_step: 1e-14,
            seed: 0,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step0 > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.grad_tol >= 0.0
            && self.energy_tol >= 0.0
            && self.projection_margin >= 0.0
            && self.projection_margin < 1.0 / 3.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.min_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(MinimizeError::Config(format!("invalid minimization options {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradTol,
    EnergyTol,
    /// Further decrease is below the rounding level of the energy.
    Precision,
    MaxIters,
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub field: OrderField,
    pub energy: EnergyBreakdown,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Outcome of the generic descent loop on flat node data.
pub(crate) struct Descent<T, X> {
    pub x: Vec<T>,
    pub energy: f64,
    pub extra: X,
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
}

/// Node values the descent loop can move: a vector space with a projection.
pub(crate) trait Node: Copy {
    fn axpy(&self, t: f64, d: &Self) -> Self;
    fn dot(&self, other: &Self) -> f64;
    fn sub(&self, other: &Self) -> Self;
}

impl<const D: usize> Node for nalgebra::SVector<f64, D> {
    fn axpy(&self, t: f64, d: &Self) -> Self {
        self + d * t
    }
    fn dot(&self, other: &Self) -> f64 {
        nalgebra::Matrix::dot(self, other)
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
}

/// Monotone projected gradient with Barzilai–Borwein steps and Armijo
/// backtracking along the projection arc.
///
/// `eval` returns the energy, the derivative per node and extra data;
/// `project` maps a trial node onto the feasible set (returning an error
/// for degenerate nodes). Gradients are divided by `weight` (the cell
/// volume) to give the `L²` gradient. `magnitude` is the size of the terms
/// the energy is summed from, which sets its rounding level when they
/// cancel.
const ROUNDOFF: f64 = 1e3 * f64::EPSILON;

pub(crate) fn descend<T, X, E, P>(
    x0: Vec<T>,
    free: &[bool],
    weight: f64,
    magnitude: f64,
    opts: &MinimizeOptions,
    mut eval: E,
    project: P,
) -> Result<Descent<T, X>>
where
    T: Node,
    E: FnMut(&[T]) -> Result<(f64, Vec<T>, X)>,
    P: Fn(usize, &T) -> Result<T>,
{
    opts.validate()?;
    let mut x = x0;
    for i in 0..x.len() {
        if free[i] {
            x[i] = project(i, &x[i])?;
        }
    }
    let (mut e, mut g, mut extra) = eval(&x)?;
    let mut tau = opts.step0;
    let mut trace = Vec::new();
    let free_idx: Vec<usize> = (0..x.len()).filter(|&i| free[i]).collect();
    let inv_w = 1.0 / weight;
    // projected-gradient residual x − P(x − G) in the weighted L² norm
    let pg_norm = |x: &[T], g: &[T]| -> Result<f64> {
        let mut s = 0.0;
        for &i in &free_idx {
            let p = project(i, &x[i].axpy(-inv_w, &g[i]))?;
            let d = x[i].sub(&p);
            s += d.dot(&d);
        }
        Ok((weight * s).sqrt())
    };
    let mut gn = pg_norm(&x, &g)?;
    trace.push(TraceRow {
        iter: 0,
        energy: e,
        grad_norm: gn,
        step: 0.0,
    });
    let mut stop = StopReason::MaxIters;
    let mut iter = 0;
    while iter < opts.max_iters {
        if gn <= opts.grad_tol {
            stop = StopReason::GradTol;
            break;
        }
        let mut t = tau;
        let mut predicted: f64 = 0.0;
        let accepted = loop {
            let mut xt = x.clone();
            let mut decrease = 0.0;
            for &i in &free_idx {
                xt[i] = project(i, &x[i].axpy(-t * inv_w, &g[i]))?;
                decrease += g[i].dot(&xt[i].sub(&x[i]));
            }
            predicted = predicted.max(-decrease);
            match eval(&xt) {
                Ok((et, gt, ex)) if et <= e + opts.armijo * decrease + 1e-14 && decrease <= 0.0 => {
                    break Some((xt, et, gt, ex));
                }
                // the trial left the region where the bulk potential can be
                // evaluated: shorten the step
                Ok(_)
                | Err(MinimizeError::Energy(EnergyError::Saturated { .. } | EnergyError::Maxent { .. })) => {}
                Err(err) => return Err(err),
            }
            t *= opts.backtrack;
            if t < opts.min_step {
                break None;
            }
        };
        let Some((xt, et, gt, ex)) = accepted else {
            // no step can show a decrease above the rounding level of the energy
            if predicted <= ROUNDOFF * e.abs().max(magnitude).max(1.0) {
                stop = StopReason::Precision;
                break;
            }
            return Err(MinimizeError::Stall {
                iteration: iter,
                energy: e,
                grad_norm: gn,
                step: t,
            });
        };
        iter += 1;
        // Barzilai–Borwein step from the accepted pair
        let mut ss = 0.0;
        let mut sy = 0.0;
        for &i in &free_idx {
            let s = xt[i].sub(&x[i]);
            let y = gt[i].sub(&g[i]);
            ss += s.dot(&s);
            sy += s.dot(&y) * inv_w;
        }
        tau = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { (2.0 * t).min(1e10) };
        let drop = e - et;
        x = xt;
        e = et;
        g = gt;
        extra = ex;
        gn = pg_norm(&x, &g)?;
        trace.push(TraceRow {
            iter,
            energy: e,
            grad_norm: gn,
            step: t,
        });
        if opts.energy_tol > 0.0 && drop <= opts.energy_tol * e.abs() {
            stop = StopReason::EnergyTol;
            break;
        }
    }
    if stop == StopReason::MaxIters && gn <= opts.grad_tol {
        stop = StopReason::GradTol;
    }
    Ok(Descent {
        x,
        energy: e,
        extra,
        trace,
        stop,
    })
}

fn to_nodes(f: &OrderField) -> Vec<Vec5> {
    f.values.iter().map(|q| q.0).collect()
}

fn from_nodes(template: &OrderField, x: Vec<Vec5>) -> OrderField {
    OrderField {
        grid: template.grid,
        values: x.into_iter().map(QTensor).collect(),
    }
}

/// Bulk terms are `ψ_s − ½k₀|b|² − c₅` per active cell and the bilinear
/// form carries `k₀|b|²` per cell, all scaled by `h³/ε²`.
fn term_magnitude(field: &OrderField, bulk: &BulkData, epsilon: f64, active: &[bool]) -> f64 {
    let s: f64 = field
        .values
        .iter()
        .zip(active)
        .map(|(b, a)| bulk.k0 * b.dot(b) + if *a { bulk.c5.abs() } else { 0.0 })
        .sum();
    s * field.grid.cell_volume() / (epsilon * epsilon)
}

fn check_start(init: &OrderField, margin: f64) -> Result<()> {
    let tol = 1e-9;
    if let Some(i) = (0..init.len()).find(|&i| !init.values[i].is_finite() || !init.values[i].in_closed_set(tol)) {
        return Err(MinimizeError::Precondition(format!(
            "initial value at cell {i} lies outside the closed moment set"
        )));
    }
    let _ = margin;
    Ok(())
}

/// Local minimization of the periodic energy from `init`.
pub fn minimize_feps(
    init: &OrderField,
    kgrid: &PeriodizedKernelGrid,
    bulk: &BulkData,
    epsilon: f64,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    check_start(init, opts.projection_margin)?;
    let mut solver = BulkSolver::for_bulk(bulk);
    let free = vec![true; init.len()];
    let margin = opts.projection_margin;
    let d = descend(
        to_nodes(init),
        &free,
        init.grid.cell_volume(),
        term_magnitude(init, bulk, epsilon, &free),
        opts,
        |x| {
            let f = from_nodes(init, x.to_vec());
            let (e, g) = f_eps_gradient(&f, kgrid, bulk, epsilon, &mut solver)?;
            Ok((e.total, to_nodes(&g), e))
        },
        |_, v| Ok(project_q(&QTensor(*v), margin).0),
    )?;
    Ok(MinimizeResult {
        field: from_nodes(init, d.x),
        energy: d.extra,
        iterations: d.trace.len() - 1,
        trace: d.trace,
        stop: d.stop,
    })
}

/// Minimization of the bounded-domain energy with the collar and exterior
/// held at the boundary data, starting from the boundary data itself.
pub fn minimize_geps(problem: &BoundedProblem, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    let b0 = problem.b0;
    let mask = problem.mask;
    let s_star = problem.bulk.s_star;
    if let Some(i) = (0..b0.len()).find(|&i| mask.is_frozen(i) && dist_to_m(&b0.values[i], s_star) > 1e-8) {
        return Err(MinimizeError::Precondition(format!(
            "boundary data at cell {i} ({:?}) is off the ground-state manifold",
            mask.labels[i]
        )));
    }
    check_start(b0, opts.projection_margin)?;
    let mut solver = BulkSolver::for_bulk(problem.bulk);
    let free: Vec<bool> = mask.labels.iter().map(|l| *l == Label::Interior).collect();
    let margin = opts.projection_margin;
    let d = descend(
        to_nodes(b0),
        &free,
        b0.grid.cell_volume(),
        term_magnitude(b0, problem.bulk, problem.epsilon(), &free),
        opts,
        |x| {
            let f = from_nodes(b0, x.to_vec());
            let (e, mut g) = g_eps_gradient(&f, problem, &mut solver)?;
            for (q, fr) in g.values.iter_mut().zip(&free) {
                if !fr {
                    *q = QTensor::zero();
                }
            }
            Ok((e.total, to_nodes(&g), e))
        },
        |_, v| Ok(project_q(&QTensor(*v), margin).0),
    )?;
    Ok(MinimizeResult {
        field: from_nodes(b0, d.x),
        energy: d.extra,
        iterations: d.trace.len() - 1,
        trace: d.trace,
        stop: d.stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Vec3;
    use crate::energy::{f_eps, ElectrostaticConfig, Potential};
    use crate::field::{
        build_mask, build_periodized_kernel, director_to_field, CollarLaw, DirectorSpec, Geometry, KernelSampling,
        LatticeOptions, TorusGrid,
    };
    use crate::kernel::KernelSpec;
    use crate::maxent::{ground_state, SphereSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn bulk() -> BulkData {
        ground_state(30.0, SphereSpec { n_theta: 32, n_phi: 64 }).unwrap()
    }

    fn kernel() -> KernelSpec {
        KernelSpec::inverse_power([1.0, 1.0, 1.0], 6.0, 0.5)
    }

    fn kgrid(spec: &KernelSpec, grid: TorusGrid, eps: f64) -> PeriodizedKernelGrid {
        build_periodized_kernel(spec, grid, eps, KernelSampling::Spectral, &LatticeOptions::default()).unwrap()
    }

    #[test]
    fn ground_state_is_immediately_optimal() {
        let bulk = bulk();
        let grid = TorusGrid::new(8).unwrap();
        let f = OrderField::constant(grid, bulk.ground_tensor(&Vec3::z()));
        let k = kgrid(&kernel(), grid, 0.8);
        let r = minimize_feps(&f, &k, &bulk, 0.8, &MinimizeOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.energy.total.abs() < 1e-8);
    }

    #[test]
    fn perturbed_constant_relaxes_to_manifold() {
        let bulk = bulk();
        let grid = TorusGrid::new(8).unwrap();
        let n = Vec3::new(0.3, -0.2, 0.9).normalize();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = OrderField::from_fn(grid, |_| {
            bulk.ground_tensor(&n) * 0.97 + QTensor::new(std::array::from_fn(|_| rng.gen_range(-0.01..0.01)))
        });
        let eps = 0.8;
        let k = kgrid(&kernel(), grid, eps);
        let opts = MinimizeOptions {
            grad_tol: 1e-7,
            max_iters: 2000,
            ..Default::default()
        };
        let r = minimize_feps(&f, &k, &bulk, eps, &opts).unwrap();
        assert!(r.energy.total < 1e-6, "{:?} {:?}", r.energy, r.stop);
        assert!(r.trace.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-14));
        let mean = r.field.values[0];
        assert!(r.field.values.iter().all(|q| (q.0 - mean.0).norm() < 1e-3));
        assert!(dist_to_m(&mean, bulk.s_star) < 1e-3);
    }

    #[test]
    fn zero_kernel_minimizes_nodewise() {
        let bulk = bulk();
        let grid = TorusGrid::new(8).unwrap();
        let eps = 0.5;
        let k = kgrid(&KernelSpec::zero(), grid, eps);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = OrderField::from_fn(grid, |_| {
            let n = crate::basis::random_unit(&mut rng);
            QTensor::uniaxial(rng.gen_range(0.2..0.8), &n)
        });
        let opts = MinimizeOptions {
            grad_tol: 1e-9,
            max_iters: 3000,
            ..Default::default()
        };
        let r = minimize_feps(&f, &k, &bulk, eps, &opts).unwrap();
        let worst = r.field.max_dist_to_m(0..grid.len(), bulk.s_star);
        assert!(worst < 1e-4, "{worst} {:?}", r.stop);
    }

    #[test]
    fn translated_start_gives_translated_minimizer() {
        let bulk = bulk();
        let grid = TorusGrid::new(8).unwrap();
        let eps = 0.8;
        let k = kgrid(&kernel(), grid, eps);
        let f = OrderField::from_fn(grid, |x| {
            QTensor::uniaxial(0.8, &Vec3::new(x[2].cos(), x[2].sin(), 0.3).normalize())
        });
        let opts = MinimizeOptions {
            max_iters: 15,
            ..Default::default()
        };
        let a = minimize_feps(&f, &k, &bulk, eps, &opts).unwrap();
        let b = minimize_feps(&f.translated([2, 0, 5]), &k, &bulk, eps, &opts).unwrap();
        let de = (a.energy.total - b.energy.total).abs() / a.energy.total.abs();
        let dx = a.field.translated([2, 0, 5]).l2_distance(&b.field);
        assert!(de < 1e-10 && dx < 1e-8, "{de} {dx}");
    }

    #[test]
    fn deterministic_traces() {
        let bulk = bulk();
        let grid = TorusGrid::new(8).unwrap();
        let k = kgrid(&kernel(), grid, 0.8);
        let f = OrderField::from_fn(grid, |x| QTensor::uniaxial(0.7, &Vec3::new(x[0].sin(), 1.0, 0.2).normalize()));
        let opts = MinimizeOptions {
            max_iters: 10,
            ..Default::default()
        };
        let a = minimize_feps(&f, &k, &bulk, 0.8, &opts).unwrap();
        let b = minimize_feps(&f, &k, &bulk, 0.8, &opts).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.field, b.field);
    }

    fn ball() -> Geometry {
        Geometry::Ball {
            center: [std::f64::consts::PI; 3],
            radius: 2.0,
        }
    }

    #[test]
    fn constant_boundary_gives_zero_energy() {
        let bulk = bulk();
        let grid = TorusGrid::new(16).unwrap();
        let eps = 0.5;
        let mask = build_mask(&ball(), eps, &CollarLaw::default(), grid, None).unwrap();
        let b0 = OrderField::constant(grid, bulk.ground_tensor(&Vec3::x()));
        let k = kgrid(&kernel(), grid, eps);
        let p = BoundedProblem {
            b0: &b0,
            mask: &mask,
            kgrid: &k,
            bulk: &bulk,
            estat: None,
        };
        let r = minimize_geps(&p, &MinimizeOptions::default()).unwrap();
        assert!(r.energy.total.abs() < 1e-6);
        assert_eq!(r.field, b0);
    }

    #[test]
    fn off_manifold_collar_is_rejected() {
        let bulk = bulk();
        let grid = TorusGrid::new(16).unwrap();
        let eps = 0.5;
        let mask = build_mask(&ball(), eps, &CollarLaw::default(), grid, None).unwrap();
        let mut b0 = OrderField::constant(grid, bulk.ground_tensor(&Vec3::x()));
        let c = mask.cells(Label::Collar).next().unwrap();
        b0.values[c] = QTensor::uniaxial(0.3, &Vec3::x());
        let k = kgrid(&kernel(), grid, eps);
        let p = BoundedProblem {
            b0: &b0,
            mask: &mask,
            kgrid: &k,
            bulk: &bulk,
            estat: None,
        };
        assert!(matches!(minimize_geps(&p, &MinimizeOptions::default()), Err(MinimizeError::Precondition(_))));
    }

    #[test]
    fn twist_boundary_descends_and_keeps_frozen_cells() {
        let bulk = bulk();
        let grid = TorusGrid::new(16).unwrap();
        let eps = 0.5;
        let mask = build_mask(&ball(), eps, &CollarLaw::default(), grid, None).unwrap();
        let b0 = director_to_field(&DirectorSpec::Twist { q: 1.0 }.sample(grid).unwrap(), bulk.s_star);
        let k = kgrid(&kernel(), grid, eps);
        let cfg = ElectrostaticConfig::new(1.0, 0.5, Potential::Linear {
            gradient: [1.0, 0.0, 0.0],
            offset: 0.0,
        });
        let p = BoundedProblem {
            b0: &b0,
            mask: &mask,
            kgrid: &k,
            bulk: &bulk,
            estat: Some(&cfg),
        };
        let opts = MinimizeOptions {
            max_iters: 30,
            ..Default::default()
        };
        let r = minimize_geps(&p, &opts).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-14));
        assert!(r.trace.last().unwrap().energy < r.trace[0].energy);
        for i in 0..grid.len() {
            if mask.is_frozen(i) {
                assert_eq!(r.field.values[i], b0.values[i]);
            } else {
                assert!(r.field.values[i].in_closed_set(0.0));
            }
        }
        let direct = f_eps(&r.field, &k, &bulk, eps).unwrap();
        assert!(direct.bilinear == r.energy.bilinear);
    }
}

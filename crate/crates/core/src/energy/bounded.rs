use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cg::pcg;
use super::estat::{estat_solve, ElectrostaticConfig};
use super::{bilinear_spectral, check_field, BulkSolver, EnergyBreakdown, EnergyError, Result};
use crate::basis::{QTensor, Vec5};
use crate::fft::Fft3;
use crate::field::{
    lattice_samples, sym_index, DomainMask, Label, LatticeOptions, LatticeSamples, OrderField, PeriodizedKernelGrid,
    Sym5, TorusGrid,
};
use crate::kernel::{kernel_matrix, KernelSpec};
use crate::maxent::BulkData;

/// Everything the bounded-domain energy needs besides the field itself.
#[derive(Clone, Copy, Debug)]
pub struct BoundedProblem<'a> {
    /// Boundary data; the field must agree with it off the interior.
    pub b0: &'a OrderField,
    pub mask: &'a DomainMask,
    pub kgrid: &'a PeriodizedKernelGrid,
    pub bulk: &'a BulkData,
    pub estat: Option<&'a ElectrostaticConfig>,
}

impl BoundedProblem<'_> {
    pub fn epsilon(&self) -> f64 {
        self.kgrid.epsilon
    }

    fn interior(&self) -> Vec<bool> {
        self.mask.labels.iter().map(|l| *l == Label::Interior).collect()
    }
}

/// Frozen cells where `field` departs from `b0` by more than `tol`.
pub fn check_admissible(field: &OrderField, b0: &OrderField, mask: &DomainMask, tol: f64) -> Result<()> {
    if field.grid != mask.grid || b0.grid != mask.grid {
        return Err(EnergyError::Config("field, boundary data and mask grids differ".into()));
    }
    let cells: Vec<usize> = (0..field.len())
        .filter(|&i| mask.is_frozen(i) && (field.values[i].0 - b0.values[i].0).amax() > tol)
        .collect();
    if cells.is_empty() {
        Ok(())
    } else {
        Err(EnergyError::Admissibility { cells })
    }
}

const ADMISSIBLE_TOL: f64 = 1e-12;

/// The bounded-domain energy `G_ε`: bulk over the interior cells, the
/// bilinear term over the whole torus and the electrostatic term.
pub fn g_eps(field: &OrderField, p: &BoundedProblem, solver: &mut BulkSolver) -> Result<EnergyBreakdown> {
    Ok(evaluate(field, p, solver, false)?.0)
}

/// `G_ε` and its derivative in the nodal values. Entries on frozen cells
/// are left in place; callers that respect the constraint ignore them.
pub fn g_eps_gradient(
    field: &OrderField,
    p: &BoundedProblem,
    solver: &mut BulkSolver,
) -> Result<(EnergyBreakdown, OrderField)> {
    let (e, g) = evaluate(field, p, solver, true)?;
    Ok((e, g.unwrap()))
}

fn evaluate(
    field: &OrderField,
    p: &BoundedProblem,
    solver: &mut BulkSolver,
    want_gradient: bool,
) -> Result<(EnergyBreakdown, Option<OrderField>)> {
    let eps = p.epsilon();
    check_field(field, p.kgrid, eps)?;
    check_admissible(field, p.b0, p.mask, ADMISSIBLE_TOL)?;
    let active = p.interior();
    let scale = field.grid.cell_volume() / (eps * eps);
    let (psi, bg) = solver.evaluate(&field.values, Some(&active), p.bulk, want_gradient)?;
    let (bil, lg) = bilinear_spectral(&field.values, p.kgrid, want_gradient);
    let (estat, eg) = match p.estat {
        Some(cfg) => {
            let sol = estat_solve(field, p.mask, cfg)?;
            (sol.energy, Some(sol.envelope_gradient))
        }
        None => (0.0, None),
    };
    let breakdown = EnergyBreakdown::new(scale * psi, bil, estat, eps);
    let grad = if want_gradient {
        let (bg, lg) = (bg.unwrap(), lg.unwrap());
        let values = (0..field.len())
            .map(|i| {
                let mut v = lg[i];
                if active[i] {
                    v += bg[i] * scale;
                }
                if let Some(e) = &eg {
                    v += e[i];
                }
                QTensor(v)
            })
            .collect();
        Some(OrderField {
            grid: field.grid,
            values,
        })
    } else {
        None
    };
    Ok((breakdown, grad))
}

/// Replaces the values on `region` by the component-wise discrete harmonic
/// extension of the surrounding values.
pub fn harmonic_fill(field: &OrderField, region: &[bool], tol: f64, max_iter: usize) -> Result<OrderField> {
    let g = field.grid;
    if region.len() != g.len() {
        return Err(EnergyError::Config("region size does not match the grid".into()));
    }
    let cells: Vec<usize> = (0..g.len()).filter(|&i| region[i]).collect();
    if cells.is_empty() {
        return Ok(field.clone());
    }
    if cells.len() == g.len() {
        return Err(EnergyError::Config("region covers the whole torus; no boundary data".into()));
    }
    let mut local = vec![usize::MAX; g.len()];
    for (l, &i) in cells.iter().enumerate() {
        local[i] = l;
    }
    const STEPS: [[i64; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];
    let nbrs: Vec<[usize; 6]> = cells.iter().map(|&i| STEPS.map(|d| g.shifted(i, d))).collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        for (l, nb) in nbrs.iter().enumerate() {
            let mut acc = 6.0 * x[l];
            for &j in nb {
                if local[j] != usize::MAX {
                    acc -= x[local[j]];
                }
            }
            y[l] = acc;
        }
    };
    let diag = vec![6.0; cells.len()];
    let mut out = field.clone();
    for a in 0..5 {
        let rhs: Vec<f64> = nbrs
            .iter()
            .map(|nb| nb.iter().filter(|&&j| local[j] == usize::MAX).map(|&j| field.values[j].0[a]).sum())
            .collect();
        let mut x: Vec<f64> = cells.iter().map(|&i| field.values[i].0[a]).collect();
        pcg(apply, &diag, &rhs, &mut x, tol, max_iter)?;
        for (l, &i) in cells.iter().enumerate() {
            out.values[i].0[a] = x[l];
        }
    }
    Ok(out)
}

/// Remainder terms relating the energy written on `Ω` with the unperiodized
/// kernel to `G_ε`. With `G'` the former,
/// `G' = G_ε + total + m_eps` where `total = −r1 − r2/4 − r3/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderReport {
    pub epsilon: f64,
    pub delta_eps: f64,
    /// Kernel mass lost outside `Ω`, weighted by `b·b` over the interior.
    pub r1: f64,
    /// Periodized minus unperiodized kernel over `Ω × Ω`.
    pub r2: f64,
    /// Interaction of the interior with the exterior.
    pub r3: f64,
    /// The part fixed by the boundary data.
    pub m_eps: f64,
    pub total: f64,
    pub shells: usize,
    pub tail_bound: f64,
}

/// Remainders by direct lattice sums of the scaled kernel.
pub fn remainders(
    field: &OrderField,
    mask: &DomainMask,
    spec: &KernelSpec,
    bulk: &BulkData,
    options: &LatticeOptions,
) -> Result<RemainderReport> {
    let samples = lattice_samples(spec, field.grid, mask.epsilon, options)?;
    remainders_from(field, mask, spec, bulk, &samples)
}

pub(crate) fn remainders_from(
    field: &OrderField,
    mask: &DomainMask,
    spec: &KernelSpec,
    bulk: &BulkData,
    samples: &LatticeSamples,
) -> Result<RemainderReport> {
    let g = field.grid;
    if mask.grid != g {
        return Err(EnergyError::Config("mask and field grids differ".into()));
    }
    let eps = mask.epsilon;
    let h3 = g.cell_volume();
    let inv_e2 = 1.0 / (eps * eps);
    let total_k: Vec<Sym5> = (0..g.len()).map(|i| samples.total(i)).collect();
    let k0: Sym5 = std::array::from_fn(|c| h3 * total_k.iter().map(|s| s[c]).sum::<f64>());

    // differences are unchanged by a constant shift; subtracting one keeps
    // constant fields at exactly zero
    let reference = field.values[(0..g.len()).find(|&i| mask.in_domain(i)).unwrap_or(0)];
    let shifted: Vec<Vec5> = field.values.iter().map(|q| q.0 - reference.0).collect();
    let raw: Vec<Vec5> = field.values.iter().map(|q| q.0).collect();

    let ext = periodic_exterior_terms(g, &total_k, mask, &shifted);
    let inner = inner_terms(g, samples, &total_k, spec, eps, mask, &shifted);

    let mut r1 = 0.0;
    let mut collar_c = 0.0;
    let mut b_int_ext = 0.0;
    let mut b_col_ext = 0.0;
    let mut b_ext_ext = 0.0;
    let mut r2 = 0.0;
    for i in 0..g.len() {
        let s = &shifted[i];
        let form = s.dot(&sym_apply(&ext.p[i], s)) - 2.0 * s.dot(&ext.q[i]) + ext.s[i];
        match mask.labels[i] {
            Label::Exterior => b_ext_ext += form,
            Label::Interior | Label::Collar => {
                let c: Sym5 = std::array::from_fn(|k| h3 * (ext.p[i][k] + inner.conv[i][k]));
                let cbb = raw[i].dot(&sym_apply(&c, &raw[i]));
                r2 += s.dot(&sym_apply(&inner.conv[i], s)) - s.dot(&inner.w[i]);
                if mask.labels[i] == Label::Interior {
                    r1 += cbb;
                    b_int_ext += form;
                } else {
                    collar_c += cbb;
                    b_col_ext += form;
                }
            }
        }
    }
    let h6 = h3 * h3;
    let r1 = -0.5 * inv_e2 * h3 * r1;
    let r2 = 2.0 * inv_e2 * h6 * r2;
    let r3 = inv_e2 * h6 * b_int_ext;

    // collar bulk part with the lattice K0
    let mut solver = BulkSolver::for_bulk(bulk);
    let collar: Vec<bool> = mask.labels.iter().map(|l| *l == Label::Collar).collect();
    let (psi_sum, _) = solver.evaluate(&field.values, Some(&collar), bulk, false)?;
    let mut collar_bulk = psi_sum;
    for i in mask.cells(Label::Collar) {
        let b = &raw[i];
        collar_bulk += 0.5 * bulk.k0 * b.dot(b) + bulk.c5 - 0.5 * b.dot(&sym_apply(&k0, b));
    }
    let interior_volume = mask.count(Label::Interior) as f64 * h3;
    let m_eps = inv_e2 * bulk.c5 * interior_volume + inv_e2 * h3 * collar_bulk + 0.5 * inv_e2 * h3 * collar_c
        - 0.25 * inv_e2 * h6 * (2.0 * b_col_ext + b_ext_ext);
    Ok(RemainderReport {
        epsilon: eps,
        delta_eps: mask.delta_eps,
        r1,
        r2,
        r3,
        m_eps,
        total: -r1 - 0.25 * r2 - 0.5 * r3,
        shells: samples.shells,
        tail_bound: samples.tail_bound,
    })
}

fn sym_apply(s: &Sym5, v: &Vec5) -> Vec5 {
    Vec5::from_fn(|a, _| (0..5).map(|b| s[sym_index(a, b)] * v[b]).sum())
}

/// `Σ_y K(x−y) u(y)`, `Σ_y K(x−y) u(y) b(y)` and `Σ_y u(y) b(y)·K(x−y)b(y)`
/// for the exterior indicator `u`, as periodic convolutions.
struct ExteriorTerms {
    p: Vec<Sym5>,
    q: Vec<Vec5>,
    s: Vec<f64>,
}

fn periodic_exterior_terms(g: TorusGrid, k: &[Sym5], mask: &DomainMask, b: &[Vec5]) -> ExteriorTerms {
    let fft = Fft3::new(g.n);
    let n = g.len();
    let u: Vec<f64> = mask.labels.iter().map(|l| if *l == Label::Exterior { 1.0 } else { 0.0 }).collect();
    let forward = |f: &dyn Fn(usize) -> f64| {
        let mut buf: Vec<Complex64> = (0..n).map(|i| Complex64::new(f(i), 0.0)).collect();
        fft.forward(&mut buf);
        buf
    };
    let u_hat = forward(&|i| u[i]);
    let ub_hat: Vec<Vec<Complex64>> = (0..5).map(|a| forward(&|i| u[i] * b[i][a])).collect();
    let mut p = vec![[0.0; 15]; n];
    let mut q_hat = vec![vec![Complex64::default(); n]; 5];
    let mut s_hat = vec![Complex64::default(); n];
    for a in 0..5 {
        for c in a..5 {
            let idx = sym_index(a, c);
            let k_hat = forward(&|i| k[i][idx]);
            let mut buf: Vec<Complex64> = k_hat.iter().zip(&u_hat).map(|(x, y)| x * y).collect();
            fft.inverse(&mut buf);
            for (o, v) in p.iter_mut().zip(&buf) {
                o[idx] = v.re;
            }
            for t in 0..n {
                q_hat[a][t] += k_hat[t] * ub_hat[c][t];
            }
            if a != c {
                for t in 0..n {
                    q_hat[c][t] += k_hat[t] * ub_hat[a][t];
                }
            }
            let mult = if a == c { 1.0 } else { 2.0 };
            let ubb = forward(&|i| u[i] * b[i][a] * b[i][c]);
            for t in 0..n {
                s_hat[t] += k_hat[t] * ubb[t] * mult;
            }
        }
    }
    let mut q = vec![Vec5::zeros(); n];
    for (a, buf) in q_hat.iter_mut().enumerate() {
        fft.inverse(buf);
        for (o, v) in q.iter_mut().zip(buf.iter()) {
            o[a] = v.re;
        }
    }
    fft.inverse(&mut s_hat);
    ExteriorTerms {
        p,
        q,
        s: s_hat.iter().map(|v| v.re).collect(),
    }
}

/// Linear convolutions over `Ω` with `E = K_ε − K_raw`: the matrix field
/// `Σ_{y∈Ω} E(x−y)` and the vector `Σ_{y∈Ω} E(x−y) b(y)`, on domain cells.
struct InnerTerms {
    conv: Vec<Sym5>,
    w: Vec<Vec5>,
}

fn inner_terms(
    g: TorusGrid,
    samples: &LatticeSamples,
    total: &[Sym5],
    spec: &KernelSpec,
    eps: f64,
    mask: &DomainMask,
    b: &[Vec5],
) -> InnerTerms {
    let n = g.len();
    let cells: Vec<usize> = (0..n).filter(|&i| mask.in_domain(i)).collect();
    let mut conv = vec![[0.0; 15]; n];
    let mut w = vec![Vec5::zeros(); n];
    if cells.is_empty() {
        return InnerTerms { conv, w };
    }
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for &i in &cells {
        let c = g.coords(i);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let len = (0..3).map(|a| hi[a] - lo[a] + 1).max().unwrap();
    let m = 2 * len;
    let fft = Fft3::new(m);
    let mlen = m * m * m;
    let at = |i: usize, j: usize, k: usize| i + m * (j + m * k);
    let local = |idx: usize| {
        let c = g.coords(idx);
        at(c[0] - lo[0], c[1] - lo[1], c[2] - lo[2])
    };
    let forward = |vals: &dyn Fn(usize) -> f64| {
        let mut buf = vec![Complex64::default(); mlen];
        for &i in &cells {
            buf[local(i)] = Complex64::new(vals(i), 0.0);
        }
        fft.forward(&mut buf);
        buf
    };
    let u_hat = forward(&|_| 1.0);
    let ub_hat: Vec<Vec<Complex64>> = (0..5).map(|a| forward(&|i| b[i][a])).collect();

    // E on offsets |v| < len; zero elsewhere since never reached
    let inv_e3 = eps.powi(-3);
    let reach = len as i64 - 1;
    let wrap_m = |v: i64| v.rem_euclid(m as i64) as usize;
    let mut e_table: Vec<(usize, Sym5)> = Vec::new();
    for vz in -reach..=reach {
        for vy in -reach..=reach {
            for vx in -reach..=reach {
                let idx = g.wrap(vx, vy, vz);
                let e = if g.offset(idx) == [vx, vy, vz] {
                    samples.images[idx]
                } else {
                    let x = crate::basis::Vec3::new(vx as f64, vy as f64, vz as f64) * g.h;
                    let raw = kernel_matrix(spec, &(x / eps)) * inv_e3;
                    std::array::from_fn(|c| {
                        let (a, bb) = sym_pair(c);
                        total[idx][c] - raw[(a, bb)]
                    })
                };
                e_table.push((at(wrap_m(vx), wrap_m(vy), wrap_m(vz)), e));
            }
        }
    }
    let mut w_hat = vec![vec![Complex64::default(); mlen]; 5];
    for a in 0..5 {
        for c in a..5 {
            let idx = sym_index(a, c);
            let mut e_hat = vec![Complex64::default(); mlen];
            for (pos, e) in &e_table {
                e_hat[*pos] = Complex64::new(e[idx], 0.0);
            }
            fft.forward(&mut e_hat);
            let mut buf: Vec<Complex64> = e_hat.iter().zip(&u_hat).map(|(x, y)| x * y).collect();
            fft.inverse(&mut buf);
            for &i in &cells {
                conv[i][idx] = buf[local(i)].re;
            }
            for t in 0..mlen {
                w_hat[a][t] += e_hat[t] * ub_hat[c][t];
            }
            if a != c {
                for t in 0..mlen {
                    w_hat[c][t] += e_hat[t] * ub_hat[a][t];
                }
            }
        }
    }
    for (a, buf) in w_hat.iter_mut().enumerate() {
        fft.inverse(buf);
        for &i in &cells {
            w[i][a] = buf[local(i)].re;
        }
    }
    InnerTerms { conv, w }
}

fn sym_pair(c: usize) -> (usize, usize) {
    let mut k = 0;
    for a in 0..5 {
        for b in a..5 {
            if k == c {
                return (a, b);
            }
            k += 1;
        }
    }
    unreachable!("packed index out of range")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub rows: Vec<RemainderReport>,
    /// Fitted decay exponents of `|r1|`, `|r2|`, `|r3|` in `ε`.
    pub exponents: [f64; 3],
    /// `(1 − α)(p − 3) − 2`.
    pub predicted_exponent: f64,
}

/// Remainders for a fixed field along masks built for decreasing `ε`.
pub fn remainder_ladder(
    field: &OrderField,
    masks: &[DomainMask],
    spec: &KernelSpec,
    bulk: &BulkData,
    options: &LatticeOptions,
    decay_exponent: f64,
) -> Result<LadderReport> {
    if masks.len() < 2 {
        return Err(EnergyError::Config("a ladder needs at least two values of epsilon".into()));
    }
    let rows = masks
        .iter()
        .map(|m| remainders(field, m, spec, bulk, options))
        .collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let fit = |f: fn(&RemainderReport) -> f64| fit_exponent(&eps, &rows.iter().map(f).collect::<Vec<_>>());
    let alpha = masks[0].law.alpha;
    Ok(LadderReport {
        exponents: [fit(|r| r.r1), fit(|r| r.r2), fit(|r| r.r3)],
        predicted_exponent: (1.0 - alpha) * (decay_exponent - 3.0) - 2.0,
        rows,
    })
}

/// Least-squares slope of `ln|v|` against `ln ε`.
pub fn fit_exponent(eps: &[f64], values: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(values)
        .filter(|(_, v)| v.abs() > 0.0)
        .map(|(e, v)| (e.ln(), v.abs().ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::super::tests::{test_bulk, test_kernel};
    use super::*;
    use crate::basis::Vec3;
    use crate::field::{
        build_mask, build_periodized_kernel, director_to_field, CollarLaw, DirectorSpec, Geometry, KernelSampling,
    };
    use crate::kernel::kernel_matrix;
    use std::f64::consts::PI;

    fn ball() -> Geometry {
        Geometry::Ball {
            center: [PI; 3],
            radius: 1.9,
        }
    }

    #[test]
    fn boundary_field_constant_on_manifold_has_zero_energy() {
        let bulk = test_bulk();
        let grid = TorusGrid::new(16).unwrap();
        let eps = 0.6;
        let mask = build_mask(&ball(), eps, &CollarLaw::default(), grid, None).unwrap();
        let b0 = OrderField::constant(grid, bulk.ground_tensor(&Vec3::z()));
        let k = build_periodized_kernel(&test_kernel(), grid, eps, KernelSampling::Spectral, &Default::default()).unwrap();
        let cfg = ElectrostaticConfig::new(1.0, 0.0, super::super::Potential::Zero);
        let p = BoundedProblem {
            b0: &b0,
            mask: &mask,
            kgrid: &k,
            bulk: &bulk,
            estat: Some(&cfg),
        };
        let e = g_eps(&b0, &p, &mut BulkSolver::for_bulk(&bulk)).unwrap();
        assert!(e.total.abs() < 1e-8, "{e:?}");

        let mut bad = b0.clone();
        let c = mask.cells(Label::Collar).next().unwrap();
        bad.values[c] = QTensor::uniaxial(0.2, &Vec3::z());
        match g_eps(&bad, &p, &mut BulkSolver::for_bulk(&bulk)) {
            Err(EnergyError::Admissibility { cells }) => assert_eq!(cells, vec![c]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gradient_matches_differences_on_interior() {
        let bulk = test_bulk();
        let grid = TorusGrid::new(12).unwrap();
        let eps = 0.6;
        let mask = build_mask(&ball(), eps, &CollarLaw::default(), grid, None).unwrap();
        let b0 = director_to_field(&DirectorSpec::Twist { q: 1.0 }.sample(grid).unwrap(), bulk.s_star);
        let k = build_periodized_kernel(&test_kernel(), grid, eps, KernelSampling::Spectral, &Default::default()).unwrap();
        let cfg = ElectrostaticConfig::new(1.0, 0.4, super::super::Potential::Linear {
            gradient: [0.0, 0.0, 1.0],
            offset: 0.0,
        });
        let p = BoundedProblem {
            b0: &b0,
            mask: &mask,
            kgrid: &k,
            bulk: &bulk,
            estat: Some(&cfg),
        };
        let mut field = b0.clone();
        for i in mask.cells(Label::Interior) {
            field.values[i] = field.values[i] * 0.9 + QTensor::new([0.01, -0.02, 0.0, 0.01, 0.0]);
        }
        let mut solver = BulkSolver::for_bulk(&bulk);
        let (_, grad) = g_eps_gradient(&field, &p, &mut solver).unwrap();
        let dir: Vec<Vec5> = (0..grid.len())
            .map(|i| {
                if mask.is_frozen(i) {
                    Vec5::zeros()
                } else {
                    Vec5::from_fn(|a, _| ((i * 7 + a * 3) as f64).sin() * 0.5)
                }
            })
            .collect();
        let t = 1e-5;
        let mut at = |s: f64| {
            let mut f = field.clone();
            for (q, d) in f.values.iter_mut().zip(&dir) {
                q.0 += d * s;
            }
            g_eps(&f, &p, &mut solver).unwrap().total
        };
        let fd = (at(t) - at(-t)) / (2.0 * t);
        let an: f64 = grad.values.iter().zip(&dir).map(|(a, b)| a.0.dot(b)).sum();
        assert!((fd - an).abs() < 1e-5 * an.abs(), "{fd} {an}");
    }

    #[test]
    fn harmonic_fill_cases() {
        let grid = TorusGrid::new(12).unwrap();
        let f = OrderField::from_fn(grid, |x| QTensor::new([x[2], 0.5 * x[2], 0.0, 1.0, -x[2]]));
        assert_eq!(harmonic_fill(&f, &vec![false; grid.len()], 1e-12, 100).unwrap(), f);
        // slab in x₃ between planes 3 and 8
        let region: Vec<bool> = (0..grid.len()).map(|i| (3..=8).contains(&grid.coords(i)[2])).collect();
        let mut scrambled = f.clone();
        for i in 0..grid.len() {
            if region[i] {
                scrambled.values[i] = QTensor::new([0.3, 2.0, -1.0, 0.0, 5.0]);
            }
        }
        let filled = harmonic_fill(&scrambled, &region, 1e-14, 1000).unwrap();
        for i in 0..grid.len() {
            assert!((filled.values[i].0 - f.values[i].0).amax() < 1e-8);
        }
        let c = OrderField::constant(grid, QTensor::new([0.1, 0.2, 0.0, 0.0, 0.0]));
        let filled = harmonic_fill(&scrambled_region(&c, &region), &region, 1e-14, 1000).unwrap();
        assert!(filled.values.iter().all(|q| (q.0 - c.values[0].0).amax() < 1e-10));
    }

    fn scrambled_region(f: &OrderField, region: &[bool]) -> OrderField {
        let mut out = f.clone();
        for (i, r) in region.iter().enumerate() {
            if *r {
                out.values[i] = QTensor::zero();
            }
        }
        out
    }

    #[test]
    fn predicted_exponent_and_fit() {
        let eps = [0.4, 0.2, 0.1];
        let v: Vec<f64> = eps.iter().map(|e: &f64| 3.0 * e.powf(0.7)).collect();
        assert!((fit_exponent(&eps, &v) - 0.7).abs() < 1e-12);
        assert!(((1.0 - 0.25) * (6.0 - 3.0) - 2.0 - 0.25f64).abs() < 1e-15);
    }

    fn opts() -> LatticeOptions {
        LatticeOptions {
            check_resolution: false,
            ..Default::default()
        }
    }

    #[test]
    fn constant_field_has_no_difference_remainders() {
        let bulk = test_bulk();
        let grid = TorusGrid::new(12).unwrap();
        let mask = build_mask(&ball(), 0.5, &CollarLaw::default(), grid, None).unwrap();
        let f = OrderField::constant(grid, bulk.ground_tensor(&Vec3::x()));
        let r = remainders(&f, &mask, &test_kernel(), &bulk, &opts()).unwrap();
        assert_eq!(r.r2, 0.0);
        assert_eq!(r.r3, 0.0);
        assert!(r.r1 < 0.0);
    }

    /// The energy on `Ω` with the unperiodized kernel, by direct sums.
    fn direct_energy(field: &OrderField, mask: &DomainMask, bulk: &BulkData, samples: &LatticeSamples) -> f64 {
        let g = field.grid;
        let eps = mask.epsilon;
        let h3 = g.cell_volume();
        let spec = test_kernel();
        let cells: Vec<usize> = (0..g.len()).filter(|&i| mask.in_domain(i)).collect();
        let mut solver = BulkSolver::for_bulk(bulk);
        let dom: Vec<bool> = (0..g.len()).map(|i| mask.in_domain(i)).collect();
        let (psi, _) = solver.evaluate(&field.values, Some(&dom), bulk, false).unwrap();
        // back out ψ_s from ψ
        let mut psi_s = psi;
        for &i in &cells {
            let b = &field.values[i].0;
            psi_s += 0.5 * bulk.k0 * b.dot(b) + bulk.c5;
        }
        let mut pair = 0.0;
        for &x in &cells {
            let cx = g.coords(x);
            for &y in &cells {
                let cy = g.coords(y);
                let v = [0, 1, 2].map(|a| cx[a] as i64 - cy[a] as i64);
                let idx = g.wrap(v[0], v[1], v[2]);
                let k = if g.offset(idx) == v {
                    crate::field::unpack(&samples.direct[idx])
                } else {
                    let z = Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64) * g.h;
                    kernel_matrix(&spec, &(z / eps)) * eps.powi(-3)
                };
                pair += field.values[x].0.dot(&(k * field.values[y].0));
            }
        }
        (h3 * psi_s - 0.5 * h3 * h3 * pair) / (eps * eps)
    }

    #[test]
    fn remainders_close_the_energy_identity() {
        let bulk = test_bulk();
        let grid = TorusGrid::new(10).unwrap();
        let eps = 0.5;
        let spec = test_kernel();
        let mask = build_mask(&ball(), eps, &CollarLaw::default(), grid, None).unwrap();
        let mut field = director_to_field(&DirectorSpec::Twist { q: 1.0 }.sample(grid).unwrap(), bulk.s_star);
        for i in mask.cells(Label::Interior) {
            field.values[i] = field.values[i] * 0.95;
        }
        let samples = lattice_samples(&spec, grid, eps, &opts()).unwrap();
        let report = remainders_from(&field, &mask, &spec, &bulk, &samples).unwrap();
        let k = crate::field::PeriodizedKernelGrid::from_samples(grid, eps, samples.clone()).unwrap();
        // bulk written with the lattice mass of the kernel
        let h3 = grid.cell_volume();
        let k0 = crate::field::unpack(&crate::field::pack(&k.k0_matrix));
        let interior: Vec<bool> = mask.labels.iter().map(|l| *l == Label::Interior).collect();
        let (psi, _) = BulkSolver::for_bulk(&bulk).evaluate(&field.values, Some(&interior), &bulk, false).unwrap();
        let mut bulk_term = psi;
        for i in mask.cells(Label::Interior) {
            let b = &field.values[i].0;
            bulk_term += 0.5 * bulk.k0 * b.dot(b) - 0.5 * b.dot(&(k0 * b));
        }
        let (bil, _) = bilinear_spectral(&field.values, &k, false);
        let lhs = direct_energy(&field, &mask, &bulk, &samples);
        let rhs = h3 * bulk_term / (eps * eps) + bil + report.total + report.m_eps;
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs(), "{lhs} {rhs} {report:?}");
    }
}

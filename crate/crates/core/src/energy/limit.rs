use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use super::{bilinear_spectral, EnergyError, Result};
use crate::basis::{matrix, Mat3, Vec3, Vec5};
use crate::field::{
    build_periodized_kernel, director_to_field, discrete_gradient, gradient_matrices, DirectorField, DirectorSpec,
    KernelSampling, LatticeOptions, OrderField, TorusGrid,
};
use crate::kernel::{elastic_tensor, quadratic_form, ElasticCoefficients, GradQ, KernelSpec, QuadratureSpec};
use crate::maxent::dist_to_m;

pub type Mat15 = SMatrix<f64, 15, 15>;

/// The quadratic form `L∇Q·∇Q` as a matrix on stacked gradients
/// `(∂₁b, ∂₂b, ∂₃b)` in basis coefficients.
pub fn elastic_matrix(c: &ElasticCoefficients) -> Mat15 {
    let form = |v: &[f64; 15]| -> f64 {
        let gq: GradQ = std::array::from_fn(|g| matrix(&Vec5::from_fn(|a, _| v[5 * g + a])));
        crate::kernel::quadratic_form_unchecked(c.l1, c.l2, c.l3, &gq)
    };
    let unit = |i: usize| {
        let mut v = [0.0; 15];
        v[i] = 1.0;
        v
    };
    let diag: Vec<f64> = (0..15).map(|i| form(&unit(i))).collect();
    Mat15::from_fn(|i, j| {
        if i == j {
            diag[i]
        } else {
            let mut v = unit(i);
            v[j] = 1.0;
            0.5 * (form(&v) - diag[i] - diag[j])
        }
    })
}

/// `¼ h³ Σ L∇b·∇b` with central differences, without the manifold check.
pub fn gamma_energy_unchecked(field: &OrderField, coeffs: &ElasticCoefficients) -> f64 {
    let grads = discrete_gradient(field);
    let h3 = field.grid.cell_volume();
    0.25 * h3
        * grads
            .iter()
            .map(|g| crate::kernel::quadratic_form_unchecked(coeffs.l1, coeffs.l2, coeffs.l3, &gradient_matrices(g)))
            .sum::<f64>()
}

/// The limit energy of a field with values on the ground-state manifold.
pub fn gamma_energy(field: &OrderField, coeffs: &ElasticCoefficients, s_star: f64, tol: f64) -> Result<f64> {
    let (cell, distance) = field
        .values
        .iter()
        .enumerate()
        .map(|(i, q)| (i, dist_to_m(q, s_star)))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if distance > tol {
        return Err(EnergyError::OffManifold { cell, distance });
    }
    // one checked evaluation catches a non-traceless field early
    if let Some(g) = discrete_gradient(field).first() {
        quadratic_form(coeffs, &gradient_matrices(g))?;
    }
    Ok(gamma_energy_unchecked(field, coeffs))
}

/// Director form of the limit energy, each term already multiplied by `¼`
/// and its constant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrankSplit {
    /// `K₁ (div n)²`.
    pub splay: f64,
    /// `K₂ (n·curl n)²`.
    pub twist: f64,
    /// `K₃ |n×curl n|²`.
    pub bend: f64,
    /// `K₂₄ (tr(∇n)² − (div n)²)`; a null Lagrangian on the torus.
    pub saddle_splay: f64,
    pub total: f64,
}

/// Frank decomposition of a director field that is continuous as a vector
/// field, using central differences.
pub fn frank_split(n: &DirectorField, coeffs: &ElasticCoefficients) -> FrankSplit {
    let g = n.grid;
    let inv = 0.5 / g.h;
    let mut acc = [0.0; 4];
    for i in 0..g.len() {
        // d[γ][j] = ∂_γ n_j
        let d: [Vec3; 3] = std::array::from_fn(|axis| {
            let mut e = [0i64; 3];
            e[axis] = 1;
            let f = g.shifted(i, e);
            e[axis] = -1;
            let b = g.shifted(i, e);
            (n.values[f] - n.values[b]) * inv
        });
        let grad = Mat3::from_fn(|r, c| d[r][c]);
        let div = grad.trace();
        let curl = Vec3::new(d[1][2] - d[2][1], d[2][0] - d[0][2], d[0][1] - d[1][0]);
        let v = n.values[i];
        acc[0] += div * div;
        acc[1] += v.dot(&curl).powi(2);
        acc[2] += v.cross(&curl).norm_squared();
        acc[3] += (grad * grad).trace() - div * div;
    }
    let w = 0.25 * g.cell_volume();
    let splay = w * coeffs.k1 * acc[0];
    let twist = w * coeffs.k2 * acc[1];
    let bend = w * coeffs.k3 * acc[2];
    let saddle_splay = w * coeffs.k24() * acc[3];
    FrankSplit {
        splay,
        twist,
        bend,
        saddle_splay,
        total: splay + twist + bend + saddle_splay,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub epsilon: f64,
    pub bilinear: f64,
    pub limit: f64,
    pub rel_error: f64,
}

/// The bilinear term of a closed-form director field against its gradient
/// limit along a ladder of `ε`.
pub fn bilinear_vs_limit(
    director: &DirectorSpec,
    spec: &KernelSpec,
    grid: TorusGrid,
    epsilons: &[f64],
    s_star: f64,
    sampling: KernelSampling,
) -> Result<Vec<LimitRow>> {
    let quad = QuadratureSpec::default();
    let coeffs = elastic_tensor(spec, &quad, s_star)?;
    let field = director_to_field(&director.sample(grid)?, s_star);
    let limit = gamma_energy_unchecked(&field, &coeffs);
    epsilons
        .iter()
        .map(|&eps| {
            let k = build_periodized_kernel(spec, grid, eps, sampling, &LatticeOptions::default())?;
            let (bilinear, _) = bilinear_spectral(&field.values, &k, false);
            let rel_error = if limit == 0.0 {
                bilinear.abs()
            } else {
                (bilinear - limit).abs() / limit.abs()
            };
            Ok(LimitRow {
                epsilon: eps,
                bilinear,
                limit,
                rel_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{random_unit, QTensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn coeffs() -> ElasticCoefficients {
        let spec = KernelSpec::inverse_power([1.0, 1.0, 1.0], 6.0, 0.5);
        elastic_tensor(&spec, &QuadratureSpec::default(), 0.7).unwrap()
    }

    #[test]
    fn elastic_matrix_reproduces_form() {
        let c = coeffs();
        let m = elastic_matrix(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = nalgebra::SVector::<f64, 15>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let gq: GradQ = std::array::from_fn(|g| matrix(&Vec5::from_fn(|a, _| v[5 * g + a])));
        let want = quadratic_form(&c, &gq).unwrap();
        assert!((v.dot(&(m * v)) - want).abs() < 1e-12 * want.abs());
    }

    #[test]
    fn pointwise_frank_identity() {
        // ¼L∇Q·∇Q equals the Frank density plus saddle-splay for unit n
        let c = coeffs();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = random_unit(&mut rng);
            let d: [Vec3; 3] = std::array::from_fn(|_| {
                let v = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                v - n * n.dot(&v)
            });
            let s = c.s_star;
            let gq: GradQ = std::array::from_fn(|g| (d[g] * n.transpose() + n * d[g].transpose()) * s);
            let tensor = quadratic_form(&c, &gq).unwrap();
            let grad = Mat3::from_fn(|r, col| d[r][col]);
            let div = grad.trace();
            let curl = Vec3::new(d[1][2] - d[2][1], d[2][0] - d[0][2], d[0][1] - d[1][0]);
            let frank = c.k1 * div * div
                + c.k2 * n.dot(&curl).powi(2)
                + c.k3 * n.cross(&curl).norm_squared()
                + c.k24() * ((grad * grad).trace() - div * div);
            assert!((tensor - frank).abs() < 1e-10 * tensor.abs(), "{tensor} {frank}");
        }
    }

    #[test]
    fn twist_and_splay_bend_energies() {
        let c = coeffs();
        let grid = TorusGrid::new(32).unwrap();
        let vol = TAU.powi(3);
        let tw = DirectorSpec::Twist { q: 1.0 }.sample(grid).unwrap();
        let split = frank_split(&tw, &c);
        let e = gamma_energy(&director_to_field(&tw, c.s_star), &c, c.s_star, 1e-12).unwrap();
        let want = 0.25 * c.k2 * vol;
        // Q carries the doubled wavenumber; central differences damp it by this factor
        let damp = ((2.0 * grid.h).sin() / (2.0 * grid.h)).powi(2);
        assert!((e - want * damp).abs() < 1e-10 * want, "{e} {want}");
        let damp_n = (grid.h.sin() / grid.h).powi(2);
        assert!((split.total - want * damp_n).abs() < 1e-10 * want);
        assert!(split.splay.abs() < 1e-20 && split.bend.abs() < 1e-20);

        let sb = DirectorSpec::SplayBend { q: 1.0 }.sample(grid).unwrap();
        let e = gamma_energy(&director_to_field(&sb, c.s_star), &c, c.s_star, 1e-12).unwrap();
        let want = 0.125 * (c.k1 + c.k3) * vol;
        assert!((e - want * damp).abs() < 1e-10 * want, "{e} {want}");
    }

    #[test]
    fn constant_director_has_zero_energy() {
        let c = coeffs();
        let grid = TorusGrid::new(8).unwrap();
        let f = OrderField::constant(grid, QTensor::uniaxial(c.s_star, &Vec3::z()));
        assert_eq!(gamma_energy(&f, &c, c.s_star, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn off_manifold_is_rejected() {
        let c = coeffs();
        let grid = TorusGrid::new(8).unwrap();
        let mut f = OrderField::constant(grid, QTensor::uniaxial(c.s_star, &Vec3::z()));
        f.values[77] = QTensor::uniaxial(0.2, &Vec3::z());
        match gamma_energy(&f, &c, c.s_star, 1e-6) {
            Err(EnergyError::OffManifold { cell, .. }) => assert_eq!(cell, 77),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lattice_rotation_invariance() {
        let c = coeffs();
        let grid = TorusGrid::new(16).unwrap();
        let f = OrderField::from_fn(grid, |x| {
            let n = Vec3::new(x[0].sin() + 0.3, x[1].cos(), 1.0 + 0.5 * x[2].sin()).normalize();
            QTensor::uniaxial(c.s_star, &n)
        });
        // 90° rotation about x₃: (x, y, z) -> (−y, x, z)
        let r = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let n = grid.n as i64;
        let rotated = OrderField {
            grid,
            values: (0..grid.len())
                .map(|idx| {
                    let [i, j, k] = grid.coords(idx);
                    // cell centre (i+½, j+½) maps back from (−(j'+½), i'+½)
                    let src = grid.wrap(j as i64, n - 1 - i as i64, k as i64);
                    f.values[src].rotate(&r)
                })
                .collect(),
        };
        let a = gamma_energy_unchecked(&f, &c);
        let b = gamma_energy_unchecked(&rotated, &c);
        assert!((a - b).abs() < 1e-12 * a, "{a} {b}");
    }

    #[test]
    fn one_constant_limit_is_dirichlet() {
        let spec = KernelSpec {
            g2: crate::RadialProfile::zero(),
            g3: crate::RadialProfile::zero(),
            ..KernelSpec::inverse_power([1.0, 1.0, 1.0], 6.0, 0.5)
        };
        let quad = QuadratureSpec::default();
        let c = elastic_tensor(&spec, &quad, 0.6).unwrap();
        assert!(c.l2.abs() < 1e-12 * c.l1 && c.l3.abs() < 1e-12 * c.l1);
        let g100 = crate::kernel::moments(&spec, &quad).unwrap().g1_100;
        assert!((c.l1 - g100).abs() < 1e-10 * c.l1, "{} {}", c.l1, g100);
        let grid = TorusGrid::new(16).unwrap();
        let f = OrderField::from_fn(grid, |x| QTensor::new([x[0].sin(), 0.3 * x[1].cos(), 0.0, 0.1, x[2].sin()]));
        let dirichlet: f64 = discrete_gradient(&f)
            .iter()
            .map(|g| gradient_matrices(g).iter().map(|m| m.norm_squared()).sum::<f64>())
            .sum::<f64>()
            * grid.cell_volume();
        let e = gamma_energy_unchecked(&f, &c);
        let want = 0.25 * c.l1 * dirichlet;
        assert!((e - want).abs() < 1e-9 * want, "{e} {want}");
    }
}

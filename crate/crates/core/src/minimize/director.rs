use crate::basis::{Mat3, Vec3};
use crate::field::{DirectorField, DomainMask};
use crate::kernel::ElasticCoefficients;

use super::{descend, MinimizeError, MinimizeOptions, Result, StopReason, TraceRow};

#[derive(Clone, Debug)]
pub struct DirectorResult {
    pub field: DirectorField,
    pub energy: f64,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub stop: StopReason,
}

const LEVI: [[[f64; 3]; 3]; 3] = {
    let mut e = [[[0.0; 3]; 3]; 3];
    e[0][1][2] = 1.0;
    e[1][2][0] = 1.0;
    e[2][0][1] = 1.0;
    e[0][2][1] = -1.0;
    e[2][1][0] = -1.0;
    e[1][0][2] = -1.0;
    e
};

struct Constants {
    splay: f64,
    twist_minus_bend: f64,
    bend: f64,
    saddle: f64,
}

impl Constants {
    fn new(c: &ElasticCoefficients) -> Self {
        let k24 = c.k24();
        Constants {
            splay: c.k1 - k24,
            twist_minus_bend: c.k2 - c.k3,
            bend: c.k3,
            saddle: k24,
        }
    }
}

/// Forward-difference Jacobian `A[γ][j] = ∂_γ n_j` at cell `i`.
fn jacobian(n: &DirectorField, i: usize) -> Mat3 {
    let g = n.grid;
    let inv_h = 1.0 / g.h;
    let mut a = Mat3::zeros();
    for gamma in 0..3 {
        let mut d = [0i64; 3];
        d[gamma] = 1;
        let diff = (n.values[g.shifted(i, d)] - n.values[i]) * inv_h;
        for j in 0..3 {
            a[(gamma, j)] = diff[j];
        }
    }
    a
}

fn curl(a: &Mat3) -> Vec3 {
    Vec3::from_fn(|i, _| {
        let mut s = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                s += LEVI[i][j][k] * a[(j, k)];
            }
        }
        s
    })
}

/// Frank density `(K₁−k₂₄)(div n)² + (K₂−K₃)(n·c)² + K₃|c|² + k₂₄ tr(A²)`
/// with its derivatives in `A` and in the base-point director.
fn density(k: &Constants, a: &Mat3, n: &Vec3, want: bool) -> (f64, Mat3, Vec3) {
    let div = a.trace();
    let c = curl(a);
    let nc = n.dot(&c);
    let tr2 = (a * a).trace();
    let f = k.splay * div * div + k.twist_minus_bend * nc * nc + k.bend * c.norm_squared() + k.saddle * tr2;
    if !want {
        return (f, Mat3::zeros(), Vec3::zeros());
    }
    let mut da = a.transpose() * (2.0 * k.saddle);
    for g in 0..3 {
        da[(g, g)] += 2.0 * k.splay * div;
    }
    for j in 0..3 {
        for kk in 0..3 {
            let mut s = 0.0;
            for i in 0..3 {
                s += LEVI[i][j][kk] * (2.0 * k.twist_minus_bend * nc * n[i] + 2.0 * k.bend * c[i]);
            }
            da[(j, kk)] += s;
        }
    }
    (f, da, c * (2.0 * k.twist_minus_bend * nc))
}

/// Discrete Frank energy `¼h³Σ f` over the whole torus.
pub fn director_energy(n: &DirectorField, coeffs: &ElasticCoefficients) -> f64 {
    let k = Constants::new(coeffs);
    let w = 0.25 * n.grid.cell_volume();
    (0..n.grid.len())
        .map(|i| density(&k, &jacobian(n, i), &n.values[i], false).0)
        .sum::<f64>()
        * w
}

/// Energy and its derivative in the nodal directors (unconstrained, i.e.
/// not projected onto the tangent spaces).
pub fn director_gradient(n: &DirectorField, coeffs: &ElasticCoefficients) -> (f64, Vec<Vec3>) {
    let k = Constants::new(coeffs);
    let g = n.grid;
    let w = 0.25 * g.cell_volume();
    let inv_h = 1.0 / g.h;
    let mut grad = vec![Vec3::zeros(); g.len()];
    let mut e = 0.0;
    for i in 0..g.len() {
        let (f, da, dn) = density(&k, &jacobian(n, i), &n.values[i], true);
        e += f;
        grad[i] += dn * w;
        for gamma in 0..3 {
            let mut d = [0i64; 3];
            d[gamma] = 1;
            let row = Vec3::new(da[(gamma, 0)], da[(gamma, 1)], da[(gamma, 2)]) * (w * inv_h);
            grad[g.shifted(i, d)] += row;
            grad[i] -= row;
        }
    }
    (e * w, grad)
}

fn normalize(i: usize, v: &Vec3) -> Result<Vec3> {
    let norm = v.norm();
    if !(norm >= 1e-8) {
        return Err(MinimizeError::Degenerate { cell: i, norm });
    }
    Ok(v / norm)
}

/// Riemannian projected gradient on the unit sphere at every free cell;
/// cells where `free` is false keep their boundary value.
pub fn minimize_director_on(
    boundary: &DirectorField,
    free: &[bool],
    coeffs: &ElasticCoefficients,
    opts: &MinimizeOptions,
) -> Result<DirectorResult> {
    if free.len() != boundary.grid.len() {
        return Err(MinimizeError::Config("free-cell mask does not match the grid".into()));
    }
    if let Some(i) = (0..boundary.grid.len()).find(|&i| (boundary.values[i].norm() - 1.0).abs() > 1e-10) {
        return Err(MinimizeError::Precondition(format!("director at cell {i} is not unit length")));
    }
    let grid = boundary.grid;
    let d = descend(
        boundary.values.clone(),
        free,
        grid.cell_volume(),
        0.0,
        opts,
        |x| {
            let field = DirectorField {
                grid,
                values: x.to_vec(),
            };
            let (e, mut g) = director_gradient(&field, coeffs);
            for ((gi, ni), fr) in g.iter_mut().zip(x).zip(free) {
                *gi = if *fr { *gi - ni * gi.dot(ni) } else { Vec3::zeros() };
            }
            Ok((e, g, ()))
        },
        normalize,
    )?;
    Ok(DirectorResult {
        field: DirectorField { grid, values: d.x },
        energy: d.energy,
        iterations: d.trace.len() - 1,
        trace: d.trace,
        stop: d.stop,
    })
}

/// Limit problem on a domain: every cell of `Ω` (interior and collar) is
/// free, the exterior carries the Dirichlet data.
pub fn minimize_director(
    boundary: &DirectorField,
    mask: &DomainMask,
    coeffs: &ElasticCoefficients,
    opts: &MinimizeOptions,
) -> Result<DirectorResult> {
    if mask.grid != boundary.grid {
        return Err(MinimizeError::Config("mask and director grids differ".into()));
    }
    let free: Vec<bool> = (0..mask.grid.len()).map(|i| mask.in_domain(i)).collect();
    minimize_director_on(boundary, &free, coeffs, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_mask, CollarLaw, DirectorSpec, Geometry, TorusGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coeffs() -> ElasticCoefficients {
        ElasticCoefficients::from_l(1.0, 0.6, 0.3, 0.9)
    }

    fn ball_mask(grid: TorusGrid) -> DomainMask {
        let geometry = Geometry::Ball {
            center: [std::f64::consts::PI; 3],
            radius: 2.0,
        };
        build_mask(&geometry, 0.5, &CollarLaw::default(), grid, None).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let grid = TorusGrid::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = DirectorField {
            grid,
            values: (0..grid.len()).map(|_| crate::basis::random_unit(&mut rng)).collect(),
        };
        let c = coeffs();
        let (e, g) = director_gradient(&n, &c);
        assert!((e - director_energy(&n, &c)).abs() < 1e-12 * e.abs());
        let h = 1e-6;
        for _ in 0..10 {
            let i = rng.gen_range(0..grid.len());
            let a = rng.gen_range(0..3);
            let mut p = n.clone();
            p.values[i][a] += h;
            let mut m = n.clone();
            m.values[i][a] -= h;
            let fd = (director_energy(&p, &c) - director_energy(&m, &c)) / (2.0 * h);
            assert!((fd - g[i][a]).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} {}", g[i][a]);
        }
    }

    #[test]
    fn one_constant_is_dirichlet_energy() {
        let grid = TorusGrid::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = DirectorField {
            grid,
            values: (0..grid.len()).map(|_| crate::basis::random_unit(&mut rng)).collect(),
        };
        let c = ElasticCoefficients::one_constant(0.7, 0.8);
        let mut dirichlet = 0.0;
        for i in 0..grid.len() {
            for a in 0..3 {
                let mut d = [0; 3];
                d[a] = 1;
                dirichlet += ((n.values[grid.shifted(i, d)] - n.values[i]) / grid.h).norm_squared();
            }
        }
        let want = 0.25 * c.k1 * dirichlet * grid.cell_volume();
        assert!((director_energy(&n, &c) - want).abs() < 1e-10 * want);
    }

    #[test]
    fn constant_boundary_stays_constant() {
        let grid = TorusGrid::new(12).unwrap();
        let n = DirectorSpec::Constant { n: [0.0, 0.6, 0.8] }.sample(grid).unwrap();
        let r = minimize_director(&n, &ball_mask(grid), &coeffs(), &MinimizeOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.energy.abs() < 1e-14);
        assert_eq!(r.field, n);
    }

    /// Harmonic-map fixed point `n(x) ← normalize(Σ neighbours)` as oracle.
    #[test]
    fn one_constant_minimizer_is_harmonic_map() {
        let grid = TorusGrid::new(16).unwrap();
        let mask = ball_mask(grid);
        let c0 = Vec3::from([std::f64::consts::PI; 3]);
        let raw: Vec<Vec3> = (0..grid.len())
            .map(|i| {
                let x = grid.point(i) - c0;
                Vec3::new(x[0], x[1], x[2] + 4.0)
            })
            .collect();
        let boundary = DirectorField::normalized(grid, raw).unwrap();
        let c = ElasticCoefficients::one_constant(1.0, 1.0);
        let opts = MinimizeOptions {
            grad_tol: 1e-10,
            max_iters: 5000,
            ..Default::default()
        };
        let r = minimize_director(&boundary, &mask, &c, &opts).unwrap();
        assert_ne!(r.stop, StopReason::MaxIters);

        let mut fixed = boundary.clone();
        for _ in 0..20000 {
            let mut change: f64 = 0.0;
            for i in 0..grid.len() {
                if !mask.in_domain(i) {
                    continue;
                }
                let mut s = Vec3::zeros();
                for a in 0..3 {
                    for sgn in [-1, 1] {
                        let mut d = [0; 3];
                        d[a] = sgn;
                        s += fixed.values[grid.shifted(i, d)];
                    }
                }
                let v = s.normalize();
                change = change.max((v - fixed.values[i]).norm());
                fixed.values[i] = v;
            }
            if change < 1e-13 {
                break;
            }
        }
        let worst = (0..grid.len())
            .map(|i| (r.field.values[i] - fixed.values[i]).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst}");
        assert!(r.trace.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-14));
    }

    #[test]
    fn twist_slab_is_helical() {
        let grid = TorusGrid::new(32).unwrap();
        let boundary = DirectorSpec::Twist { q: 1.0 }.sample(grid).unwrap();
        let pi = std::f64::consts::PI;
        let free: Vec<bool> = (0..grid.len())
            .map(|i| {
                let z = grid.point(i)[2];
                z > 0.5 * pi && z < 1.5 * pi
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut start = boundary.clone();
        for i in 0..grid.len() {
            if free[i] {
                let v = start.values[i] + Vec3::from_fn(|_, _| rng.gen_range(-0.05..0.05));
                start.values[i] = v.normalize();
            }
        }
        let c = coeffs();
        let opts = MinimizeOptions {
            grad_tol: 1e-9,
            max_iters: 5000,
            ..Default::default()
        };
        let r = minimize_director_on(&start, &free, &c, &opts).unwrap();
        let worst = (0..grid.len())
            .map(|i| (r.field.values[i] - boundary.values[i]).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-2, "{worst}");
        let k = Constants::new(&c);
        let want = 0.25 * c.k2;
        for i in (0..grid.len()).filter(|&i| free[i]) {
            let f = 0.25 * density(&k, &jacobian(&r.field, i), &r.field.values[i], false).0;
            assert!((f - want).abs() < 0.02 * want, "{f} {want}");
        }
    }
}

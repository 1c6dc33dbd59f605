use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FieldError, TorusGrid};
use crate::basis::{Mat5, Vec3};
use crate::fft::Fft3;
use crate::kernel::{direction_tensors, kernel_matrix, KernelSpec, KernelTransform, ProfileForm, RadialProfile};
use crate::quadrature::{AngularRule, GaussRule};

/// Upper triangle of a symmetric 5×5 matrix, row by row.
pub type Sym5 = [f64; 15];

#[inline]
pub(crate) const fn sym_index(a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * 5 - a * (a.saturating_sub(1)) / 2 + (b - a)
}

pub fn pack(m: &Mat5) -> Sym5 {
    let mut s = [0.0; 15];
    for a in 0..5 {
        for b in a..5 {
            s[sym_index(a, b)] = m[(a, b)];
        }
    }
    s
}

pub fn unpack(s: &Sym5) -> Mat5 {
    Mat5::from_fn(|a, b| s[sym_index(a, b)])
}

/// `S v` for a packed symmetric matrix and a complex 5-vector.
#[inline]
pub fn apply_sym(s: &Sym5, v: &[Complex64; 5]) -> [Complex64; 5] {
    let mut out = [Complex64::default(); 5];
    for a in 0..5 {
        let mut acc = Complex64::default();
        for (b, vb) in v.iter().enumerate() {
            acc += *vb * s[sym_index(a, b)];
        }
        out[a] = acc;
    }
    out
}

/// How the periodized kernel enters the discrete energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSampling {
    /// The Fourier symbol `K̂(εk)` at the lattice wavevectors.
    #[default]
    Spectral,
    /// Real-space lattice sums of the scaled kernel.
    Lattice,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeOptions {
    /// Midpoint subcells per axis near the origin.
    pub subsample: usize,
    pub min_shells: usize,
    pub max_shells: usize,
    /// Relative tail mass accepted before the far field is added.
    pub tol: f64,
    /// Add the mean contribution of all images beyond the last shell.
    pub far_field: bool,
    /// Enforce `ε ≥ 4h`.
    pub check_resolution: bool,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        LatticeOptions {
            subsample: 5,
            min_shells: 2,
            max_shells: 4,
            tol: 1e-6,
            far_field: true,
            check_resolution: true,
        }
    }
}

/// Real-space samples split into the minimal-image term and the image sum.
#[derive(Clone, Debug)]
pub struct LatticeSamples {
    /// `ε⁻³K(dh/ε)` at the minimal image `d`, cell-averaged near the origin.
    pub direct: Vec<Sym5>,
    /// `Σ_{k≠0} ε⁻³K((dh + 2πk)/ε)` including the far-field constant.
    pub images: Vec<Sym5>,
    pub shells: usize,
    /// Relative kernel mass outside the inscribed sphere of the last shell.
    pub tail_bound: f64,
}

impl LatticeSamples {
    pub fn total(&self, idx: usize) -> Sym5 {
        std::array::from_fn(|c| self.direct[idx][c] + self.images[idx][c])
    }
}

/// Periodized kernel on the torus grid.
///
/// The energy uses `Δ(k) = K̂_ε(0) − K̂_ε(k)` (cell volume included) per
/// transform index; the constant part `K0` enters through the bulk term.
#[derive(Clone, Debug)]
pub struct PeriodizedKernelGrid {
    pub grid: TorusGrid,
    pub epsilon: f64,
    pub sampling: KernelSampling,
    pub drops: Vec<Sym5>,
    /// `h³ Σ_d samples[d]`.
    pub k0_matrix: Mat5,
    pub lattice: Option<LatticeSamples>,
    pub zero: bool,
}

impl PeriodizedKernelGrid {
    pub fn drop_at(&self, idx: usize) -> Mat5 {
        unpack(&self.drops[idx])
    }

    /// Real-space samples `K_ε(dh)` with `h³ Σ_d samples = K0`.
    pub fn real_space_samples(&self) -> Vec<Sym5> {
        if let Some(l) = &self.lattice {
            return (0..self.grid.len()).map(|i| l.total(i)).collect();
        }
        let g = self.grid;
        let fft = Fft3::new(g.n);
        let k0 = pack(&self.k0_matrix);
        let inv_h3 = 1.0 / g.cell_volume();
        let mut out = vec![[0.0; 15]; g.len()];
        let mut buf = vec![Complex64::default(); g.len()];
        for c in 0..15 {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new((k0[c] - self.drops[i][c]) * inv_h3, 0.0);
            }
            fft.inverse(&mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                o[c] = b.re;
            }
        }
        out
    }

    /// Kernel grid from precomputed lattice samples.
    pub fn from_samples(grid: TorusGrid, epsilon: f64, lattice: LatticeSamples) -> Result<Self, FieldError> {
        if lattice.direct.len() != grid.len() || lattice.images.len() != grid.len() {
            return Err(FieldError::Mismatch("lattice samples do not match the grid".into()));
        }
        from_lattice(grid, epsilon, lattice)
    }

    pub fn check(&self, grid: &TorusGrid, epsilon: f64) -> Result<(), FieldError> {
        if self.grid != *grid {
            return Err(FieldError::Mismatch(format!("kernel built for N = {}, field has N = {}", self.grid.n, grid.n)));
        }
        if (self.epsilon - epsilon).abs() > 1e-14 * epsilon.abs().max(1.0) {
            return Err(FieldError::Mismatch(format!(
                "kernel built for epsilon = {}, requested {}",
                self.epsilon, epsilon
            )));
        }
        Ok(())
    }
}

pub fn build_periodized_kernel(
    spec: &KernelSpec,
    grid: TorusGrid,
    epsilon: f64,
    sampling: KernelSampling,
    options: &LatticeOptions,
) -> Result<PeriodizedKernelGrid, FieldError> {
    spec.check_shapes()?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(FieldError::Config(format!("epsilon = {epsilon} must be positive")));
    }
    if spec.is_zero() {
        return Ok(PeriodizedKernelGrid {
            grid,
            epsilon,
            sampling,
            drops: vec![[0.0; 15]; grid.len()],
            k0_matrix: Mat5::zeros(),
            lattice: None,
            zero: true,
        });
    }
    spec.check_integrable()?;
    match sampling {
        KernelSampling::Spectral => spectral(spec, grid, epsilon),
        KernelSampling::Lattice => {
            let lattice = lattice_samples(spec, grid, epsilon, options)?;
            from_lattice(grid, epsilon, lattice)
        }
    }
}

fn spectral(spec: &KernelSpec, grid: TorusGrid, epsilon: f64) -> Result<PeriodizedKernelGrid, FieldError> {
    let transform = KernelTransform::new(spec)?;
    let k0 = isotropic_mass(spec, 0.0);
    // the drop coefficients depend on |k| only
    let mut cache = HashMap::new();
    let drops = (0..grid.len())
        .map(|i| {
            let k = grid.wavevector(i);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0 {
                return [0.0; 15];
            }
            let coef = *cache
                .entry(k2)
                .or_insert_with(|| transform.drop_coefficients(epsilon * (k2 as f64).sqrt()));
            let kv = Vec3::new(k[0] as f64, k[1] as f64, k[2] as f64);
            pack(&coef.matrix(&(kv / kv.norm())))
        })
        .collect();
    Ok(PeriodizedKernelGrid {
        grid,
        epsilon,
        sampling: KernelSampling::Spectral,
        drops,
        k0_matrix: Mat5::identity() * k0,
        lattice: None,
        zero: false,
    })
}

fn from_lattice(grid: TorusGrid, epsilon: f64, lattice: LatticeSamples) -> Result<PeriodizedKernelGrid, FieldError> {
    let h3 = grid.cell_volume();
    let fft = Fft3::new(grid.n);
    let mut drops = vec![[0.0; 15]; grid.len()];
    let mut k0 = [0.0; 15];
    let mut buf = vec![Complex64::default(); grid.len()];
    for c in 0..15 {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(lattice.direct[i][c] + lattice.images[i][c], 0.0);
        }
        fft.forward(&mut buf);
        let zero = buf[0].re;
        k0[c] = h3 * zero;
        for (d, b) in drops.iter_mut().zip(&buf) {
            d[c] = h3 * (zero - b.re);
        }
    }
    Ok(PeriodizedKernelGrid {
        grid,
        epsilon,
        sampling: KernelSampling::Lattice,
        drops,
        k0_matrix: unpack(&k0),
        lattice: Some(lattice),
        zero: false,
    })
}

/// Lattice sums `ε⁻³ Σ_k K((dh + 2πk)/ε)` over the minimal-image offsets.
pub fn lattice_samples(
    spec: &KernelSpec,
    grid: TorusGrid,
    epsilon: f64,
    options: &LatticeOptions,
) -> Result<LatticeSamples, FieldError> {
    let h = grid.h;
    if options.check_resolution && epsilon < 4.0 * h {
        return Err(FieldError::Resolution {
            epsilon,
            limit: 4.0 * h,
        });
    }
    if options.subsample == 0 || options.max_shells < options.min_shells {
        return Err(FieldError::Config("lattice options need subsample ≥ 1 and max_shells ≥ min_shells".into()));
    }
    let mass = isotropic_abs_mass(spec);
    let bound_at = |m: usize| {
        let rho = (2 * m + 1) as f64 * PI / epsilon;
        if mass > 0.0 {
            spec.profiles().iter().zip(ANGULAR_WEIGHTS).map(|(p, w)| w * radial_tail(p, rho).abs()).sum::<f64>()
                * 4.0
                * PI
                / mass
        } else {
            0.0
        }
    };
    let mut shells = options.min_shells;
    while bound_at(shells) > options.tol && shells < options.max_shells {
        shells += 1;
    }
    let tail_bound = bound_at(shells);
    if tail_bound > options.tol && !options.far_field {
        return Err(FieldError::Truncation {
            bound: tail_bound,
            tol: options.tol,
        });
    }

    let r_in = epsilon * spec.inner_radius().min(1e6);
    let near = 2.0 * r_in + 2.0 * h;
    let sub = options.subsample;
    let sub_offsets: Vec<Vec3> = {
        let t: Vec<f64> = (0..sub).map(|i| ((i as f64 + 0.5) / sub as f64 - 0.5) * h).collect();
        let mut v = Vec::with_capacity(sub * sub * sub);
        for &a in &t {
            for &b in &t {
                for &c in &t {
                    v.push(Vec3::new(a, b, c));
                }
            }
        }
        v
    };
    let inv_e3 = epsilon.powi(-3);
    let inside = r_in - 0.5 * 3f64.sqrt() * h;
    let sample = |x: &Vec3| -> Mat5 {
        let r = x.norm();
        if r < inside {
            // the whole cell lies inside the cutoff
            Mat5::zeros()
        } else if r <= near {
            let mut acc = Mat5::zeros();
            for o in &sub_offsets {
                acc += refined(spec, epsilon, r_in, &(x + o), h / sub as f64, 4);
            }
            acc * (inv_e3 / sub_offsets.len() as f64)
        } else {
            refined(spec, epsilon, r_in, x, h, 6) * inv_e3
        }
    };
    let m = shells as i64;
    let images_k: Vec<Vec3> = {
        let mut v = Vec::new();
        for a in -m..=m {
            for b in -m..=m {
                for c in -m..=m {
                    if (a, b, c) != (0, 0, 0) {
                        v.push(Vec3::new(a as f64, b as f64, c as f64) * TAU);
                    }
                }
            }
        }
        v
    };
    let far = if options.far_field {
        far_field(spec, (2 * m + 1) as f64 * PI, epsilon)
    } else {
        Mat5::zeros()
    };

    let (mut direct, mut images): (Vec<Sym5>, Vec<Sym5>) = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let d = grid.offset(i);
            let x = Vec3::new(d[0] as f64, d[1] as f64, d[2] as f64) * h;
            let dm = sample(&x);
            let mut im = far;
            for k in &images_k {
                im += sample(&(x + k));
            }
            (pack(&dm), pack(&im))
        })
        .unzip();

    // exact evenness; the Nyquist planes are their own mirror only after summing all images
    symmetrize(grid, &mut direct);
    symmetrize(grid, &mut images);
    Ok(LatticeSamples {
        direct,
        images,
        shells,
        tail_bound,
    })
}

/// Mean of `K(z/ε)` over a cube by 2×2×2 Gauss points, bisected where the
/// cube straddles the cutoff sphere or the kernel varies strongly across it.
fn refined(spec: &KernelSpec, epsilon: f64, r_in: f64, c: &Vec3, w: f64, depth: u32) -> Mat5 {
    let r = c.norm();
    let half_diag = 0.5 * 3f64.sqrt() * w;
    if r + half_diag < r_in {
        return Mat5::zeros();
    }
    let straddles = (r - r_in).abs() <= half_diag;
    let mut acc = Mat5::zeros();
    if depth == 0 || !(straddles || w > 0.25 * r) {
        if r > 40.0 * w {
            return kernel_matrix(spec, &(c / epsilon));
        }
        let g = 0.5 * w / 3f64.sqrt();
        for s in 0..8 {
            let o = corner(s, g);
            acc += kernel_matrix(spec, &((c + o) / epsilon));
        }
        return acc / 8.0;
    }
    for s in 0..8 {
        acc += refined(spec, epsilon, r_in, &(c + corner(s, 0.25 * w)), 0.5 * w, depth - 1);
    }
    acc / 8.0
}

fn corner(s: usize, q: f64) -> Vec3 {
    Vec3::new(
        if s & 1 == 0 { -q } else { q },
        if s & 2 == 0 { -q } else { q },
        if s & 4 == 0 { -q } else { q },
    )
}

fn symmetrize(grid: TorusGrid, v: &mut [Sym5]) {
    for i in 0..grid.len() {
        let d = grid.offset(i);
        let j = grid.wrap(-d[0], -d[1], -d[2]);
        if j > i {
            let avg: Sym5 = std::array::from_fn(|c| 0.5 * (v[i][c] + v[j][c]));
            v[i] = avg;
            v[j] = avg;
        }
    }
}

/// Isotropic averages of `I`, `T₂`, `T₃` over the sphere.
const ANGULAR_WEIGHTS: [f64; 3] = [1.0, 1.0 / 3.0, 2.0 / 15.0];

/// `∫_{|z| > ρ} K(z) dz` as a multiple of the identity.
pub(crate) fn isotropic_mass(spec: &KernelSpec, rho: f64) -> f64 {
    4.0 * PI
        * spec
            .profiles()
            .iter()
            .zip(ANGULAR_WEIGHTS)
            .map(|(p, w)| w * radial_tail(p, rho))
            .sum::<f64>()
}

fn isotropic_abs_mass(spec: &KernelSpec) -> f64 {
    4.0 * PI
        * spec
            .profiles()
            .iter()
            .zip(ANGULAR_WEIGHTS)
            .map(|(p, w)| w * radial_tail(p, 0.0).abs())
            .sum::<f64>()
}

/// `∫_ρ^∞ g(r) r² dr`.
pub(crate) fn radial_tail(p: &RadialProfile, rho: f64) -> f64 {
    if p.is_zero() {
        return 0.0;
    }
    let (lo, hi) = p.support();
    let a = rho.max(lo);
    if let Some(hi) = hi {
        if a >= hi {
            return 0.0;
        }
    }
    match &p.form {
        ProfileForm::InversePower => {
            let e = 3.0 - p.exponent;
            let up = hi.map_or(0.0, |hi| hi.powf(e));
            p.coefficient * (up - a.powf(e)) / e
        }
        ProfileForm::Table { r, .. } => {
            let hi = hi.unwrap();
            let rule = GaussRule::new(8);
            let mut knots: Vec<f64> = r.iter().copied().filter(|x| *x > a && *x < hi).collect();
            knots.insert(0, a);
            knots.push(hi);
            knots.windows(2).map(|w| rule.integrate(w[0], w[1], |x| p.eval(x) * x * x)).sum()
        }
        ProfileForm::Zero => 0.0,
    }
}

/// Mean over the central cell of all images outside the cube of half-side
/// `half`, i.e. `(2π)⁻³ ∫_{|z|∞ > half} ε⁻³K(z/ε) dz`.
fn far_field(spec: &KernelSpec, half: f64, epsilon: f64) -> Mat5 {
    let rule = AngularRule::new(48);
    let mut out = Mat5::zeros();
    for (z, w) in rule.dirs.iter().zip(&rule.weights) {
        let rho = half / (epsilon * z.amax());
        let [t1, t2, t3] = spec.profiles().map(|p| radial_tail(p, rho));
        if t1 == 0.0 && t2 == 0.0 && t3 == 0.0 {
            continue;
        }
        let (m2, m3) = direction_tensors(z);
        out += (Mat5::identity() * t1 + m2 * t2 + m3 * t3) * *w;
    }
    out / (TAU * TAU * TAU)
}

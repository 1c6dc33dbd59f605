//! Symmetric traceless 3×3 matrices in a fixed orthonormal basis.
//!
//! The five basis matrices are orthonormal for the Frobenius product, so the
//! coefficient vector of a tensor carries the same inner product as the matrix.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec5 = SVector<f64, 5>;
pub type Mat5 = SMatrix<f64, 5, 5>;

const RT2: f64 = std::f64::consts::SQRT_2;
const RT6: f64 = 2.449_489_742_783_178;

/// Lower eigenvalue bound of the moment set.
pub const EIG_MIN: f64 = -1.0 / 3.0;
/// Upper eigenvalue bound of the moment set.
pub const EIG_MAX: f64 = 2.0 / 3.0;

/// The `a`-th basis matrix.
pub fn basis_matrix(a: usize) -> Mat3 {
    let mut m = Mat3::zeros();
    match a {
        0 => {
            m[(0, 0)] = 1.0 / RT2;
            m[(1, 1)] = -1.0 / RT2;
        }
        1 => {
            m[(0, 0)] = -1.0 / RT6;
            m[(1, 1)] = -1.0 / RT6;
            m[(2, 2)] = 2.0 / RT6;
        }
        2 => {
            m[(0, 1)] = 1.0 / RT2;
            m[(1, 0)] = 1.0 / RT2;
        }
        3 => {
            m[(0, 2)] = 1.0 / RT2;
            m[(2, 0)] = 1.0 / RT2;
        }
        4 => {
            m[(1, 2)] = 1.0 / RT2;
            m[(2, 1)] = 1.0 / RT2;
        }
        _ => panic!("basis index {a} out of range"),
    }
    m
}

/// Coefficients of the traceless part of a symmetric matrix.
#[inline]
pub fn coefficients(m: &Mat3) -> Vec5 {
    let xy = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let xz = 0.5 * (m[(0, 2)] + m[(2, 0)]);
    let yz = 0.5 * (m[(1, 2)] + m[(2, 1)]);
    Vec5::new(
        (m[(0, 0)] - m[(1, 1)]) / RT2,
        (2.0 * m[(2, 2)] - m[(0, 0)] - m[(1, 1)]) / RT6,
        RT2 * xy,
        RT2 * xz,
        RT2 * yz,
    )
}

#[inline]
pub fn matrix(c: &Vec5) -> Mat3 {
    let xx = c[0] / RT2 - c[1] / RT6;
    let yy = -c[0] / RT2 - c[1] / RT6;
    let zz = 2.0 * c[1] / RT6;
    let xy = c[2] / RT2;
    let xz = c[3] / RT2;
    let yz = c[4] / RT2;
    Mat3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
}

/// Coefficients of `p⊗p − I/3`.
#[inline]
pub fn moment_vector(p: &Vec3) -> Vec5 {
    Vec5::new(
        (p[0] * p[0] - p[1] * p[1]) / RT2,
        (2.0 * p[2] * p[2] - p[0] * p[0] - p[1] * p[1]) / RT6,
        RT2 * p[0] * p[1],
        RT2 * p[0] * p[2],
        RT2 * p[1] * p[2],
    )
}

/// Matrix of the map `Q ↦ R Q Rᵀ` in the coefficient basis.
pub fn rotation_action(r: &Mat3) -> Mat5 {
    let mut out = Mat5::zeros();
    for b in 0..5 {
        let rotated = r * basis_matrix(b) * r.transpose();
        out.set_column(b, &coefficients(&rotated));
    }
    out
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    use std::f64::consts::TAU;
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = nalgebra::Quaternion::new(
        b * (TAU * u3).cos(),
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
    );
    nalgebra::UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .into_inner()
}

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let u: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - u * u).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), u)
}

/// Eigen-decomposition with eigenvalues sorted ascending; columns of the
/// returned matrix are the matching unit eigenvectors, each signed so that
/// its first non-negligible component is positive.
pub fn sorted_eigen(m: &Mat3) -> ([f64; 3], Mat3) {
    let eig = SymmetricEigen::new(*m);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut vals = [0.0; 3];
    let mut vecs = Mat3::zeros();
    for (slot, &i) in idx.iter().enumerate() {
        vals[slot] = eig.eigenvalues[i];
        let mut v = eig.eigenvectors.column(i).into_owned();
        if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                v = -v;
            }
        }
        vecs.set_column(slot, &v);
    }
    (vals, vecs)
}

/// A point of Sym₀(3).
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 5]", into = "[f64; 5]")]
pub struct QTensor(pub Vec5);

impl From<[f64; 5]> for QTensor {
    fn from(c: [f64; 5]) -> Self {
        QTensor(Vec5::from(c))
    }
}

impl From<QTensor> for [f64; 5] {
    fn from(q: QTensor) -> Self {
        q.0.into()
    }
}

impl QTensor {
    pub fn zero() -> Self {
        QTensor(Vec5::zeros())
    }

    pub fn new(c: [f64; 5]) -> Self {
        c.into()
    }

    /// `s (n⊗n − I/3)`; `n` need not be normalized.
    pub fn uniaxial(s: f64, n: &Vec3) -> Self {
        QTensor(s * moment_vector(&n.normalize()))
    }

    /// Traceless symmetric input; returns `None` when the trace or the
    /// antisymmetric part exceeds `tol`.
    pub fn from_matrix(m: &Mat3, tol: f64) -> Option<Self> {
        if m.trace().abs() > tol || (m - m.transpose()).amax() > tol {
            return None;
        }
        Some(QTensor(coefficients(m)))
    }

    /// Traceless part of the symmetric part of `m`.
    pub fn project_matrix(m: &Mat3) -> Self {
        QTensor(coefficients(m))
    }

    pub fn matrix(&self) -> Mat3 {
        matrix(&self.0)
    }

    pub fn dot(&self, other: &QTensor) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn eigen(&self) -> ([f64; 3], Mat3) {
        sorted_eigen(&self.matrix())
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        self.eigen().0
    }

    /// Eigenvalues strictly inside (−1/3 + margin, 2/3 − margin).
    pub fn in_open_set(&self, margin: f64) -> bool {
        let e = self.eigenvalues();
        e[0] > EIG_MIN + margin && e[2] < EIG_MAX - margin
    }

    pub fn in_closed_set(&self, tol: f64) -> bool {
        let e = self.eigenvalues();
        e[0] >= EIG_MIN - tol && e[2] <= EIG_MAX + tol
    }

    /// `R Q Rᵀ`.
    pub fn rotate(&self, r: &Mat3) -> Self {
        QTensor(coefficients(&(r * self.matrix() * r.transpose())))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Add for QTensor {
    type Output = QTensor;
    fn add(self, rhs: QTensor) -> QTensor {
        QTensor(self.0 + rhs.0)
    }
}

impl Sub for QTensor {
    type Output = QTensor;
    fn sub(self, rhs: QTensor) -> QTensor {
        QTensor(self.0 - rhs.0)
    }
}

impl Neg for QTensor {
    type Output = QTensor;
    fn neg(self) -> QTensor {
        QTensor(-self.0)
    }
}

impl Mul<f64> for QTensor {
    type Output = QTensor;
    fn mul(self, rhs: f64) -> QTensor {
        QTensor(self.0 * rhs)
    }
}

impl Mul<QTensor> for f64 {
    type Output = QTensor;
    fn mul(self, rhs: QTensor) -> QTensor {
        QTensor(rhs.0 * self)
    }
}

impl AddAssign for QTensor {
    fn add_assign(&mut self, rhs: QTensor) {
        self.0 += rhs.0;
    }
}

impl SubAssign for QTensor {
    fn sub_assign(&mut self, rhs: QTensor) {
        self.0 -= rhs.0;
    }
}

/// Lagrange multiplier of the maximum-entropy problem, in the same basis.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 5]", into = "[f64; 5]")]
pub struct Multiplier(pub Vec5);

impl From<[f64; 5]> for Multiplier {
    fn from(c: [f64; 5]) -> Self {
        Multiplier(Vec5::from(c))
    }
}

impl From<Multiplier> for [f64; 5] {
    fn from(m: Multiplier) -> Self {
        m.0.into()
    }
}

impl Multiplier {
    pub fn zero() -> Self {
        Multiplier(Vec5::zeros())
    }

    pub fn matrix(&self) -> Mat3 {
        matrix(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

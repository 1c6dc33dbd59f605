use super::{EnergyError, Result};

/// Jacobi-preconditioned conjugate gradients for an SPD operator. Stops on
/// `|r| ≤ tol |rhs|`.
pub(crate) fn pcg<F>(apply: F, diag: &[f64], rhs: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgReport>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport::default());
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut residual = norm(&r) / bnorm;
    let mut it = 0;
    while residual > tol {
        if it == max_iter {
            return Err(EnergyError::NonConvergence {
                iterations: it,
                residual,
            });
        }
        apply(&p, &mut ax);
        let alpha = rz / dot(&p, &ax);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        residual = norm(&r) / bnorm;
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let next = dot(&r, &z);
        let beta = next / rz;
        rz = next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    Ok(CgReport { iterations: it, residual })
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

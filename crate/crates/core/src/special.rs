//! Spherical Bessel functions of even order used by the kernel transforms.

const SERIES_CUTOFF: f64 = 3.0;

fn double_factorial_odd(n: usize) -> f64 {
    // (2n+1)!!
    (0..=n).map(|k| (2 * k + 1) as f64).product()
}

/// Power series of `j_ell`, dropping the first `skip` terms.
fn series(ell: usize, x: f64, skip: usize) -> f64 {
    let y = -0.5 * x * x;
    let mut term = x.powi(ell as i32) / double_factorial_odd(ell);
    let mut sum = 0.0;
    for k in 0..60 {
        if k >= skip {
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        term *= y / ((k + 1) as f64 * (2 * ell + 2 * k + 3) as f64);
    }
    sum
}

/// Spherical Bessel function `j_ell(x)` for `x ≥ 0`.
pub fn sph_bessel(ell: usize, x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        return series(ell, x, 0);
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    if ell == 0 {
        return j0;
    }
    let mut jm = j0;
    let mut j = s / (x * x) - c / x;
    for l in 1..ell {
        let next = (2 * l + 1) as f64 / x * j - jm;
        jm = j;
        j = next;
    }
    j
}

/// `1 − j₀(x)` without cancellation at small `x`.
pub fn one_minus_j0(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        -series(0, x, 1)
    } else {
        1.0 - x.sin() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn closed_j2(x: f64) -> f64 {
        (3.0 / (x * x * x) - 1.0 / x) * x.sin() - 3.0 * x.cos() / (x * x)
    }

    fn closed_j4(x: f64) -> f64 {
        let x2 = x * x;
        (105.0 / (x2 * x2 * x) - 45.0 / (x2 * x) + 1.0 / x) * x.sin()
            - (105.0 / (x2 * x2) - 10.0 / x2) * x.cos()
    }

    #[test]
    fn matches_closed_forms_away_from_zero() {
        for &x in &[2.5, 3.0, 3.5, 7.0, 20.0, 100.0] {
            assert_relative_eq!(sph_bessel(0, x), x.sin() / x, epsilon = 1e-13);
            assert_relative_eq!(sph_bessel(2, x), closed_j2(x), epsilon = 1e-12, max_relative = 1e-11);
            assert_relative_eq!(sph_bessel(4, x), closed_j4(x), epsilon = 1e-12, max_relative = 1e-10);
        }
    }

    #[test]
    fn series_branch_is_continuous() {
        for ell in [0, 2, 4] {
            let a = sph_bessel(ell, SERIES_CUTOFF - 1e-12);
            let b = sph_bessel(ell, SERIES_CUTOFF + 1e-12);
            assert!((a - b).abs() < 1e-12, "ell={ell}: {a} vs {b}");
        }
        let a = one_minus_j0(SERIES_CUTOFF - 1e-12);
        let b = one_minus_j0(SERIES_CUTOFF + 1e-12);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn small_argument_limits() {
        assert_eq!(sph_bessel(0, 0.0), 1.0);
        assert_eq!(sph_bessel(2, 0.0), 0.0);
        assert_relative_eq!(sph_bessel(2, 1e-3), 1e-6 / 15.0, max_relative = 1e-6);
        assert_relative_eq!(sph_bessel(4, 1e-2), 1e-8 / 945.0, max_relative = 1e-5);
        assert_relative_eq!(one_minus_j0(1e-4), 1e-8 / 6.0, max_relative = 1e-8);
    }
}

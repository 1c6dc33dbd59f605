//! Three-dimensional complex FFT on cubic grids stored x-fastest.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `x̂(k) = Σ_x x e^{−2πi k·x/N}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &*self.fwd);
    }

    /// Inverse transform including the `1/N³` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &*self.inv);
        let scale = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n, "buffer does not match grid");
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(data, &mut scratch);

        // y and z passes gather n lines at a time into a contiguous block
        let mut block = vec![Complex64::default(); n * n];
        for k in 0..n {
            let base = k * n * n;
            for i in 0..n {
                for j in 0..n {
                    block[i * n + j] = data[base + j * n + i];
                }
            }
            fft.process_with_scratch(&mut block, &mut scratch);
            for i in 0..n {
                for j in 0..n {
                    data[base + j * n + i] = block[i * n + j];
                }
            }
        }
        for j in 0..n {
            for i in 0..n {
                for k in 0..n {
                    block[i * n + k] = data[i + n * (j + n * k)];
                }
            }
            fft.process_with_scratch(&mut block, &mut scratch);
            for i in 0..n {
                for k in 0..n {
                    data[i + n * (j + n * k)] = block[i * n + k];
                }
            }
        }
    }
}

/// Signed frequency of index `i` on an `n`-point grid (Nyquist mapped to `−n/2`).
#[inline]
pub fn frequency(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

pub fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

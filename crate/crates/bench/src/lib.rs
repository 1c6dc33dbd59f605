//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qgamma::basis::Vec3;
use qgamma::field::{build_periodized_kernel, KernelSampling, LatticeOptions, OrderField, PeriodizedKernelGrid, TorusGrid};
use qgamma::maxent::{ground_state, BulkData, SphereSpec};
use qgamma::{KernelSpec, QTensor};

/// Soft `r⁻⁶` kernel with bulk stiffness around 30.
pub fn moderate_kernel() -> KernelSpec {
    KernelSpec::inverse_power([1.0, 1.0, 1.0], 6.0, 0.5)
}

pub fn moderate_bulk() -> BulkData {
    ground_state(30.0, SphereSpec { n_theta: 32, n_phi: 64 }).expect("ground state")
}

pub fn kernel_grid(n: usize, epsilon: f64, sampling: KernelSampling) -> PeriodizedKernelGrid {
    let grid = TorusGrid::new(n).expect("grid");
    build_periodized_kernel(&moderate_kernel(), grid, epsilon, sampling, &LatticeOptions::default()).expect("kernel grid")
}

/// Nematic field near the ground state with small seeded noise.
pub fn noisy_field(grid: TorusGrid, bulk: &BulkData, amp: f64, seed: u64) -> OrderField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Vec3::new(0.2, 0.3, 0.9).normalize();
    OrderField::from_fn(grid, |_| {
        let p: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-amp..amp));
        bulk.ground_tensor(&n) * 0.8 + QTensor::new(p)
    })
}

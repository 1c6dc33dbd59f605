use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qgamma::basis::{random_rotation, rotation_action, Vec3, Vec5};
use qgamma::energy::bilinear_spectral;
use qgamma::field::{
    build_periodized_kernel, director_to_field, DirectorSpec, KernelSampling, LatticeOptions, OrderField,
    PeriodizedKernelGrid, TorusGrid,
};
use qgamma::kernel::{elastic_tensor, kernel_matrix};
use qgamma::maxent::{dist_to_m, partition, project_q, psi_s, SphereQuadrature, SphereSpec};
use qgamma::minimize::best_shift;
use qgamma::{KernelSpec, Multiplier, QTensor, QuadratureSpec};

fn quad() -> &'static SphereQuadrature {
    static Q: OnceLock<SphereQuadrature> = OnceLock::new();
    Q.get_or_init(|| SphereQuadrature::new(SphereSpec { n_theta: 32, n_phi: 64 }))
}

fn kgrid() -> &'static PeriodizedKernelGrid {
    static K: OnceLock<PeriodizedKernelGrid> = OnceLock::new();
    K.get_or_init(|| {
        let spec = KernelSpec::inverse_power([1.0, 0.5, 0.25], 6.0, 0.5);
        build_periodized_kernel(&spec, TorusGrid::new(8).unwrap(), 0.9, KernelSampling::Spectral, &LatticeOptions::default())
            .unwrap()
    })
}

fn coeffs() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(-1.0f64..1.0)
}

fn multiplier() -> impl Strategy<Value = Multiplier> {
    (coeffs(), 0.0f64..8.0).prop_filter_map("zero direction", |(c, r)| {
        let v = Vec5::from(c);
        (v.norm() > 1e-3).then(|| Multiplier(v * (r / v.norm())))
    })
}

fn unit() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-1.0f64..1.0).prop_filter_map("short", |c| {
        let v = Vec3::from(c);
        (v.norm() > 1e-2).then(|| v.normalize())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficients_round_trip(c in coeffs()) {
        let q = QTensor::new(c);
        let m = q.matrix();
        prop_assert!(m.trace().abs() < 1e-14);
        prop_assert!((m - m.transpose()).norm() < 1e-14);
        let back = QTensor::from_matrix(&m, 1e-12).unwrap();
        prop_assert!((back.0 - q.0).norm() < 1e-14);
        prop_assert!((m.norm() - q.norm()).abs() < 1e-13);
    }

    #[test]
    fn rotation_preserves_norm(c in coeffs(), seed in any::<u64>()) {
        let r = random_rotation(&mut ChaCha8Rng::seed_from_u64(seed));
        let q = QTensor::new(c);
        prop_assert!((q.rotate(&r).norm() - q.norm()).abs() < 1e-13);
        prop_assert!((rotation_action(&r) * q.0 - q.rotate(&r).0).norm() < 1e-13);
    }

    #[test]
    fn projection_lands_in_shrunk_set(c in coeffs(), scale in 0.0f64..3.0, margin in 0.0f64..0.1) {
        let q = QTensor(Vec5::from(c) * scale);
        let p = project_q(&q, margin);
        let [lo, _, hi] = p.eigenvalues();
        prop_assert!(lo >= -1.0 / 3.0 + margin - 1e-12);
        prop_assert!(hi <= 2.0 / 3.0 - margin + 1e-12);
        // a projection is idempotent
        prop_assert!((project_q(&p, margin).0 - p.0).norm() < 1e-12);
    }

    #[test]
    fn partition_mean_is_in_open_set(lam in multiplier()) {
        let b = partition(&lam, quad()).mean;
        prop_assert!(b.in_open_set(0.0));
    }

    #[test]
    fn singular_potential_is_frame_indifferent(lam in multiplier(), seed in any::<u64>()) {
        let r = random_rotation(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = partition(&lam, quad()).mean;
        let a = psi_s(&b, quad()).unwrap();
        let c = psi_s(&b.rotate(&r), quad()).unwrap();
        prop_assert!((a - c).abs() < 1e-9 * (1.0 + a.abs()));
        // the uniform density has the least entropy functional
        prop_assert!(a >= -(4.0 * std::f64::consts::PI).ln() - 1e-12);
    }

    #[test]
    fn singular_potential_is_convex(l1 in multiplier(), l2 in multiplier(), t in 0.05f64..0.95) {
        let a = partition(&l1, quad()).mean;
        let b = partition(&l2, quad()).mean;
        let m = QTensor(a.0 * t + b.0 * (1.0 - t));
        let (pa, pb, pm) = (psi_s(&a, quad()).unwrap(), psi_s(&b, quad()).unwrap(), psi_s(&m, quad()).unwrap());
        prop_assert!(pm <= t * pa + (1.0 - t) * pb + 1e-9);
    }

    #[test]
    fn kernel_is_frame_indifferent(z in prop::array::uniform3(-3.0f64..3.0), seed in any::<u64>()) {
        let z = Vec3::from(z);
        prop_assume!(z.norm() > 0.6);
        let spec = KernelSpec::inverse_power([1.0, 0.7, -0.2], 6.0, 0.5);
        let r = random_rotation(&mut ChaCha8Rng::seed_from_u64(seed));
        let rho = rotation_action(&r);
        let lhs = kernel_matrix(&spec, &(r * z));
        let rhs = rho * kernel_matrix(&spec, &z) * rho.transpose();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn director_fields_lie_on_manifold(n in unit(), s in 0.1f64..0.95) {
        let g = TorusGrid::new(8).unwrap();
        let f = director_to_field(&DirectorSpec::Constant { n: n.into() }.sample(g).unwrap(), s);
        prop_assert!(f.values.iter().all(|b| dist_to_m(b, s) < 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dominant_first_profile_bounds_ratio(c2 in 0.0f64..1.0, c3 in 0.0f64..1.0) {
        let e = elastic_tensor(&KernelSpec::inverse_power([1.0, c2, c3], 6.0, 0.1), &QuadratureSpec::default(), 1.0).unwrap();
        prop_assert!(e.ratio() <= 0.3);
        prop_assert_eq!(e.k1, e.k3);
    }

    #[test]
    fn bilinear_is_translation_invariant_and_nonnegative(
        seed in any::<u64>(),
        d in prop::array::uniform3(-4i64..4),
        shift in coeffs(),
    ) {
        use rand::Rng;
        let k = kgrid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = OrderField::from_fn(k.grid, |_| QTensor::new(std::array::from_fn(|_| rng.gen_range(-0.3..0.3))));
        let (e, _) = bilinear_spectral(&f.values, k, false);
        let (et, _) = bilinear_spectral(&f.translated(d).values, k, false);
        prop_assert!(e >= 0.0);
        prop_assert!((e - et).abs() <= 1e-12 * e);
        // adding a constant does not change pair differences
        let c = QTensor::new(shift);
        let moved: Vec<QTensor> = f.values.iter().map(|b| *b + c).collect();
        let (ec, _) = bilinear_spectral(&moved, k, false);
        prop_assert!((e - ec).abs() <= 1e-10 * e);
        let (e0, _) = bilinear_spectral(&OrderField::constant(k.grid, c).values, k, false);
        prop_assert!(e0.abs() < 1e-14);
    }

    #[test]
    fn cross_correlation_recovers_shift(seed in any::<u64>(), d in prop::array::uniform3(0i64..8)) {
        use rand::Rng;
        let g = TorusGrid::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = OrderField::from_fn(g, |_| QTensor::new(std::array::from_fn(|_| rng.gen_range(-1.0..1.0))));
        let moved = f.translated(d);
        let (found, dist) = best_shift(&f, &moved);
        prop_assert!(dist < 1e-10);
        prop_assert_eq!(moved.translated(found).values, f.values);
    }
}

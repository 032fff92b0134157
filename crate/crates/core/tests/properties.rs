//! Randomized invariants of the linear algebra, expectations and solvers.

use isocurv_core::curvature::CurvatureSpec;
use isocurv_core::linalg::{random_gaussian, random_orthogonal, singular_values};
use isocurv_core::solver::{homogenization_report, ordering_violations};
use isocurv_core::sphere::{mc_expectation, quartic_expectation, ExactExpectation};
use isocurv_core::{
    alignment_gap, msgn_exact, msgn_newton_schulz, solve, solve_quartic_fixed_point, svd_compact,
    von_neumann_bound, DenseMatrix, ModelProblem, NsConfig, SolverOptions, SphereExpectation,
    SphereSampler,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix() -> impl Strategy<Value = DenseMatrix> {
    (1usize..=6, 1usize..=6, any::<u64>())
        .prop_map(|(m, n, seed)| random_gaussian(m, n, &mut ChaCha8Rng::seed_from_u64(seed)))
}

fn spectrum(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..4.0, 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_with_sorted_spectrum(a in matrix()) {
        let svd = svd_compact(&a).unwrap();
        let err = svd.reconstruct().sub(&a).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-10 * a.frobenius_norm().max(1.0));
        prop_assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(svd.sigma.iter().all(|s| *s >= 0.0));
    }

    #[test]
    fn polar_factor_is_a_partial_isometry(a in matrix()) {
        let p = msgn_exact(&a).unwrap();
        let sv = singular_values(&p).unwrap();
        prop_assert!(sv.iter().all(|s| (s - 1.0).abs() <= 1e-10));
        prop_assert!(msgn_exact(&p).unwrap().sub(&p).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn trace_inner_is_bounded_by_singular_values(a in matrix(), seed in any::<u64>()) {
        let b = random_gaussian(a.rows(), a.cols(), &mut ChaCha8Rng::seed_from_u64(seed));
        let bound = von_neumann_bound(&a, &b).unwrap();
        prop_assert!(bound.lhs <= bound.rhs * (1.0 + 1e-12) + 1e-12);
        // equality when B shares the singular vectors of A
        let aligned = von_neumann_bound(&a, &msgn_exact(&a).unwrap()).unwrap();
        prop_assert!((aligned.lhs - aligned.rhs).abs() <= 1e-10 * aligned.rhs.max(1.0));
    }

    #[test]
    fn spectrum_is_rotation_invariant(a in matrix(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rotated = random_orthogonal(a.rows(), &mut rng).matmul(&a).unwrap()
            .matmul(&random_orthogonal(a.cols(), &mut rng)).unwrap();
        let (s, r) = (singular_values(&a).unwrap(), singular_values(&rotated).unwrap());
        for (x, y) in s.iter().zip(&r) {
            prop_assert!((x - y).abs() <= 1e-10 * s[0].max(1.0));
        }
    }

    #[test]
    fn newton_schulz_is_equivariant(a in matrix(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (o1, o2) = (random_orthogonal(a.rows(), &mut rng), random_orthogonal(a.cols(), &mut rng));
        let cfg = NsConfig::default();
        let lhs = msgn_newton_schulz(&o1.matmul(&a).unwrap().matmul(&o2).unwrap(), &cfg).unwrap();
        let rhs = o1.matmul(&msgn_newton_schulz(&a, &cfg).unwrap()).unwrap().matmul(&o2).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-9);
    }

    #[test]
    fn quartic_fixed_point_preserves_order_and_contracts_ratios(sigma in spectrum(8), extra in 0usize..4, c in 0.1f64..5.0) {
        let n = sigma.len() + extra;
        let fp = solve_quartic_fixed_point(&sigma, n, c).unwrap();
        prop_assert!(fp.residual <= 1e-10 * (n * (n + 2)) as f64 * sigma.iter().fold(1.0f64, |m, s| m.max(*s)) / c);
        prop_assert!(ordering_violations(&sigma, &fp.sigma_star, 1e-9).is_empty());
        prop_assert!(homogenization_report(&sigma, &fp.sigma_star).all_pass);
    }

    #[test]
    fn power_quadrature_agrees_with_sampling(sigma in spectrum(4), extra in 0usize..3, alpha in 0.05f64..1.95, seed in any::<u64>()) {
        let n = sigma.len() + extra;
        let h = CurvatureSpec::power(1.0, alpha).unwrap();
        let exact = ExactExpectation::for_curvature(&h, n).unwrap().value(&sigma).mean;
        let mc = mc_expectation(&sigma, &h, &SphereSampler::new(n, 20_000, seed).unwrap()).unwrap();
        prop_assert!((mc.mean - exact).abs() <= 5.0 * mc.std_err + 1e-9 * exact, "{} vs {exact}", mc.mean);
    }

    #[test]
    fn quartic_expectation_is_homogeneous(sigma in spectrum(5), extra in 0usize..3, t in 0.1f64..3.0) {
        let n = sigma.len() + extra;
        let scaled: Vec<f64> = sigma.iter().map(|s| s * t).collect();
        let (base, big) = (quartic_expectation(&sigma, n, 1.0).unwrap(), quartic_expectation(&scaled, n, 1.0).unwrap());
        prop_assert!((big - t.powi(4) * base).abs() <= 1e-12 * big.max(1e-300));
    }

    #[test]
    fn solution_aligns_with_gradient(a in matrix(), pick in 0usize..3, c in 0.2f64..3.0) {
        let h = match pick {
            0 => CurvatureSpec::quadratic(c),
            1 => CurvatureSpec::quartic(c),
            _ => CurvatureSpec::power(c, 0.5),
        }.unwrap();
        let problem = ModelProblem::new(a.clone(), h, SphereSampler::new(a.cols(), 1000, 0).unwrap()).unwrap();
        let sol = solve(&problem, &SolverOptions { tol: 1e-11, ..SolverOptions::default() }).unwrap();
        prop_assert!(alignment_gap(&a, &sol.q_star).unwrap().abs() <= 1e-8 * a.frobenius_norm().max(1.0));
        prop_assert!(sol.objective <= 1e-12);
        prop_assert!(ordering_violations(&sol.sigma, &sol.sigma_star, 1e-9).is_empty());
    }

    #[test]
    fn subdifferential_is_monotone(a in 0.0f64..3.0, gap in 0.01f64..10.0, rt in 0.1f64..3.0, r1 in 0.0f64..6.0, r2 in 0.0f64..6.0) {
        let h = CurvatureSpec::kink(a, a + gap, rt).unwrap();
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(h.subdiff(lo).1 <= h.subdiff(hi).0 + 1e-12 || lo == hi);
        prop_assert!(h.value(lo) <= h.value(hi) + 1e-12);
    }
}

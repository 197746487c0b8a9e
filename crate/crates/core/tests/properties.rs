mod common;

use common::{cfg, random_hypoelliptic, random_matrix, rng, triple, well_conditioned};
use ou_lab::expm::matrix_exp;
use ou_lab::harmonic::{
    convexity_check, counterexample_1d, derivative_consistency, harmonic_catalog, liouville_verdict, residual,
    semigroup_invariance, ConvexityMode, LiouvilleOutcome, Quadratic,
};
use ou_lab::jordan::{jordan_real_form, quasi_constancy_check};
use ou_lab::operator::{conjugate_operator, kalman_rank, spectral_bound};
use ou_lab::sampling::{ball_points, probe_points};
use ou_lab::semigroup::{gramian, kwapien_check, semigroup_apply};
use ou_lab::{Engine, GramianMethod, HarmonicCandidate, Mat, OperatorSpec, Vector};
use proptest::prelude::*;
use rand::Rng;

fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kalman_and_spectral_bound_are_conjugation_invariant(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let spec = random_hypoelliptic(&mut r, n);
        let p = well_conditioned(&mut r, n);
        let conj = conjugate_operator(&spec, &p, &cfg()).unwrap();
        prop_assert_eq!(kalman_rank(&spec, &cfg()).unwrap().rank, kalman_rank(&conj, &cfg()).unwrap().rank);
        let s0 = spectral_bound(spec.a(), &cfg()).unwrap();
        let s1 = spectral_bound(conj.a(), &cfg()).unwrap();
        prop_assert!((s0.spectral_bound - s1.spectral_bound).abs() < 1e-8);
    }

    #[test]
    fn exponential_semigroup_law(seed in any::<u64>(), n in 1usize..7, s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, n, n);
        let lhs = matrix_exp(&a, s + t).unwrap();
        let rhs = matrix_exp(&a, s).unwrap() * matrix_exp(&a, t).unwrap();
        prop_assert!(rel(&lhs, &rhs) < 1e-12, "{}", rel(&lhs, &rhs));
    }

    #[test]
    fn nilpotent_exponential_is_a_polynomial(seed in any::<u64>(), n in 1usize..7, t in -4.0f64..4.0) {
        let mut r = rng(seed);
        let a = Mat::from_fn(n, n, |i, j| if j > i { r.random_range(-1.0..1.0) } else { 0.0 });
        let mut series = Mat::identity(n, n);
        let mut term = Mat::identity(n, n);
        for k in 1..n {
            term = &term * &a * (t / k as f64);
            series += &term;
        }
        prop_assert!(rel(&matrix_exp(&a, t).unwrap(), &series) < 1e-13);
    }

    #[test]
    fn gramian_methods_agree_and_flow(seed in any::<u64>(), n in 1usize..5, t in 0.1f64..3.0, s in 0.1f64..2.0) {
        let spec = random_hypoelliptic(&mut rng(seed), n);
        let results: Vec<Mat> = GramianMethod::ALL
            .iter()
            .map(|&m| gramian(&spec, t, m, &cfg()).unwrap().qt)
            .collect();
        for i in 0..3 {
            for j in i + 1..3 {
                prop_assert!(rel(&results[i], &results[j]) < 1e-8, "{:?} vs {:?}: {}", GramianMethod::ALL[i], GramianMethod::ALL[j], rel(&results[i], &results[j]));
            }
        }
        let qts = gramian(&spec, t + s, GramianMethod::BlockExp, &cfg()).unwrap().qt;
        let e = matrix_exp(spec.a(), t).unwrap();
        let flow = &results[0] + &e * gramian(&spec, s, GramianMethod::BlockExp, &cfg()).unwrap().qt * e.transpose();
        prop_assert!(rel(&qts, &flow) < 1e-10);
    }

    #[test]
    fn quadratic_derivatives_match_finite_differences(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let m = random_matrix(&mut r, n, n);
        let b = Vector::from_iterator(n, (0..n).map(|_| r.random_range(-2.0..2.0)));
        let u = HarmonicCandidate::new("q", Quadratic::new(m, b, 0.5).unwrap(), None, false);
        let report = derivative_consistency(&u, &probe_points(n, 4, seed)).unwrap();
        prop_assert!(report.passed(), "{}", report);
    }

    #[test]
    fn convex_quadratics_pass_and_concave_fail_midpoint(seed in any::<u64>(), n in 1usize..5) {
        let mut r = rng(seed);
        let g = random_matrix(&mut r, n, n);
        let psd = &g * g.transpose();
        let xs = ball_points(n, 16, 2.0, seed);
        let as_ = ball_points(n, 16, 1.0, seed ^ 1);
        let pairs: Vec<(Vector, Vector)> = xs.into_iter().zip(as_).collect();
        let convex = HarmonicCandidate::new("c", Quadratic::new(psd.clone(), Vector::zeros(n), 0.0).unwrap(), None, true);
        prop_assert!(convexity_check(&convex, &pairs, ConvexityMode::Midpoint, &cfg()).unwrap().passed());
        let concave = HarmonicCandidate::new("c", Quadratic::new(-psd - Mat::identity(n, n), Vector::zeros(n), 0.0).unwrap(), None, false);
        prop_assert!(!convexity_check(&concave, &pairs, ConvexityMode::Midpoint, &cfg()).unwrap().passed());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Polynomial harmonic functions are integrated exactly by Gauss-Hermite,
    /// so residual and quadrature invariance must agree.
    #[test]
    fn catalog_residual_and_invariance_cohere(seed in any::<u64>(), n in 1usize..4) {
        let mut r = rng(seed);
        let spec = random_hypoelliptic(&mut r, n);
        let engine = Engine::quadrature(&cfg());
        let xs = ball_points(n, 5, 1.5, seed);
        for u in harmonic_catalog(&spec, &cfg()).unwrap() {
            if u.label.starts_with("erf") {
                continue;
            }
            let inv = semigroup_invariance(&spec, &u, &xs, &[0.5, 1.0], &engine, &cfg()).unwrap();
            prop_assert!(inv.passed(), "{}: {}", u.label, inv);
        }
        // a non-harmonic coordinate is caught by both
        let b = Vector::from_iterator(n, (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }));
        let u = HarmonicCandidate::new("x1", ou_lab::harmonic::Affine { b: b.clone(), c: 0.0 }, Some(ou_lab::GrowthCertificate::exponential(1.0).unwrap()), false);
        let moved = (spec.a().transpose() * &b).norm() > 1e-6;
        let res = residual(&spec, &u, &probe_points(n, 8, 0), &cfg()).unwrap();
        let inv = semigroup_invariance(&spec, &u, &xs, &[1.0], &engine, &cfg()).unwrap();
        prop_assert_eq!(res.passed(), !moved);
        if moved {
            prop_assert!(!inv.passed());
        }
    }

    /// On nilpotent drifts conjugated by a random basis, harmonic catalog
    /// candidates that pass midpoint convexity are quasi-constant.
    #[test]
    fn convex_harmonic_candidates_are_quasi_constant(seed in any::<u64>(), k in 2usize..5) {
        let mut r = rng(seed);
        let j = ou_lab::jordan::block_matrix(ou_lab::BlockKind::NilpotentJordan { k }, k);
        let p = well_conditioned(&mut r, k);
        let a = &p * &j * p.clone().try_inverse().unwrap();
        let spec = OperatorSpec::new(Mat::identity(k, k), a, &cfg()).unwrap();
        let dec = jordan_real_form(spec.a(), &cfg()).unwrap();
        let xs = ball_points(k, 32, 2.0, seed);
        let as_ = ball_points(k, 32, 1.0, seed ^ 7);
        let pairs: Vec<(Vector, Vector)> = xs.into_iter().zip(as_).collect();
        for u in harmonic_catalog(&spec, &cfg()).unwrap() {
            if convexity_check(&u, &pairs, ConvexityMode::Midpoint, &cfg()).unwrap().passed() {
                let q = quasi_constancy_check(&u, &dec, 64, 3.0, seed, &cfg()).unwrap();
                prop_assert!(q.verdict.is_ok(), "{}: {}", u.label, q);
            }
        }
    }

    #[test]
    fn kwapien_holds_at_quadrature_precision(seed in any::<u64>(), t in 0.2f64..3.0) {
        let mut r = rng(seed);
        let spec = random_hypoelliptic(&mut r, 2);
        let x = Vector::from_iterator(2, (0..2).map(|_| r.random_range(-2.0..2.0)));
        let a = Vector::from_iterator(2, (0..2).map(|_| r.random_range(-1.0..1.0)));
        let f = common::gaussian_bump(Vector::from_vec(vec![0.5, -0.3]), 1.0);
        let rep = kwapien_check(&spec, f, &x, &a, t, &Engine::quadrature(&cfg()), &cfg()).unwrap();
        prop_assert!(rep.passed(), "{}", rep);
    }
}

#[test]
fn quadratic_harmonic_of_triple_integrator_is_not_quasi_constant() {
    let spec = triple();
    let dec = jordan_real_form(spec.a(), &cfg()).unwrap();
    let q = harmonic_catalog(&spec, &cfg()).unwrap().into_iter().find(|u| u.label == "quadratic1").unwrap();
    assert!(residual(&spec, &q, &probe_points(3, 8, 0), &cfg()).unwrap().passed());
    let xs = ball_points(3, 32, 2.0, 0);
    let as_ = ball_points(3, 32, 1.0, 1);
    let pairs: Vec<(Vector, Vector)> = xs.into_iter().zip(as_).collect();
    assert!(!convexity_check(&q, &pairs, ConvexityMode::Midpoint, &cfg()).unwrap().passed());
    assert!(!quasi_constancy_check(&q, &dec, 64, 3.0, 0, &cfg()).unwrap().passed());
}

#[test]
fn counterexamples_are_sharp() {
    for (a, q) in [(1.0, 1.0), (2.0, 1.0), (1.0, 3.0)] {
        let spec = OperatorSpec::new(Mat::from_element(1, 1, q), Mat::from_element(1, 1, a), &cfg()).unwrap();
        let u = counterexample_1d(a, q).unwrap();
        let grid: Vec<Vector> = (0..101).map(|i| Vector::from_element(1, -5.0 + 0.1 * i as f64)).collect();
        let res = residual(&spec, &u, &grid, &cfg()).unwrap();
        assert!(res.passed() && res.statistic <= 1e-10, "{res}");
        let range = u.value(&Vector::from_element(1, 1e3)) - u.value(&Vector::from_element(1, -1e3));
        assert!((range - (std::f64::consts::PI * q / a).sqrt()).abs() < 1e-10);
        let xs: Vec<Vector> = (-2..=2).map(|i| Vector::from_element(1, i as f64)).collect();
        let inv = semigroup_invariance(&spec, &u, &xs, &[0.5, 1.0], &Engine::monte_carlo(100_000, 5), &cfg()).unwrap();
        assert!(inv.passed(), "{inv}");
        let v = liouville_verdict(&spec, &u, &[res], &cfg()).unwrap();
        assert_eq!(v.verdict, LiouvilleOutcome::Counterexample);
    }
}

#[test]
fn monte_carlo_is_independent_of_thread_count() {
    let spec = triple();
    let x = Vector::from_vec(vec![0.3, -0.2, 1.0]);
    let f = |y: &Vector| y.norm_squared().sin();
    let engine = Engine::monte_carlo(50_000, 11);
    let at = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| semigroup_apply(&spec, f, &x, 1.0, &engine, &cfg()).unwrap())
    };
    let one = at(1);
    assert_eq!(one, at(4));
    assert_eq!(one, at(7));
}

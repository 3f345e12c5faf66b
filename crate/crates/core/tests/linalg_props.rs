use peakfilter_core::expr::ExprAst;
use peakfilter_core::linalg::{self, Mat, DEFAULT_RANK_TOL};
use peakfilter_testkit::fixtures;
use peakfilter_testkit::numeric::{jacobian_fd, random_matrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// n × n matrix of rank s built as a product of random factors.
fn rank_deficient(seed: u64, n: usize, s: usize) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = random_matrix(&mut rng, n, s);
    let r = random_matrix(&mut rng, s, n);
    &l * &r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complement_identities(seed in any::<u64>(), n in 1usize..7, drop in 0usize..4) {
        let s = n.saturating_sub(drop).max(1);
        let e = rank_deficient(seed, n, s);
        let rank = linalg::rank_of(&e, DEFAULT_RANK_TOL).unwrap();
        prop_assume!(rank == s);
        let ep = linalg::orthogonal_complement(&e, DEFAULT_RANK_TOL).unwrap();
        prop_assert_eq!(ep.shape(), (n - s, n));
        let scale = e.amax().max(1.0);
        prop_assert!((&ep * &e).amax() <= 1e-10 * scale);
        let gram = &ep * ep.transpose();
        prop_assert!((gram - Mat::identity(n - s, n - s)).amax() <= 1e-10);
        let kernel = linalg::right_null_space(&e, DEFAULT_RANK_TOL).unwrap();
        prop_assert_eq!(kernel.ncols(), n - s);
        prop_assert!((&e * &kernel).amax() <= 1e-10 * scale);
    }

    #[test]
    fn decompose_round_trip(seed in any::<u64>(), n in 1usize..7, drop in 0usize..4) {
        let s = n.saturating_sub(drop).max(1);
        let e = rank_deficient(seed, n, s);
        prop_assume!(linalg::rank_of(&e, DEFAULT_RANK_TOL).unwrap() == s);
        let w = linalg::semi_explicit_decompose(&e, DEFAULT_RANK_TOL).unwrap();
        prop_assert_eq!(w.rank, s);
        prop_assert!(w.is_valid_for(&e, 1e-10), "residual {}", w.residual(&e));
    }

    #[test]
    fn expression_jacobian_matches_differences(x1 in -5.0f64..5.0, x2 in -5.0f64..5.0, x3 in -5.0f64..5.0) {
        let ast = ExprAst::parse(
            "sin(x1)*cos(x2) + x3^2/10; tanh(x1 - 2*x3) + exp(-x2^2); ln(1 + x1^2) - tan(x2*x3/100) + abs(x1 - 7)",
            3,
            0,
        )
        .unwrap();
        let x = [x1, x2, x3];
        let exact = ast.jacobian_x(&x, &[], 0.0).unwrap();
        let approx = jacobian_fd(|v| ast.eval(v, &[], 0.0).unwrap(), &x, 1e-6);
        prop_assert!((exact - approx).amax() <= 1e-5);
    }

    #[test]
    fn example_nonlinearity_jacobian(x1 in -50.0f64..50.0, x2 in -50.0f64..50.0) {
        let p = fixtures::example_plant();
        let x = [x1, x2];
        let exact = p.state_nl.jacobian_x(&x, &[], 0.0).unwrap();
        let approx = jacobian_fd(|v| p.state_nl.eval(v, &[], 0.0).unwrap(), &x, 1e-6);
        prop_assert!((exact - approx).amax() <= 1e-5);
    }
}

#[test]
fn example_descriptor_matrix() {
    let e = fixtures::example_plant().e;
    assert_eq!(linalg::rank_of(&e, DEFAULT_RANK_TOL).unwrap(), 1);
    let ep = linalg::orthogonal_complement(&e, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(ep.shape(), (1, 2));
    // The left null space of [2 3; 4 6] is spanned by (2, −1)/√5.
    let want = [2.0 / 5f64.sqrt(), -1.0 / 5f64.sqrt()];
    let sign = ep[(0, 0)].signum();
    assert!((ep[(0, 0)] * sign - want[0]).abs() < 1e-12);
    assert!((ep[(0, 1)] * sign - want[1]).abs() < 1e-12);
}

use peakfilter_core::augment::{assemble, gamma_matrix, omega_stack};
use peakfilter_core::linalg::{spectral_norm, Mat, Vector};
use peakfilter_core::model::{combined_gamma, FilterRealization};
use peakfilter_testkit::fixtures;
use peakfilter_testkit::numeric::random_matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reported_filter() -> FilterRealization {
    FilterRealization {
        a: fixtures::reported_af(),
        b: fixtures::reported_bf(),
        c: fixtures::reported_cf(),
        nl_state: Mat::identity(2, 2),
        nl_output: Mat::zeros(2, 1),
        feed: Mat::zeros(2, 1),
        mu_star: fixtures::REPORTED_MU,
    }
}

/// F with ‖F‖ ≤ 1: a random matrix scaled into the unit ball.
fn contraction(rng: &mut impl Rng, k: usize, l: usize) -> Mat {
    let f = random_matrix(rng, k, l);
    let s = spectral_norm(&f);
    let target: f64 = rng.random_range(0.0..=1.0);
    if s == 0.0 {
        f
    } else {
        f * (target / s)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gamma_norm_identity(n in 1usize..6, p in 1usize..4, g1 in 0.0f64..10.0, g2 in 0.0f64..10.0) {
        let g = gamma_matrix(n, p, g1, g2);
        prop_assert_eq!(g.shape(), (2 * n + 2 * p, 2 * n));
        let want = combined_gamma(g1, g2).unwrap();
        prop_assert!((spectral_norm(&g) - want).abs() <= 1e-12 * want.max(1.0));
    }
}

#[test]
fn omega_is_lipschitz_on_random_pairs() {
    let plant = fixtures::example_plant();
    let gamma = plant.lipschitz().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let omega = |xi: &[f64]| -> Vector {
        let (xf, x) = xi.split_at(2);
        omega_stack(
            &plant.state_nl.eval(x, &[], 0.0).unwrap(),
            &plant.output_nl.eval(x, &[], 0.0).unwrap(),
            &plant.state_nl.eval(xf, &[], 0.0).unwrap(),
            &plant.output_nl.eval(xf, &[], 0.0).unwrap(),
        )
        .unwrap()
    };
    for _ in 0..1000 {
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(-20.0..20.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.random_range(-20.0..20.0)).collect();
        let lhs = (omega(&a) - omega(&b)).norm();
        let dist = Vector::from_column_slice(&a) - Vector::from_column_slice(&b);
        assert!(lhs <= gamma * dist.norm() + 1e-9, "{lhs} > {gamma}·{}", dist.norm());
    }
}

#[test]
fn uncertainty_factorization_reproduces_perturbation() {
    let plant = fixtures::example_plant();
    let filter = reported_filter();
    let sys = assemble(&plant, &filter).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let f = contraction(&mut rng, 2, 2);
        let got = &sys.unc_left * &f * &sys.unc_right;
        // The perturbation enters the filter through B_F ΔC and the plant through ΔA;
        // both act on x only, so the x_F columns are zero.
        let d_out = &plant.unc_output * &f * &plant.unc_right;
        let d_state = &plant.unc_state * &f * &plant.unc_right;
        let mut want = Mat::zeros(4, 4);
        want.view_mut((0, 2), (2, 2)).copy_from(&(&filter.b * d_out));
        want.view_mut((2, 2), (2, 2)).copy_from(&d_state);
        assert!((&got - &want).amax() <= 1e-14);
        assert_eq!(got.view((0, 0), (4, 2)).amax(), 0.0);
    }
}

/// Right-hand side of the plant and filter equations written out directly.
fn direct_rhs(
    plant: &peakfilter_core::model::DescriptorPlant,
    filter: &FilterRealization,
    f: &Mat,
    xf: &Vector,
    x: &Vector,
    w: &Vector,
) -> (Vector, Vector) {
    let phi = |v: &Vector| Vector::from_vec(plant.state_nl.eval(v.as_slice(), &[], 0.0).unwrap());
    let psi = |v: &Vector| Vector::from_vec(plant.output_nl.eval(v.as_slice(), &[], 0.0).unwrap());
    let a = &plant.a + &plant.unc_state * f * &plant.unc_right;
    let c = &plant.c + &plant.unc_output * f * &plant.unc_right;
    let y = &c * x + psi(x) + &plant.d * w;
    let plant_rhs = &a * x + phi(x) + &plant.b * w;
    let filter_rhs = &filter.a * xf + &filter.b * y + &filter.nl_state * phi(xf) + &filter.nl_output * psi(xf);
    (filter_rhs, plant_rhs)
}

#[test]
fn augmented_dynamics_match_direct_equations() {
    let plant = fixtures::example_plant();
    let filter = reported_filter();
    let sys = assemble(&plant, &filter).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let xi = Vector::from_fn(4, |_, _| rng.random_range(-5.0..5.0));
        let w = Vector::from_fn(1, |_, _| rng.random_range(-5.0..5.0));
        let f = contraction(&mut rng, 2, 2);
        let xf = xi.rows(0, 2).into_owned();
        let x = xi.rows(2, 2).into_owned();
        let om = omega_stack(
            &plant.state_nl.eval(x.as_slice(), &[], 0.0).unwrap(),
            &plant.output_nl.eval(x.as_slice(), &[], 0.0).unwrap(),
            &plant.state_nl.eval(xf.as_slice(), &[], 0.0).unwrap(),
            &plant.output_nl.eval(xf.as_slice(), &[], 0.0).unwrap(),
        )
        .unwrap();
        let lhs = (&sys.a + &sys.unc_left * &f * &sys.unc_right) * &xi + &sys.nl_in * &om + &sys.b * &w;
        let (rf, rp) = direct_rhs(&plant, &filter, &f, &xf, &x, &w);
        assert!((lhs.rows(0, 2) - rf).amax() <= 1e-12);
        assert!((lhs.rows(2, 2) - rp).amax() <= 1e-12);
        let e = &sys.c * &xi + &sys.nl_out * &om;
        let want = &plant.target * &x - &filter.c * &xf;
        assert!((e - want).amax() <= 1e-12);
    }
}

#[test]
fn reported_realization_sits_in_the_leading_block() {
    let sys = assemble(&fixtures::example_plant(), &reported_filter()).unwrap();
    assert_eq!(sys.a.view((0, 0), (2, 2)).into_owned(), fixtures::reported_af());
    assert_eq!(sys.e.view((0, 0), (2, 2)).into_owned(), fixtures::example_plant().e);
    assert_eq!(sys.e.view((2, 2), (2, 2)).into_owned(), fixtures::example_plant().e);
    assert_eq!(sys.e.view((0, 2), (2, 2)).amax(), 0.0);
}

#[test]
fn static_gain_error_dynamics() {
    // With H = I, no disturbance and no uncertainty: E ė = (A − LC) e + Δf − L Δg.
    let mut plant = fixtures::example_plant();
    plant.target = Mat::identity(2, 2);
    plant.output_nl = peakfilter_core::expr::ExprAst::parse("0.1*sin(x1 + x2)", 2, 0).unwrap();
    plant.lip_output = 0.1 * 2f64.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let l = random_matrix(&mut rng, 2, 1);
        let filter = FilterRealization::static_gain(&plant, &l).unwrap();
        let sys = assemble(&plant, &filter).unwrap();
        let xi = Vector::from_fn(4, |_, _| rng.random_range(-5.0..5.0));
        let xf = xi.rows(0, 2).into_owned();
        let x = xi.rows(2, 2).into_owned();
        let phi = |v: &Vector| Vector::from_vec(plant.state_nl.eval(v.as_slice(), &[], 0.0).unwrap());
        let psi = |v: &Vector| Vector::from_vec(plant.output_nl.eval(v.as_slice(), &[], 0.0).unwrap());
        let om = omega_stack(phi(&x).as_slice(), psi(&x).as_slice(), phi(&xf).as_slice(), psi(&xf).as_slice()).unwrap();
        let e = &sys.c * &xi + &sys.nl_out * &om;
        assert!((&e - (&x - &xf)).amax() <= 1e-12);
        let rhs = &sys.a * &xi + &sys.nl_in * &om;
        let err_rhs = rhs.rows(2, 2) - rhs.rows(0, 2);
        let want = (&plant.a - &l * &plant.c) * (&x - &xf) + (phi(&x) - phi(&xf)) - &l * (psi(&x) - psi(&xf));
        assert!((err_rhs - want).amax() <= 1e-12);
    }
}

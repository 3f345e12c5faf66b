use peakfilter_core::linalg::{self, Mat, DEFAULT_RANK_TOL};
use peakfilter_core::lmi::{build_problem, names, BuildOptions, ConstraintRole, LmiProblem, MatExpr, Sense, VarKind};
use peakfilter_core::model::FilterStructure;
use peakfilter_core::sdp::{self, certify, lower, smat, svec, svec_len, ConicProgram, SolveOptions, SolveStatus};
use peakfilter_testkit::barrier;
use peakfilter_testkit::fixtures;
use peakfilter_testkit::numeric::{random_spd, random_symmetric};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> barrier::RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..6);
    let sides: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(1..5)).collect();
    let eqs = rng.random_range(0..m);
    barrier::random_instance(&mut rng, m, &sides, eqs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn svec_is_an_isometry(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_symmetric(&mut rng, n);
        let b = random_symmetric(&mut rng, n);
        let (va, vb) = (svec(&a), svec(&b));
        prop_assert_eq!(va.len(), svec_len(n));
        let inner: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        let frob = a.component_mul(&b).sum();
        prop_assert!((inner - frob).abs() <= 1e-12 * (1.0 + frob.abs()));
        prop_assert!((smat(&va, n) - &a).amax() <= 1e-12 * (1.0 + a.amax()));
        let reference = barrier::encode(&a);
        prop_assert!(va.iter().zip(&reference).all(|(x, y)| (x - y).abs() <= 1e-15 * (1.0 + y.abs())));
    }
}

#[test]
fn matches_barrier_oracle_on_random_instances() {
    let mut solved = 0;
    for seed in 0..20u64 {
        let inst = instance(seed);
        let sol = sdp::solve(&inst.program, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
        let oracle = barrier::solve(&inst.program, &inst.start, 1e-10).unwrap();
        let tol = 1e-6 * (1.0 + oracle.objective.abs());
        assert!(
            (sol.objective - oracle.objective).abs() <= tol,
            "seed {seed}: {} vs {}",
            sol.objective,
            oracle.objective
        );
        assert!(inst.program.violation(&sol.x) <= 1e-7, "seed {seed}");
        solved += 1;
    }
    assert_eq!(solved, 20);
}

#[test]
fn weak_duality_holds() {
    for seed in 100..130u64 {
        let inst = instance(seed);
        let sol = sdp::solve(&inst.program, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let slack = 1e-7 * (1.0 + sol.objective.abs());
        assert!(sol.dual_objective <= sol.objective + slack, "seed {seed}");
        assert!(sol.objective - sol.dual_objective <= 1e-6 * (1.0 + sol.objective.abs()), "seed {seed}");
    }
}

#[test]
fn solve_is_deterministic() {
    for seed in 200..205u64 {
        let inst = instance(seed);
        let a = sdp::solve(&inst.program, &SolveOptions::default()).unwrap();
        let b = sdp::solve(&inst.program, &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(inst.program.dump(), inst.program.clone().dump());
    }
}

#[test]
fn block_order_does_not_matter() {
    for seed in 300..310u64 {
        let inst = instance(seed);
        let mut permuted: ConicProgram = inst.program.clone();
        permuted.blocks.reverse();
        let a = sdp::solve(&inst.program, &SolveOptions::default()).unwrap();
        let b = sdp::solve(&permuted, &SolveOptions::default()).unwrap();
        assert_eq!(a.status, SolveStatus::Optimal);
        assert_eq!(b.status, SolveStatus::Optimal);
        assert!((a.objective - b.objective).abs() <= 1e-9 * (1.0 + a.objective.abs()), "seed {seed}");
    }
}

#[test]
fn example_lowering_structure() {
    let plant = fixtures::example_plant();
    let structure = FilterStructure::dynamic(&plant.dims().unwrap());
    let problem = build_problem(&plant, &structure, &BuildOptions::default()).unwrap();
    let program = lower(&problem);
    let blocks: Vec<(&str, usize)> = program.blocks.iter().map(|b| (b.name.as_str(), b.side)).collect();
    assert_eq!(
        blocks,
        vec![
            (names::DISSIPATION, 13),
            (names::PEAK, 10),
            (names::FEEDTHROUGH, 3),
            (names::INVERTIBILITY, 4),
            ("P1/psd", 1),
            ("P2/psd", 1),
        ]
    );
    // EᵀP − PᵀE is skew: only the two off-diagonal entries carry terms, for each factor.
    assert_eq!(program.equalities.len(), 4);
    assert_eq!(program.num_vars, problem.num_scalars());
    for b in &program.blocks {
        assert_eq!(b.constant.len(), svec_len(b.side));
        assert!(b.coeffs.windows(2).all(|w| w[0].0 < w[1].0));
    }
    let eperp = linalg::orthogonal_complement(&plant.e, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(eperp.nrows(), 1);
}

/// min tr X subject to X − A ≻ 0 with a positive definite A.
fn shifted_trace(a: &Mat) -> LmiProblem {
    let n = a.nrows();
    let mut p = LmiProblem::new();
    let x = p.add_var("X", VarKind::Sym { n });
    let e = MatExpr::var(&x).add_const(&-a).unwrap();
    p.add_constraint("above", e, Sense::PosDef, 1e-6, ConstraintRole::Main, vec![]).unwrap();
    p.objective.terms = (0..n).map(|i| (x.index_of(i, i), 1.0)).collect();
    p
}

#[test]
fn certification_tracks_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random_spd(&mut rng, 3, 0.2);
    let problem = shifted_trace(&a);
    let sol = sdp::solve(&lower(&problem), &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - (a.trace() + 3e-6)).abs() <= 1e-6, "{}", sol.objective);
    let report = certify(&problem, &sol).unwrap();
    assert!(report.all_passed(), "{report:?}");
    assert!(report.radius >= 1e-6 - 1e-9);

    let x = problem.var("X").unwrap().clone();
    let mut pushed = sol.clone();
    for i in 0..3 {
        pushed.x[x.index_of(i, i)] -= 1e-3;
    }
    let report = certify(&problem, &pushed).unwrap();
    assert!(!report.all_passed());
    assert!(report.radius < 0.0);

    let mut failed = sol;
    failed.status = SolveStatus::Infeasible;
    assert!(certify(&problem, &failed).is_err());
}

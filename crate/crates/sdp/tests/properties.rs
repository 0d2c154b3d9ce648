use coherence_sdp::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn matrix(n: usize, vals: &[f64]) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(vals[2 * (i * n + j)], vals[2 * (i * n + j) + 1])
    });
    &g * g.adjoint()
}

/// min <C, X> s.t. Tr X = 1, X >= 0; optimum is lambda_min(C).
fn min_eig_problem(cm: &DMatrix<Complex64>) -> SdpProblem {
    let n = cm.nrows();
    let mut p = SdpProblem::new(Sense::Minimize);
    let x = p.add_block(BlockKind::Hermitian(n));
    p.add_objective(x, Coef::from_hermitian(cm));
    p.add_eq(vec![(x, Coef::identity(n))], 1.0);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weak_duality_and_min_eigenvalue(n in 1usize..5, vals in prop::collection::vec(-1.0f64..1.0, 50), shift in -2.0f64..2.0) {
        let mut cm = matrix(n, &vals);
        for i in 0..n { cm[(i, i)] -= Complex64::new(shift, 0.0); }
        let p = min_eig_problem(&cm);
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        prop_assert!(sol.dual_value <= sol.primal_value + 1e-7);
        let lmin = nalgebra::SymmetricEigen::new(cm.clone()).eigenvalues.min();
        prop_assert!((sol.primal_value - lmin).abs() < 1e-6, "{} vs {}", sol.primal_value, lmin);
        prop_assert!(verify_solution(&p, &sol, 1e-6));
    }

    #[test]
    fn json_dump_roundtrip_solves_identically(n in 1usize..4, vals in prop::collection::vec(-1.0f64..1.0, 32)) {
        let p = min_eig_problem(&matrix(n, &vals));
        let q = SdpProblem::from_json(&p.to_json()).unwrap();
        prop_assert_eq!(&p, &q);
        let a = solve(&p, &SolveOptions::default()).unwrap();
        let b = solve(&q, &SolveOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn from_json_never_panics(s in ".{0,200}") {
        let _ = SdpProblem::from_json(&s);
    }
}

mod common;

use hyperspread::general_model::FamilySpec;
use hyperspread::spectral;
use hyperspread::system::{self, finite_difference_jacobian, fixed_point_solve, newton, Dynamics, FixedPointOptions};
use hyperspread::{ScenarioModel, SpreadingModel, SquareMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn dense(m: &SquareMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
}

fn nonnegative() -> impl Strategy<Value = SquareMatrix> {
    (1usize..=12).prop_flat_map(|n| {
        proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..5.0], n * n)
            .prop_map(move |v| SquareMatrix::from_fn(n, |i, j| v[i * n + j]))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn spectral_radius_matches_dense(m in nonnegative()) {
        let oracle = common::dense_radius(&m);
        let rho = spectral::spectral_radius(&m).unwrap();
        prop_assert!((rho - oracle).abs() <= 1e-8 * oracle.max(1.0), "{rho} vs {oracle}");
    }

    #[test]
    fn metzler_abscissa_matches_dense(m in nonnegative(), shift in 0.0f64..10.0) {
        let n = m.dim();
        let m = SquareMatrix::from_fn(n, |i, j| m[(i, j)] + if j == (i + 1) % n { 0.5 } else { 0.0 });
        let metzler = m.shift_diagonal(-shift);
        let oracle = dense(&metzler).complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let s = spectral::spectral_abscissa(&metzler).unwrap();
        prop_assert!((s - oracle).abs() <= 1e-8 * oracle.abs().max(1.0), "{s} vs {oracle}");
    }

    #[test]
    fn jacobians_match_differences(seed in 0u64..10_000, log in any::<bool>()) {
        let mut sc = common::scenario(seed, 2);
        if log {
            for v in &mut sc.viruses {
                v.pairwise = FamilySpec::Log { slope: 0.2 };
                v.higher = FamilySpec::Log { slope: 0.2 };
            }
        }
        let single = sc.model(0).unwrap();
        let z = common::interior_point(&single.domain(), seed);
        prop_assert!(common::rel_diff(&single.jacobian(&z), &finite_difference_jacobian(&single, &z, 1e-6)) < 1e-5);
        let bi = sc.bi_model().unwrap();
        let zb = common::interior_point(&bi.domain(), seed ^ 1);
        prop_assert!(common::rel_diff(&bi.jacobian(&zb), &finite_difference_jacobian(&bi, &zb, 1e-6)) < 1e-5);
    }

    #[test]
    fn fixed_point_agrees_with_newton(seed in 0u64..100_000) {
        let sc = common::scenario(seed, 1);
        let base = sc.model(0).unwrap();
        // Pairwise layer at R0 = 2.
        let r0 = system::reproduction_number(&base).unwrap();
        let m: ScenarioModel = base.scaled_parts(2.0 / r0, 1.0).unwrap();
        let fp = fixed_point_solve(&m, &m.upper_bounds(), FixedPointOptions::default()).unwrap();
        prop_assert!(fp.converged && fp.residual < 1e-9);
        let start: Vec<f64> = fp.state.iter().map(|v| v * 0.9).collect();
        let nt = newton(&m, &start).unwrap();
        prop_assert!(nt.converged && nt.residual < 1e-9);
        let gap = fp.state.iter().zip(&nt.state).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-8, "fixed point and Newton differ by {gap}");
    }
}

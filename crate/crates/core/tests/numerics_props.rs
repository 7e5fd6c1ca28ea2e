mod common;

use proptest::prelude::*;

use common::{random_closed_loop, TestRng};
use wms_core::model::{compute_kprime, is_controllable, is_observable, synthesize_gains, DesignWeights, PlantModel};
use wms_core::numerics::{
    cholesky, lyapunov_residual, solve_discrete_lyapunov, spectral_radius, Matrix, SpdMatrix, SCHUR_MARGIN,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cholesky_reconstructs_psd(seed in any::<u64>(), n in 1usize..=12, rank_gap in 0usize..3) {
        let mut rng = TestRng::new(seed);
        let m = rng.psd(n, n.saturating_sub(rank_gap).max(1));
        let l = cholesky(&m).unwrap();
        let back = l.matmul(&l.transpose());
        prop_assert!((&back - &m).frobenius_norm() <= 1e-10 * m.frobenius_norm());
        for i in 0..n {
            for j in i + 1..n {
                prop_assert_eq!(l.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn lyapunov_solution_satisfies_equation(seed in any::<u64>(), n in 1usize..=8, radius in 0.05f64..0.98) {
        let mut rng = TestRng::new(seed);
        let a = rng.matrix_with_radius(n, radius);
        let q = SpdMatrix::new(rng.psd(n, n)).unwrap();
        let s = solve_discrete_lyapunov(&a, &q).unwrap();
        prop_assert!(lyapunov_residual(&a, q.matrix(), s.matrix()) <= 1e-10);
        prop_assert!(s.is_positive_definite());
    }

    #[test]
    fn spectral_radius_matches_gelfand(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = TestRng::new(seed);
        let a = rng.matrix(n, n);
        let rho = spectral_radius(&a).unwrap();
        // scaling keeps A^64 representable; ρ(cA) = cρ(A)
        let c = 1.0 / rho.max(1e-3);
        let power = a.scale(c).pow(64);
        let est = power.frobenius_norm().powf(1.0 / 64.0) / c;
        prop_assert!((est - rho).abs() <= 0.1 * rho.max(1e-12), "gelfand {} vs {}", est, rho);
    }

    #[test]
    fn synthesized_gains_are_stabilizing(seed in any::<u64>(), index in 0usize..100) {
        let mut rng = TestRng::new(seed);
        let model = random_closed_loop(&mut rng, index);
        prop_assert!(spectral_radius(model.a_closed()).unwrap() < 1.0 - SCHUR_MARGIN);
        prop_assert!(spectral_radius(model.a_observer()).unwrap() < 1.0 - SCHUR_MARGIN);
    }

    #[test]
    fn controllable_observable_has_lag(seed in any::<u64>(), p in 1usize..=6) {
        let mut rng = TestRng::new(seed);
        let q = 1 + (seed as usize) % p.min(3);
        let a = rng.matrix_with_radius(p, 1.2);
        let b = rng.matrix(p, q);
        let c = rng.matrix(1, p);
        prop_assume!(is_controllable(&a, &b) && is_observable(&a, &c));
        let plant = PlantModel::new(
            a.clone(),
            b.clone(),
            c.clone(),
            SpdMatrix::scaled_identity(p, 1.0).unwrap(),
            SpdMatrix::scaled_identity(1, 1.0).unwrap(),
        )
        .unwrap();
        let (k, _) = synthesize_gains(&plant, &DesignWeights::default()).unwrap();
        prop_assert!(compute_kprime(&a, &b, &c, &k).is_some());
    }
}

#[test]
fn lyapunov_matches_series_oracle() {
    // Σ = Σ_k A^k Q A^kᵀ summed directly
    let mut rng = TestRng::new(3);
    for n in 1..=5 {
        let a = rng.matrix_with_radius(n, 0.6);
        let q = rng.psd(n, n);
        let mut want = Matrix::zeros(n, n);
        let mut ak = Matrix::identity(n);
        for _ in 0..200 {
            want = &want + &ak.matmul(&q).matmul(&ak.transpose());
            ak = ak.matmul(&a);
        }
        let got = solve_discrete_lyapunov(&a, &SpdMatrix::new(q).unwrap()).unwrap();
        assert!((got.matrix() - &want).frobenius_norm() <= 1e-10 * want.frobenius_norm());
    }
}

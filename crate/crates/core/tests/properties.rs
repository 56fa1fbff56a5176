use lohe_core::corr::{correlations, z12_closed_form, z12_rk4};
use lohe_core::fit::fit_rate;
use lohe_core::presets::random;
use lohe_core::sl::{evolve, EvolveOptions};
use lohe_core::snapshot::Snapshot;
use lohe_core::{inner_product, EnsembleState, Potential, SpatialGrid, C64};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fit_recovers_exponentials(rate in -2.0f64..5.0, amp in 0.1f64..10.0) {
        let times: Vec<f64> = (0..40).map(|i| 0.25 * i as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| amp * (-rate * t).exp()).collect();
        let f = fit_rate(&times, &values, (0.0, 10.0)).unwrap();
        prop_assert!((f.rate - rate).abs() < 1e-9);
        prop_assert!((f.amplitude - amp).abs() < 1e-8 * amp);
    }

    #[test]
    fn correlation_matrix_is_hermitian_and_bounded(n in 2usize..6, seed in any::<u64>(), smooth in 0.2f64..1.5) {
        let g = SpatialGrid::line(64, 10.0).unwrap();
        let st = EnsembleState::new(random(&g, n, seed, smooth).unwrap(), 1.0, Potential::zero(&g)).unwrap();
        let c = correlations(&st);
        prop_assert!(c.hermitian_defect() < 1e-14);
        prop_assert!(c.max_modulus() <= 1.0 + 1e-14);
        prop_assert!(c.diagonal_defect() < 1e-13);
        let z = inner_product(&st.psi()[0], &st.psi()[1]).unwrap();
        prop_assert!((c.get(0, 1) - z).norm() < 1e-15);
    }

    #[test]
    fn riccati_closed_form_matches_rk4(re in -0.95f64..0.95, im in -0.3f64..0.3, k in 0.1f64..3.0) {
        let z0 = C64::new(re, im);
        prop_assume!(z0.norm() <= 1.0);
        for (t, z) in z12_rk4(z0, k, 3.0, 1e-3) {
            prop_assert!((z - z12_closed_form(z0, k, t).unwrap()).norm() < 1e-9);
        }
    }

    #[test]
    fn spatial_snapshot_roundtrip(seed in any::<u64>()) {
        let g = SpatialGrid::new(&[16, 8], &[3.0, 2.0]).unwrap();
        let f = &random(&g, 1, seed, 0.3).unwrap()[0];
        let mut buf = Vec::new();
        Snapshot::spatial(&g, f.values()).unwrap().write_to(&mut buf).unwrap();
        let back = Snapshot::read_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.spatial_grid().unwrap(), g);
        prop_assert_eq!(back.complex_values().unwrap(), f.values());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn modulus_of_correlations_stays_bounded_in_time(n in 2usize..5, seed in any::<u64>(), k in 0.0f64..4.0) {
        let g = SpatialGrid::line(64, 12.0).unwrap();
        let v = Potential::harmonic(&g, 0.5, &[6.0]).unwrap();
        let st = EnsembleState::new(random(&g, n, seed, 0.6).unwrap(), k, v).unwrap();
        let opts = EvolveOptions { sample_every: 5, ..EvolveOptions::default() };
        let tr = evolve(&st, 1.0, 1e-2, &opts, &mut []).unwrap();
        for c in &tr.correlations {
            prop_assert!(c.max_modulus() <= 1.0 + 1e-12);
            prop_assert!(c.hermitian_defect() < 1e-13);
        }
        prop_assert!(tr.max_norm_drift() < 1e-10);
    }
}

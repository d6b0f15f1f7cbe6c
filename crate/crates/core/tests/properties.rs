use num_complex::Complex64;
use proptest::prelude::*;
use qmem_core::fidelity::{compensated_fidelity_at, fidelity_analytic, fidelity_lower_bound, series_coefficients};
use qmem_core::reliability::reliability_repeater;
use qmem_core::{photon_stats, PhaseModel, StoredState};

fn state_strategy() -> impl Strategy<Value = StoredState> {
    prop::collection::vec((0.0f64..1.0, -3.2f64..3.2), 2..40).prop_filter_map("null state", |pairs| {
        let amps: Vec<Complex64> = pairs.iter().map(|&(r, t)| Complex64::from_polar(r, t)).collect();
        if amps.iter().map(|a| a.norm_sqr()).sum::<f64>() < 1e-6 {
            return None;
        }
        StoredState::from_amplitudes(amps).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn global_phase_does_not_matter(state in state_strategy(), phi in -3.0f64..3.0, x in 0.0f64..2.0) {
        let rotated: Vec<Complex64> = state.amplitudes().iter().map(|a| a * Complex64::from_polar(1.0, phi)).collect();
        let rotated = StoredState::from_amplitudes(rotated).unwrap();
        let a = compensated_fidelity_at(&state, x);
        let b = compensated_fidelity_at(&rotated, x);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn shifting_photon_numbers_keeps_fidelity(state in state_strategy(), shift in 1usize..10, x in 0.0f64..2.0) {
        let mut amps = vec![Complex64::new(0.0, 0.0); shift];
        amps.extend_from_slice(state.amplitudes());
        let shifted = StoredState::from_amplitudes(amps).unwrap();
        let a = compensated_fidelity_at(&state, x);
        let b = compensated_fidelity_at(&shifted, x);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn fidelity_dominates_exponential_bound(state in state_strategy(), x in 1e-4f64..10.0) {
        let f = compensated_fidelity_at(&state, x);
        prop_assert!(f >= fidelity_lower_bound(x).unwrap().value - 1e-12);
    }

    #[test]
    fn fidelity_decreases_with_dephasing(state in state_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(compensated_fidelity_at(&state, hi) <= compensated_fidelity_at(&state, lo) + 1e-12);
    }

    #[test]
    fn phase_sign_is_irrelevant(state in state_strategy(), gamma0 in -5.0f64..5.0, gamma in 0.0f64..50.0) {
        let plus = fidelity_analytic(&state, &PhaseModel::from_variance(gamma0, gamma, 100), false).value;
        let minus = fidelity_analytic(&state, &PhaseModel::from_variance(-gamma0, gamma, 100), false).value;
        prop_assert!((plus - minus).abs() < 1e-12);
    }

    #[test]
    fn leading_series_coefficients_are_one(state in state_strategy()) {
        prop_assume!(photon_stats(&state, 2).variance > 1e-6);
        let c = series_coefficients(&state, 3).unwrap();
        prop_assert!((c[0] - 1.0).abs() < 1e-12);
        prop_assert!((c[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeater_is_a_power(state in state_strategy(), gamma in 0.0f64..20.0, k in 1usize..7) {
        let model = PhaseModel::from_variance(0.7, gamma, 100);
        let f = fidelity_analytic(&state, &model, false).value;
        let r = reliability_repeater(&state, &model, k, false).unwrap();
        prop_assert!((r - f.powi(k as i32)).abs() < 1e-10);
    }
}

//! Brute-force reference implementations checked against the library.

use num_complex::Complex64;
use qmem_core::berry::{berry_phase_exact, berry_phase_linear};
use qmem_core::fidelity::{fidelity_analytic, fidelity_series};
use qmem_core::reliability::{reliability_repeater, reliability_sync};
use qmem_core::{
    build_phase_model, make_coherent, sample_realization, PhaseModel, Protocol, PulseConvention, PulseProfile,
    StoredState, SystemParams,
};

fn simpson_unit(values: &[f64]) -> f64 {
    let n = values.len() - 1;
    assert!(n % 2 == 0);
    let h = 1.0 / n as f64;
    let mut acc = values[0] + values[n];
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

fn protocol(tau_s: f64) -> Protocol {
    let profile = PulseProfile::gaussian(1000.0, 1.0, 2001).unwrap();
    Protocol::new(tau_s, profile, PulseConvention::Definition).unwrap()
}

#[test]
fn exact_phase_matches_term_by_term_sum() {
    let params = SystemParams {
        n_atoms: 50,
        delta: 0.7,
        delta_spread: 0.2,
        g: 1.3,
        g_spread: 0.1,
    };
    let protocol = protocol(40.0);
    for seed in [1u64, 7, 99] {
        let real = sample_realization(&params, seed).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for (d, g) in real.detunings.iter().zip(&real.couplings) {
            num += g * g * d;
            den += g * g;
        }
        let r_sq = den / (50.0 * params.g * params.g);
        let sin_sq: Vec<f64> = protocol
            .profile
            .samples()
            .iter()
            .map(|w| {
                let theta = (r_sq.sqrt() / w).atan();
                theta.sin().powi(2)
            })
            .collect();
        let window = protocol.tau_d() * simpson_unit(&sin_sq);
        for n in [0u64, 1, 5] {
            let direct = -(n as f64) * (num / den) * (protocol.tau_s + window);
            let got = berry_phase_exact(&real.stats, &params, &protocol, n);
            assert!(
                (got - direct).abs() <= 1e-12 * direct.abs().max(1.0),
                "seed {seed} n {n}: {got} vs {direct}"
            );
        }
    }
}

#[test]
fn linear_phase_is_linear_in_photon_number() {
    let params = SystemParams {
        n_atoms: 200,
        delta: 1.0,
        delta_spread: 0.01,
        g: 1.0,
        g_spread: 0.01,
    };
    let protocol = protocol(10.0);
    let model = build_phase_model(&params, &protocol).unwrap();
    let real = sample_realization(&params, 3).unwrap();
    let one = berry_phase_linear(&real.stats, &model, 3).unwrap();
    let two = berry_phase_linear(&real.stats, &model, 6).unwrap();
    assert_eq!(two, 2.0 * one);
}

fn direct_double_sum(state: &StoredState, gamma0: f64, x: f64, compensated: bool) -> f64 {
    let p = state.probabilities();
    let mut acc = 0.0;
    for (n, pn) in p.iter().enumerate() {
        for (m, pm) in p.iter().enumerate() {
            let d = n as f64 - m as f64;
            let osc = if compensated { 1.0 } else { (d * gamma0).cos() };
            acc += pn * pm * osc * (-d * d * x / 2.0).exp();
        }
    }
    acc
}

#[test]
fn analytic_fidelity_matches_double_sum() {
    let state = make_coherent(Complex64::new(2.0, 0.0)).unwrap();
    let model = PhaseModel::from_variance(0.3, 10.0, 1000);
    let direct = direct_double_sum(&state, 0.3, 0.01, true);
    let got = fidelity_analytic(&state, &model, true).value;
    assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");

    let series = fidelity_series(&state, 0.01 * 4.0, 6).unwrap().value;
    assert!((series - got).abs() < 1e-4, "{series} vs {got}");

    let uncomp = fidelity_analytic(&state, &model, false).value;
    let direct_uncomp = direct_double_sum(&state, 0.3, 0.01, false);
    assert!((uncomp - direct_uncomp).abs() < 1e-12);
}

fn truncated_coherent(alpha: f64, keep: usize) -> StoredState {
    let p = make_coherent(Complex64::new(alpha, 0.0)).unwrap().probabilities();
    StoredState::from_probabilities(&p[..keep]).unwrap()
}

#[test]
fn sync_reliability_matches_nested_triple_sum() {
    let state = truncated_coherent(1.0, 12);
    let p = state.probabilities();
    let x = 0.02;
    let model = PhaseModel::from_variance(0.0, x * 1000.0, 1000);
    let len = p.len();
    let mut acc = 0.0;
    for a in 0..len {
        for b in 0..len {
            for c in 0..len {
                let w = p[a] * p[b] * p[c];
                for a2 in 0..len {
                    for b2 in 0..len {
                        for c2 in 0..len {
                            let s = (a + b + c) as f64 - (a2 + b2 + c2) as f64;
                            acc += w * p[a2] * p[b2] * p[c2] * (-s * s * x / 2.0).exp();
                        }
                    }
                }
            }
        }
    }
    let states = vec![state.clone(), state.clone(), state];
    let got = reliability_sync(&states, &model, true).unwrap();
    assert!((got - acc).abs() < 1e-10, "{got} vs {acc}");
}

#[test]
fn repeater_matches_independent_cycles() {
    let state = truncated_coherent(1.5, 14);
    let p = state.probabilities();
    let x = 0.05;
    let gamma0 = 0.4;
    let model = PhaseModel::from_variance(gamma0, x * 100.0, 100);
    let mut acc = 0.0;
    for (n, pn) in p.iter().enumerate() {
        for (n2, pn2) in p.iter().enumerate() {
            for (m, pm) in p.iter().enumerate() {
                for (m2, pm2) in p.iter().enumerate() {
                    let d1 = n as f64 - n2 as f64;
                    let d2 = m as f64 - m2 as f64;
                    acc += pn * pn2 * pm * pm2
                        * (d1 * gamma0).cos()
                        * (d2 * gamma0).cos()
                        * (-(d1 * d1 + d2 * d2) * x / 2.0).exp();
                }
            }
        }
    }
    let got = reliability_repeater(&state, &model, 2, false).unwrap();
    assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
}

//! Single-cycle storage fidelity.
//!
//! Disorder-averaged fidelity of a state with photon-number law `p_n` is
//!
//! ```text
//! F = sum_{n,n'} p_n p_n' cos((n - n') gamma0) exp(-(n - n')^2 Gamma / (2N))
//! ```
//!
//! Only differences `d = n - n'` enter, so every evaluation here goes through the
//! autocorrelation `A(d) = sum_n p_n p_{n+d}`. Writing `Z = (n - <n>)/<dn^2>^(1/2)`, the
//! compensated form is `E[exp(-x (Z - Z')^2 / 2)]` with `x = Gamma <dn^2> / N`, whose
//! Taylor coefficients are the moments `c_m = E[((Z - Z')^2 / 2)^m]`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::berry::{
    berry_phase_exact_unit, berry_phase_linear_unit, build_phase_model, PhaseModel, Protocol,
};
use crate::disorder::{realization_seed, sample_stats, SystemParams};
use crate::error::{Error, Result};
use crate::fock::{photon_stats, StoredState};
use crate::pulse::PulseConvention;

pub const MIN_MC_SAMPLES: u64 = 1000;
pub const MAX_SERIES_ORDER: usize = 8;
/// Largest ratio of the first omitted series term to the partial sum.
pub const SERIES_VALIDITY_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityMethod {
    Analytic,
    MonteCarloExactPhase,
    MonteCarloLinearPhase,
    Series,
    LowerBound,
    CoherentClosedForm,
}

impl FidelityMethod {
    pub fn label(&self) -> &'static str {
        match self {
            FidelityMethod::Analytic => "analytic",
            FidelityMethod::MonteCarloExactPhase => "monte_carlo_exact_phase",
            FidelityMethod::MonteCarloLinearPhase => "monte_carlo_linear_phase",
            FidelityMethod::Series => "series",
            FidelityMethod::LowerBound => "lower_bound",
            FidelityMethod::CoherentClosedForm => "coherent_closed_form",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityResult {
    pub value: f64,
    pub method: FidelityMethod,
    /// Standard error of the mean (Monte Carlo only).
    pub std_error: f64,
    /// Realizations drawn (Monte Carlo only).
    pub samples: u64,
    /// Magnitude of the first omitted term (series only).
    pub truncation_error: f64,
}

impl FidelityResult {
    fn exact(value: f64, method: FidelityMethod) -> Self {
        FidelityResult {
            value,
            method,
            std_error: 0.0,
            samples: 0,
            truncation_error: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    Exact,
    Linear,
}

/// `A(d) = sum_n p_n p_{n+d}` for `d = 0..len`.
pub fn autocorrelation(probs: &[f64]) -> Vec<f64> {
    let len = probs.len();
    (0..len)
        .map(|d| (0..len - d).map(|n| probs[n] * probs[n + d]).sum())
        .collect()
}

/// `sum_d A(|d|) cos(d gamma0) exp(-d^2 g / 2)` over signed `d`, with `g = Gamma/N`.
pub(crate) fn dephased_sum(autocorr: &[f64], gamma0: f64, gamma_over_n: f64, compensated: bool) -> f64 {
    let mut total = autocorr[0];
    for (d, a) in autocorr.iter().enumerate().skip(1) {
        if *a == 0.0 {
            continue;
        }
        let d = d as f64;
        let damp = (-0.5 * d * d * gamma_over_n).exp();
        let osc = if compensated { 1.0 } else { (d * gamma0).cos() };
        total += 2.0 * a * osc * damp;
    }
    total
}

pub fn fidelity_analytic(state: &StoredState, model: &PhaseModel, compensated: bool) -> FidelityResult {
    let a = autocorrelation(&state.probabilities());
    let value = dephased_sum(&a, model.gamma0, model.gamma_over_n(), compensated);
    FidelityResult::exact(value, FidelityMethod::Analytic)
}

/// Compensated fidelity as a function of `x = Gamma <dn^2> / N`.
pub fn compensated_fidelity_at(state: &StoredState, x: f64) -> f64 {
    let v = photon_stats(state, 2).variance;
    if v == 0.0 {
        return 1.0;
    }
    dephased_sum(&autocorrelation(&state.probabilities()), 0.0, x / v, true)
}

/// Monte Carlo estimate of `E |<phi_in|phi_out>|^2` over disorder realizations.
///
/// Realization `i` is seeded with `realization_seed(seed, i)`, so the estimate does not
/// depend on the number of worker threads.
pub fn fidelity_monte_carlo(
    state: &StoredState,
    params: &SystemParams,
    protocol: &Protocol,
    phase_mode: PhaseMode,
    samples: u64,
    seed: u64,
    compensated: bool,
) -> Result<FidelityResult> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::invalid(
            "samples",
            format!("need at least {MIN_MC_SAMPLES} realizations"),
        ));
    }
    let model = build_phase_model(params, protocol)?;
    let method = match phase_mode {
        PhaseMode::Linear => {
            if params.delta == 0.0 {
                return Err(Error::LinearizationUnavailable);
            }
            FidelityMethod::MonteCarloLinearPhase
        }
        PhaseMode::Exact => {
            if protocol.factors.convention == PulseConvention::PaperConstants {
                return Err(Error::ConventionMismatch);
            }
            FidelityMethod::MonteCarloExactPhase
        }
    };
    // surface parameter errors before the parallel loop
    sample_stats(params, realization_seed(seed, 0))?;
    let probs = state.probabilities();
    let offset = if compensated { model.gamma0 } else { 0.0 };
    let overlaps: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let stats = sample_stats(params, realization_seed(seed, i))?;
            let unit = match phase_mode {
                PhaseMode::Exact => berry_phase_exact_unit(&stats, params, protocol),
                PhaseMode::Linear => berry_phase_linear_unit(&stats, &model)?,
            };
            Ok(overlap_sqr(&probs, unit - offset))
        })
        .collect::<Result<_>>()?;
    let (mean, std_error) = mean_and_std_error(&overlaps);
    Ok(FidelityResult {
        value: mean,
        method,
        std_error,
        samples,
        truncation_error: 0.0,
    })
}

/// `|sum_n p_n exp(i n phase)|^2`.
fn overlap_sqr(probs: &[f64], phase: f64) -> f64 {
    probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(n, p)| Complex64::from_polar(*p, n as f64 * phase))
        .sum::<Complex64>()
        .norm_sqr()
}

/// Mean and standard error, shifted by the first value so constant input gives zero spread.
pub(crate) fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let x0 = values[0];
    let (s1, s2) = values.iter().fold((0.0, 0.0), |(s1, s2), x| {
        let d = x - x0;
        (s1 + d, s2 + d * d)
    });
    let mean = x0 + s1 / m;
    let var = ((s2 - s1 * s1 / m) / (m - 1.0)).max(0.0);
    (mean, (var / m).sqrt())
}

/// `c_m = E[((Z - Z')^2 / 2)^m]` for `m = 0..=max_m`; only `c_0` for point masses.
pub fn series_coefficients(state: &StoredState, max_m: usize) -> Result<Vec<f64>> {
    if max_m > MAX_SERIES_ORDER {
        return Err(Error::invalid(
            "max_m",
            format!("series order is capped at {MAX_SERIES_ORDER}"),
        ));
    }
    Ok(coefficients(state, max_m))
}

fn coefficients(state: &StoredState, max_m: usize) -> Vec<f64> {
    let probs = state.probabilities();
    let v = photon_stats(state, 2).variance;
    let a = autocorrelation(&probs);
    let c0 = a[0] + 2.0 * a[1..].iter().sum::<f64>();
    if v == 0.0 {
        return vec![c0];
    }
    let mut out = vec![c0];
    for m in 1..=max_m {
        let cm: f64 = a
            .iter()
            .enumerate()
            .skip(1)
            .map(|(d, ad)| 2.0 * ad * ((d * d) as f64 / (2.0 * v)).powi(m as i32))
            .sum();
        out.push(cm);
    }
    out
}

/// Truncated series `sum_{m <= max_m} c_m (-x)^m / m!`.
pub fn fidelity_series(state: &StoredState, x: f64, max_m: usize) -> Result<FidelityResult> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::invalid("x", "must be finite and >= 0"));
    }
    if max_m > MAX_SERIES_ORDER {
        return Err(Error::invalid(
            "max_m",
            format!("series order is capped at {MAX_SERIES_ORDER}"),
        ));
    }
    let c = coefficients(state, max_m + 1);
    if c.len() == 1 {
        return Ok(FidelityResult::exact(c[0], FidelityMethod::Series));
    }
    let mut term_scale = 1.0; // (-x)^m / m!
    let mut partial = 0.0;
    for (m, cm) in c.iter().take(max_m + 1).enumerate() {
        if m > 0 {
            term_scale *= -x / m as f64;
        }
        partial += cm * term_scale;
    }
    let omitted = (c[max_m + 1] * term_scale * x / (max_m + 1) as f64).abs();
    if omitted > SERIES_VALIDITY_RATIO * partial.abs() {
        return Err(Error::SeriesDivergence {
            x,
            partial,
            omitted,
        });
    }
    Ok(FidelityResult {
        value: partial,
        method: FidelityMethod::Series,
        std_error: 0.0,
        samples: 0,
        truncation_error: omitted,
    })
}

/// `exp(-x)`, a floor on the compensated fidelity of every state.
pub fn fidelity_lower_bound(x: f64) -> Result<FidelityResult> {
    if !(x >= 0.0) {
        return Err(Error::invalid("x", "must be >= 0"));
    }
    Ok(FidelityResult::exact((-x).exp(), FidelityMethod::LowerBound))
}

/// `exp(-2|alpha|^2 (1 - cos(phase_error)))` for a coherent state rotated by `phase_error`.
pub fn fidelity_coherent_closed(alpha: Complex64, phase_error: f64) -> FidelityResult {
    let value = (-2.0 * alpha.norm_sqr() * (1.0 - phase_error.cos())).exp();
    FidelityResult::exact(value, FidelityMethod::CoherentClosedForm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailExponent {
    pub slope: f64,
    /// Fidelity is constant over the range (point-mass states).
    pub degenerate: bool,
}

/// Least-squares slope of `ln F` against `ln x` on `points` log-spaced values in `[x_lo, x_hi]`.
pub fn tail_exponent(state: &StoredState, x_lo: f64, x_hi: f64, points: usize) -> Result<TailExponent> {
    if !(1.0..=1e3).contains(&x_lo) || !(1.0..=1e3).contains(&x_hi) || x_hi <= x_lo {
        return Err(Error::invalid("x_range", "need 1 <= x_lo < x_hi <= 1e3"));
    }
    if points < 10 {
        return Err(Error::invalid("points", "need at least 10 points"));
    }
    let v = photon_stats(state, 2).variance;
    if v == 0.0 {
        return Ok(TailExponent {
            slope: 0.0,
            degenerate: true,
        });
    }
    let a = autocorrelation(&state.probabilities());
    let step = (x_hi / x_lo).ln() / (points - 1) as f64;
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    for i in 0..points {
        let ln_x = x_lo.ln() + step * i as f64;
        let x = ln_x.exp();
        let f = dephased_sum(&a, 0.0, x / v, true);
        if !(f > f64::MIN_POSITIVE) {
            return Err(Error::Underflow { x });
        }
        xs.push(ln_x);
        ys.push(f.ln());
    }
    Ok(TailExponent {
        slope: least_squares_slope(&xs, &ys),
        degenerate: false,
    })
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `Gamma / N` at which the compensated fidelity of `state` drops to `level`.
pub fn contour_gamma_over_n(state: &StoredState, level: f64) -> Result<f64> {
    let a = autocorrelation(&state.probabilities());
    let floor = a[0];
    if !(level > floor && level < 1.0) {
        return Err(Error::invalid(
            "level",
            format!("fidelity level must lie in ({floor}, 1) for this state"),
        ));
    }
    let f = |g: f64| dephased_sum(&a, 0.0, g, true);
    let (mut lo, mut hi) = (0.0, 1e-6);
    while f(hi) > level {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_cat, make_coherent, make_fock, make_uniform};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn fock_states_are_immune() {
        let model = PhaseModel::from_variance(1.3, 50.0, 10);
        for n in [0, 1, 9] {
            let f = fidelity_analytic(&make_fock(n), &model, false);
            assert_eq!(f.value, 1.0);
        }
    }

    #[test]
    fn compensated_without_variance_is_perfect() {
        let model = PhaseModel::from_variance(0.7, 0.0, 10);
        let f = fidelity_analytic(&make_coherent(c(2.0)).unwrap(), &model, true);
        assert!((f.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_equals_series_for_coherent_state() {
        let state = make_coherent(c(2.0)).unwrap();
        let model = PhaseModel::from_variance(0.0, 0.01 * 100.0, 100);
        let f = fidelity_analytic(&state, &model, true).value;
        let s = fidelity_series(&state, 0.01 * 4.0, 6).unwrap().value;
        assert!((f - s).abs() < 1e-4);
    }

    #[test]
    fn low_order_coefficients() {
        for state in [
            make_coherent(c(1.5)).unwrap(),
            make_cat(c(3.0), 1.0, 0.4).unwrap(),
            make_uniform(6),
        ] {
            let cs = series_coefficients(&state, 3).unwrap();
            assert!((cs[0] - 1.0).abs() < 1e-12);
            assert!((cs[1] - 1.0).abs() < 1e-12);
        }
        assert_eq!(series_coefficients(&make_fock(3), 4).unwrap().len(), 1);
        assert!(series_coefficients(&make_uniform(3), 9).is_err());
    }

    #[test]
    fn coherent_c2_near_gaussian_limit() {
        let cs = series_coefficients(&make_coherent(c(10.0)).unwrap(), 2).unwrap();
        assert!((cs[2] - 3.0).abs() / 3.0 < 0.05, "{}", cs[2]);
    }

    #[test]
    fn series_refuses_divergent_evaluation() {
        let state = make_uniform(10);
        assert!(matches!(
            fidelity_series(&state, 5.0, 3),
            Err(Error::SeriesDivergence { .. })
        ));
        assert_eq!(fidelity_series(&state, 0.0, 3).unwrap().value, 1.0);
    }

    #[test]
    fn lower_bound_values() {
        assert_eq!(fidelity_lower_bound(0.0).unwrap().value, 1.0);
        assert!((fidelity_lower_bound(1.0).unwrap().value - 0.36787944117144233).abs() < 1e-16);
        assert!(fidelity_lower_bound(-1.0).is_err());
    }

    #[test]
    fn coherent_closed_form_values() {
        assert_eq!(fidelity_coherent_closed(c(1.0), 0.0).value, 1.0);
        let f = fidelity_coherent_closed(c(1.0), std::f64::consts::PI).value;
        assert!((f - (-4.0f64).exp()).abs() < 1e-16);
        for phase in [0.05, 0.2, 0.9] {
            let small = fidelity_coherent_closed(c(3.0), phase).value;
            let large = fidelity_coherent_closed(c(6.0), phase).value;
            assert!(large < small);
        }
    }

    #[test]
    fn tail_exponent_degenerate_for_fock() {
        let t = tail_exponent(&make_fock(4), 10.0, 100.0, 20).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.slope, 0.0);
        assert!(tail_exponent(&make_uniform(4), 0.5, 100.0, 20).is_err());
        assert!(tail_exponent(&make_uniform(4), 10.0, 100.0, 5).is_err());
    }

    #[test]
    fn tail_exponent_approaches_half_for_broad_states() {
        // lattice effects vanish when Gamma/N = x / <dn^2> is small over the whole range
        let t = tail_exponent(&make_uniform(2000), 10.0, 100.0, 20).unwrap();
        assert!((t.slope + 0.5).abs() < 0.05, "{}", t.slope);
        let t = tail_exponent(&make_coherent(c(19.0)).unwrap(), 10.0, 100.0, 20).unwrap();
        assert!((t.slope + 0.5).abs() < 0.05, "{}", t.slope);
    }

    #[test]
    fn contour_solution_hits_level() {
        let state = make_cat(c(5.0), 1.0, std::f64::consts::PI).unwrap();
        let g = contour_gamma_over_n(&state, 0.6).unwrap();
        let model = PhaseModel::from_variance(0.0, g * 100.0, 100);
        assert!((fidelity_analytic(&state, &model, true).value - 0.6).abs() < 1e-12);
        assert!(contour_gamma_over_n(&make_uniform(3), 0.1).is_err());
    }

    #[test]
    fn std_error_vanishes_for_constant_samples() {
        let (m, s) = mean_and_std_error(&[0.7; 1000]);
        assert_eq!((m, s), (0.7, 0.0));
    }
}

//! Random Berry phase of a SIRO cycle: the exact weighted-detuning form, its
//! first-order expansion around the homogeneous ensemble, and the phase model
//! `(gamma0, mu0, Gamma)` derived from it.
//!
//! Phases carry the minus sign of the exact formula: `gamma0 = -Delta (tau_s + kappa tau_d)`.
//! The mean Wigner rotation reported by the metrology module is its magnitude.

use serde::Serialize;

use crate::disorder::{RealizationStats, SystemParams};
use crate::error::{Error, Result};
use crate::pulse::{pulse_factors, PulseConvention, PulseFactors, PulseProfile};

/// A symmetric store-in / storage / retrieval cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub tau_s: f64,
    pub profile: PulseProfile,
    pub factors: PulseFactors,
}

impl Protocol {
    pub fn new(tau_s: f64, profile: PulseProfile, convention: PulseConvention) -> Result<Self> {
        let factors = pulse_factors(&profile, convention)?;
        Self::with_factors(tau_s, profile, factors)
    }

    pub fn with_factors(tau_s: f64, profile: PulseProfile, factors: PulseFactors) -> Result<Self> {
        if !(tau_s >= 0.0 && tau_s.is_finite()) {
            return Err(Error::invalid("tau_s", "storage time must be finite and >= 0"));
        }
        Ok(Protocol {
            tau_s,
            profile,
            factors,
        })
    }

    pub fn tau_d(&self) -> f64 {
        self.profile.tau_d()
    }

    /// Total cycle time `tau_s + tau_d`.
    pub fn tau(&self) -> f64 {
        self.tau_s + self.tau_d()
    }

    /// Whether `tau_s >= threshold * tau_d` (the long-storage regime). Reported only.
    pub fn long_storage(&self, threshold: f64) -> bool {
        self.tau_s >= threshold * self.tau_d()
    }

    /// `int_0^tau sin^2 theta dt` for the homogeneous ensemble.
    pub fn effective_time(&self) -> f64 {
        self.tau_s + self.factors.kappa_theta * self.tau_d()
    }
}

/// Homogeneous-ensemble phase parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseModel {
    /// Phase per photon of the homogeneous ensemble.
    pub gamma0: f64,
    /// Coupling sensitivity per photon.
    pub mu0: f64,
    /// Phase-variance factor; the per-photon phase variance is `Gamma / N`.
    pub gamma: f64,
    pub n_atoms: u64,
    /// Global detuning the expansion is taken around.
    pub delta: f64,
}

impl PhaseModel {
    /// Model with a given homogeneous phase and variance factor, for use without a protocol.
    pub fn from_variance(gamma0: f64, gamma: f64, n_atoms: u64) -> Self {
        PhaseModel {
            gamma0,
            mu0: 0.0,
            gamma,
            n_atoms,
            delta: f64::NAN,
        }
    }

    /// `Gamma / N`.
    pub fn gamma_over_n(&self) -> f64 {
        self.gamma / self.n_atoms as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `-n (sum g_j^2 Delta_j / sum g_k^2) int_0^tau sin^2 theta_g dt`, where the driving
/// window uses this realization's own coupling sum inside `theta_g`.
pub fn berry_phase_exact(
    stats: &RealizationStats,
    params: &SystemParams,
    protocol: &Protocol,
    n: u64,
) -> f64 {
    n as f64 * berry_phase_exact_unit(stats, params, protocol)
}

pub(crate) fn berry_phase_exact_unit(
    stats: &RealizationStats,
    params: &SystemParams,
    protocol: &Protocol,
) -> f64 {
    let r_sq = stats.coupling_scale_sq(params);
    let time = protocol.tau_s + protocol.tau_d() * protocol.profile.mean_sin_sq(r_sq);
    -stats.weighted_detuning() * time
}

/// `n (gamma0 (1 + eps_Delta) + mu0 eps_g)`.
pub fn berry_phase_linear(stats: &RealizationStats, model: &PhaseModel, n: u64) -> Result<f64> {
    Ok(n as f64 * berry_phase_linear_unit(stats, model)?)
}

pub(crate) fn berry_phase_linear_unit(stats: &RealizationStats, model: &PhaseModel) -> Result<f64> {
    if model.delta == 0.0 {
        return Err(Error::LinearizationUnavailable);
    }
    let eps_delta = stats.eps_delta.ok_or(Error::LinearizationUnavailable)?;
    Ok(model.gamma0 * (1.0 + eps_delta) + model.mu0 * stats.eps_g)
}

pub fn build_phase_model(params: &SystemParams, protocol: &Protocol) -> Result<PhaseModel> {
    params.validate()?;
    let f = &protocol.factors;
    let tau_d = protocol.tau_d();
    let effective = protocol.effective_time();
    let gamma0 = -params.delta * effective;
    let mu0 = -0.5 * params.delta * f.zeta_theta * tau_d;
    // unexpanded products, equal to (dD/D)^2 gamma0^2 + (dg/g)^2 mu0^2 and finite at Delta = 0
    let gamma = (params.delta_spread * effective).powi(2)
        + (params.g_spread * params.delta * f.zeta_theta * tau_d / (2.0 * params.g)).powi(2);
    Ok(PhaseModel {
        gamma0,
        mu0,
        gamma,
        n_atoms: params.n_atoms,
        delta: params.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{sample_realization, sample_stats};
    use crate::pulse::PulseFactors;

    fn params(delta: f64, dd: f64, dg: f64) -> SystemParams {
        SystemParams {
            n_atoms: 50,
            delta,
            delta_spread: dd,
            g: 1.0,
            g_spread: dg,
        }
    }

    fn gaussian_protocol(tau_s: f64) -> Protocol {
        let profile = PulseProfile::gaussian(1000.0, 1.0, 2001).unwrap();
        Protocol::new(tau_s, profile, PulseConvention::Definition).unwrap()
    }

    fn constant_factor_protocol(tau_s: f64, tau_d: f64) -> Protocol {
        let profile = PulseProfile::gaussian(1000.0, tau_d, 2001).unwrap();
        Protocol::with_factors(tau_s, profile, PulseFactors::paper_constants()).unwrap()
    }

    #[test]
    fn zero_photons_zero_phase() {
        let p = params(0.3, 0.1, 0.1);
        let r = sample_realization(&p, 1).unwrap();
        assert_eq!(berry_phase_exact(&r.stats, &p, &gaussian_protocol(10.0), 0), 0.0);
    }

    #[test]
    fn homogeneous_realization_collapses_to_mean_detuning() {
        let p = params(0.3, 0.0, 0.0);
        let proto = gaussian_protocol(10.0);
        let r = sample_realization(&p, 1).unwrap();
        let kappa = proto.factors.kappa_theta;
        for n in [1, 3, 7] {
            let expected = -(n as f64) * 0.3 * (10.0 + kappa * 1.0);
            let got = berry_phase_exact(&r.stats, &p, &proto, n);
            assert!((got - expected).abs() < 1e-12 * expected.abs());
        }
    }

    #[test]
    fn exact_phase_is_permutation_invariant() {
        let p = params(0.3, 0.05, 0.1);
        let proto = gaussian_protocol(5.0);
        let r = sample_realization(&p, 17).unwrap();
        let a = berry_phase_exact(&r.stats, &p, &proto, 2);
        // reverse the atom order and recompute the sums
        let (mut d, mut g) = (r.detunings.clone(), r.couplings.clone());
        d.reverse();
        g.reverse();
        let sum_g_sq: f64 = g.iter().map(|x| x * x).sum();
        let sum_w: f64 = g.iter().zip(&d).map(|(x, y)| x * x * y).sum();
        let stats = RealizationStats {
            sum_g_sq,
            sum_g_sq_detuning: sum_w,
            ..r.stats
        };
        let b = berry_phase_exact(&stats, &p, &proto, 2);
        assert!((a - b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn linear_phase_at_expansion_point_and_linearity() {
        let p = params(0.3, 0.0, 0.0);
        let proto = gaussian_protocol(10.0);
        let model = build_phase_model(&p, &proto).unwrap();
        let stats = sample_stats(&p, 0).unwrap();
        assert_eq!(berry_phase_linear(&stats, &model, 1).unwrap(), model.gamma0);
        let p = params(0.3, 0.02, 0.03);
        let model = build_phase_model(&p, &proto).unwrap();
        let stats = sample_stats(&p, 4).unwrap();
        let one = berry_phase_linear(&stats, &model, 3).unwrap();
        let two = berry_phase_linear(&stats, &model, 6).unwrap();
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn linearization_needs_global_detuning() {
        let p = params(0.0, 0.1, 0.0);
        let proto = gaussian_protocol(10.0);
        let model = build_phase_model(&p, &proto).unwrap();
        let stats = sample_stats(&p, 0).unwrap();
        assert!(matches!(
            berry_phase_linear(&stats, &model, 1),
            Err(Error::LinearizationUnavailable)
        ));
    }

    #[test]
    fn phase_model_with_quoted_constants() {
        let p = SystemParams {
            n_atoms: 1000,
            delta: 0.01,
            delta_spread: 0.0,
            g: 1.0,
            g_spread: 0.0,
        };
        let m = build_phase_model(&p, &constant_factor_protocol(100.0, 1.0)).unwrap();
        assert!((m.gamma0.abs() - 1.032).abs() < 1e-12);
        assert!((m.mu0 + 0.0135).abs() < 1e-15);
        assert_eq!(m.gamma, 0.0);
    }

    #[test]
    fn gamma_formula_matches_ratio_form() {
        let proto = constant_factor_protocol(100.0, 1.0);
        let p = SystemParams {
            n_atoms: 10,
            delta: 0.5,
            delta_spread: 0.05,
            g: 1.0,
            g_spread: 0.0,
        };
        let m = build_phase_model(&p, &proto).unwrap();
        assert!((m.gamma - 0.01 * m.gamma0 * m.gamma0).abs() < 1e-12 * m.gamma);
        let p = SystemParams {
            g_spread: 0.2,
            ..p
        };
        let m = build_phase_model(&p, &proto).unwrap();
        let ratio_form = (0.05f64 / 0.5).powi(2) * m.gamma0.powi(2) + 0.04 * m.mu0.powi(2);
        assert!((m.gamma - ratio_form).abs() < 1e-12 * m.gamma);
    }

    #[test]
    fn gamma_is_continuous_through_zero_detuning() {
        let proto = constant_factor_protocol(100.0, 1.0);
        let at = |delta: f64| {
            let p = SystemParams {
                n_atoms: 10,
                delta,
                delta_spread: 0.05,
                g: 1.0,
                g_spread: 0.2,
            };
            build_phase_model(&p, &proto).unwrap().gamma
        };
        let g0 = at(0.0);
        assert!((g0 - (0.05f64 * proto.effective_time()).powi(2)).abs() < 1e-12);
        assert!((at(1e-9) - g0).abs() < 1e-12);
    }
}

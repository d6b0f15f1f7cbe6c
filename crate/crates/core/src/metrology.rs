//! Phase-based detuning calibration and the capacity / storage-time / driving-time trade-off.

use serde::{Deserialize, Serialize};

use crate::berry::Protocol;
use crate::disorder::SystemParams;
use crate::error::{Error, Result};
use crate::pulse::PulseFactors;

/// A detection run used to calibrate the global detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementScenario {
    pub tau_s_de: f64,
    pub tau_d_de: f64,
    pub delta_true: f64,
    pub alpha_theta: f64,
}

impl MeasurementScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_s_de > 0.0 && self.tau_s_de.is_finite()) {
            return Err(Error::invalid("tau_s_de", "must be finite and > 0"));
        }
        if !(self.tau_d_de > 0.0 && self.tau_d_de.is_finite()) {
            return Err(Error::invalid("tau_d_de", "must be finite and > 0"));
        }
        if !self.delta_true.is_finite() || !self.alpha_theta.is_finite() {
            return Err(Error::invalid("delta_true", "scenario values must be finite"));
        }
        Ok(())
    }

    pub fn kappa_theta(&self) -> f64 {
        self.alpha_theta + 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    /// Ignores the geometric contribution of the driving pulses.
    Naive,
    Berry,
}

impl std::str::FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(InferenceMode::Naive),
            "berry" => Ok(InferenceMode::Berry),
            other => Err(Error::invalid("mode", format!("unknown inference mode '{other}'"))),
        }
    }
}

/// Mean Wigner-function rotation per photon, `Delta (tau_s + kappa tau_d)`.
pub fn mean_phase(params: &SystemParams, protocol: &Protocol) -> f64 {
    params.delta * protocol.effective_time()
}

pub fn infer_detuning(
    measured_phase: f64,
    tau_s: f64,
    tau_d: f64,
    kappa_theta: f64,
    mode: InferenceMode,
) -> Result<f64> {
    let denom = match mode {
        InferenceMode::Naive => tau_s + 0.5 * tau_d,
        InferenceMode::Berry => tau_s + kappa_theta * tau_d,
    };
    if !(denom > 0.0) {
        return Err(Error::invalid("tau_s", "effective time must be positive"));
    }
    Ok(measured_phase / denom)
}

/// Error of naive calibration, `alpha tau_d Delta / (tau_s + tau_d/2)`.
pub fn residual_detuning(scenario: &MeasurementScenario) -> Result<f64> {
    scenario.validate()?;
    let s = scenario;
    Ok(s.alpha_theta * s.tau_d_de * s.delta_true / (s.tau_s_de + 0.5 * s.tau_d_de))
}

/// `(tau_s_de / tau_d_de) / (Delta tau_s sqrt(variance))`; infinite for number states.
pub fn high_fidelity_margin(scenario: &MeasurementScenario, tau_s: f64, variance: f64) -> Result<f64> {
    scenario.validate()?;
    if !(tau_s > 0.0) || !(variance >= 0.0) {
        return Err(Error::invalid("tau_s", "storage time and variance must be positive"));
    }
    let ratio = scenario.tau_s_de / scenario.tau_d_de;
    Ok(ratio / (scenario.delta_true.abs() * tau_s * variance.sqrt()))
}

/// Capacity in nats, `ln(2 sqrt(v) + 1)`.
pub fn capacity_from_variance(max_variance: f64) -> Result<f64> {
    if !(max_variance >= 0.0) {
        return Err(Error::invalid("max_variance", "must be >= 0"));
    }
    Ok((2.0 * max_variance.sqrt()).ln_1p())
}

/// Largest variance a capacity supports, inverse of [`capacity_from_variance`].
pub fn variance_from_capacity(capacity: f64) -> f64 {
    (capacity.exp_m1() / 2.0).powi(2)
}

/// Normalization of the coupling-disorder term of the trade-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingConvention {
    /// `Delta^2 dg^2 zeta^2 tau_d^2 / g^2`, as the trade-off is usually written.
    Printed,
    /// With the extra `1/4` carried by the phase-variance factor.
    PhaseModel,
}

impl CouplingConvention {
    fn factor(&self) -> f64 {
        match self {
            CouplingConvention::Printed => 1.0,
            CouplingConvention::PhaseModel => 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub capacity: f64,
    pub fidelity_floor: f64,
    pub tau_s: f64,
    pub tau_d: f64,
    pub params: SystemParams,
    pub factors: PulseFactors,
}

struct Coefficients {
    storage: f64,
    driving: f64,
    n: f64,
}

fn coefficients(params: &SystemParams, factors: &PulseFactors, convention: CouplingConvention) -> Result<Coefficients> {
    params.validate()?;
    let storage = params.delta_spread.powi(2);
    let driving = convention.factor()
        * (params.delta * params.g_spread * factors.zeta_theta / params.g).powi(2);
    Ok(Coefficients {
        storage,
        driving,
        n: params.n(),
    })
}

/// `(dD^2 tau_s^2 + c Delta^2 dg^2 zeta^2 tau_d^2 / g^2) (e^C - 1)^2 / (4N)`.
pub fn tradeoff_infidelity(point: &TradeoffPoint, convention: CouplingConvention) -> Result<f64> {
    if !(point.capacity >= 0.0) {
        return Err(Error::invalid("capacity", "must be >= 0"));
    }
    if !(point.tau_s >= 0.0) || !(point.tau_d >= 0.0) {
        return Err(Error::invalid("tau_s", "times must be >= 0"));
    }
    let c = coefficients(&point.params, &point.factors, convention)?;
    let value = (c.storage * point.tau_s.powi(2) + c.driving * point.tau_d.powi(2))
        * point.capacity.exp_m1().powi(2)
        / (4.0 * c.n);
    if value > 1.0 {
        return Err(Error::OutsideReliableRegion(value));
    }
    Ok(value)
}

/// The free variable of a trade-off solve, carrying the two fixed ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solve_for", rename_all = "snake_case")]
pub enum TradeoffUnknown {
    TauS { capacity: f64, tau_d: f64 },
    TauD { capacity: f64, tau_s: f64 },
    Capacity { tau_s: f64, tau_d: f64 },
}

/// Closed-form inversion of the trade-off at `1 - F0 = 1 - target_fidelity`.
pub fn tradeoff_solve(
    target_fidelity: f64,
    params: &SystemParams,
    factors: &PulseFactors,
    convention: CouplingConvention,
    unknown: TradeoffUnknown,
) -> Result<f64> {
    if !(target_fidelity > 0.0 && target_fidelity < 1.0) {
        return Err(Error::invalid("target_fidelity", "must lie in (0, 1)"));
    }
    let c = coefficients(params, factors, convention)?;
    let budget = 4.0 * c.n * (1.0 - target_fidelity);
    let infeasible = |what: &str| Err(Error::Infeasible(what.to_string()));
    match unknown {
        TradeoffUnknown::TauS { capacity, tau_d } => {
            let e = capacity.exp_m1().powi(2);
            if c.storage == 0.0 || e == 0.0 {
                return infeasible("tau_s does not enter the trade-off (zero detuning spread or capacity)");
            }
            let rest = budget / e - c.driving * tau_d * tau_d;
            if rest < 0.0 {
                return infeasible("driving term alone exceeds the infidelity budget");
            }
            Ok((rest / c.storage).sqrt())
        }
        TradeoffUnknown::TauD { capacity, tau_s } => {
            let e = capacity.exp_m1().powi(2);
            if c.driving == 0.0 || e == 0.0 {
                return infeasible("tau_d does not enter the trade-off (zero coupling term or capacity)");
            }
            let rest = budget / e - c.storage * tau_s * tau_s;
            if rest < 0.0 {
                return infeasible("storage term alone exceeds the infidelity budget");
            }
            Ok((rest / c.driving).sqrt())
        }
        TradeoffUnknown::Capacity { tau_s, tau_d } => {
            let dephasing = c.storage * tau_s * tau_s + c.driving * tau_d * tau_d;
            if dephasing == 0.0 {
                return infeasible("no dephasing: capacity is unbounded");
            }
            Ok((budget / dephasing).sqrt().ln_1p())
        }
    }
}

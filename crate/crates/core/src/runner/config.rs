//! Run configuration: one JSON document per run, strict schema, field-level validation.

use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::admissibility::StateFamily;
use crate::berry::Protocol;
use crate::disorder::SystemParams;
use crate::error::{Error, Result};
use crate::fidelity::PhaseMode;
use crate::fock::{self, StoredState};
use crate::metrology::InferenceMode;
use crate::pulse::{pulse_factors, PulseConvention, PulseFactors, PulseProfile};
use crate::reliability::CorrelationMode;

pub const DEFAULT_GRID_POINTS: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    PulseFactors,
    Fidelity,
    Reliability,
    Figure2,
    Figure3a,
    Figure3b,
    Tradeoff,
    Detuning,
    AppendixB,
}

impl Subcommand {
    pub const ALL: [Subcommand; 9] = [
        Subcommand::PulseFactors,
        Subcommand::Fidelity,
        Subcommand::Reliability,
        Subcommand::Figure2,
        Subcommand::Figure3a,
        Subcommand::Figure3b,
        Subcommand::Tradeoff,
        Subcommand::Detuning,
        Subcommand::AppendixB,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::PulseFactors => "pulse-factors",
            Subcommand::Fidelity => "fidelity",
            Subcommand::Reliability => "reliability",
            Subcommand::Figure2 => "figure2",
            Subcommand::Figure3a => "figure3a",
            Subcommand::Figure3b => "figure3b",
            Subcommand::Tradeoff => "tradeoff",
            Subcommand::Detuning => "detuning",
            Subcommand::AppendixB => "appendix-b",
        }
    }
}

impl std::str::FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid("subcommand", format!("unknown subcommand '{s}'")))
    }
}

/// Unit tags. Frequencies and times must be reciprocal so that products are radians.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub frequency: String,
    pub time: String,
}

const UNIT_PAIRS: [(&str, &str); 3] = [("MHz", "us"), ("kHz", "ms"), ("Hz", "s")];

impl Default for Units {
    fn default() -> Self {
        Units {
            frequency: "MHz".into(),
            time: "us".into(),
        }
    }
}

impl Units {
    fn check(&self) -> std::result::Result<(), String> {
        if UNIT_PAIRS
            .iter()
            .any(|(f, t)| *f == self.frequency && *t == self.time)
        {
            Ok(())
        } else {
            Err(format!(
                "units: '{}' with '{}' is not a reciprocal pair (MHz/us, kHz/ms, Hz/s)",
                self.frequency, self.time
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseSpec {
    Gaussian {
        xi: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid_points: Option<usize>,
    },
    ConstantAngle {
        theta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid_points: Option<usize>,
    },
    /// Tabulated waveform with columns `t, omega_over_sqrt_sum_g2`.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_convention: Option<PulseConvention>,
}

impl ProtocolConfig {
    fn is_csv(&self) -> bool {
        matches!(self.pulse, Some(PulseSpec::Csv { .. }))
    }

    pub fn profile(&self) -> Result<PulseProfile> {
        let pulse = self
            .pulse
            .as_ref()
            .ok_or_else(|| Error::invalid("protocol.pulse", "missing"))?;
        let tau_d = self.tau_d.unwrap_or(1.0);
        match pulse {
            PulseSpec::Gaussian { xi, grid_points } => {
                PulseProfile::gaussian(*xi, tau_d, grid_points.unwrap_or(DEFAULT_GRID_POINTS))
            }
            PulseSpec::ConstantAngle { theta, grid_points } => {
                PulseProfile::constant_angle(*theta, tau_d, grid_points.unwrap_or(DEFAULT_GRID_POINTS))
            }
            PulseSpec::Csv { path } => {
                let profile = PulseProfile::from_csv_path(path)?;
                if let Some(t) = self.tau_d {
                    if (t - profile.tau_d()).abs() > 1e-12 * t.abs().max(1.0) {
                        return Err(Error::invalid(
                            "protocol.tau_d",
                            format!("conflicts with the pulse file duration {}", profile.tau_d()),
                        ));
                    }
                }
                Ok(profile)
            }
        }
    }

    pub fn convention(&self) -> Result<PulseConvention> {
        self.pulse_convention
            .ok_or_else(|| Error::invalid("protocol.pulse_convention", "missing"))
    }

    /// Pulse factors; fixed constants need no waveform.
    pub fn factors(&self) -> Result<PulseFactors> {
        match self.convention()? {
            PulseConvention::PaperConstants => Ok(PulseFactors::paper_constants()),
            PulseConvention::Definition => pulse_factors(&self.profile()?, PulseConvention::Definition),
        }
    }

    pub fn build(&self) -> Result<Protocol> {
        let tau_s = self
            .tau_s
            .ok_or_else(|| Error::invalid("protocol.tau_s", "missing"))?;
        let profile = self.profile()?;
        let factors = match self.convention()? {
            PulseConvention::PaperConstants => PulseFactors::paper_constants(),
            PulseConvention::Definition => pulse_factors(&profile, PulseConvention::Definition)?,
        };
        Protocol::with_factors(tau_s, profile, factors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Coherent { alpha: [f64; 2] },
    Cat { alpha: [f64; 2], eta: f64, theta: f64 },
    Uniform { m: usize },
    Fock { n: usize },
    /// JSON state document `{ "n_max", "amplitudes" }`.
    File { path: PathBuf },
}

impl StateSpec {
    pub fn build(&self) -> Result<StoredState> {
        match self {
            StateSpec::Coherent { alpha } => fock::make_coherent(Complex64::new(alpha[0], alpha[1])),
            StateSpec::Cat { alpha, eta, theta } => {
                fock::make_cat(Complex64::new(alpha[0], alpha[1]), *eta, *theta)
            }
            StateSpec::Uniform { m } => Ok(fock::make_uniform(*m)),
            StateSpec::Fock { n } => Ok(fock::make_fock(*n)),
            StateSpec::File { path } => StoredState::from_json(&std::fs::read_to_string(path)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSelection {
    Analytic,
    Mc,
    Series,
    Bound,
    All,
}

impl std::str::FromStr for MethodSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(MethodSelection::Analytic),
            "mc" => Ok(MethodSelection::Mc),
            "series" => Ok(MethodSelection::Series),
            "bound" => Ok(MethodSelection::Bound),
            "all" => Ok(MethodSelection::All),
            other => Err(Error::invalid("fidelity.method", format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityConfig {
    pub method: MethodSelection,
    pub compensated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_mode: Option<PhaseMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilityConfig {
    pub mode: CorrelationMode,
    pub k: usize,
    pub compensated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure2Config {
    /// Detection-run ratio `tau_s_de / tau_d_de`.
    pub tau_ratio: f64,
    pub alpha_theta: f64,
    pub amplitudes: Vec<f64>,
    pub delta_tau_s_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure3aConfig {
    pub family: StateFamily,
    /// Family size parameters, see [`StateFamily`].
    pub grid: Vec<f64>,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure3bConfig {
    pub variance: f64,
    pub families: Vec<StateFamily>,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_order: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveFor {
    TauS,
    TauD,
    Capacity,
}

impl std::str::FromStr for SolveFor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau_s" => Ok(SolveFor::TauS),
            "tau_d" => Ok(SolveFor::TauD),
            "capacity" => Ok(SolveFor::Capacity),
            other => Err(Error::invalid("tradeoff.solve_for", format!("unknown variable '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffConfig {
    pub target_fidelity: f64,
    pub solve_for: SolveFor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningConfig {
    pub mode: InferenceMode,
    pub tau_s_de: f64,
    pub tau_d_de: f64,
    pub delta_true: f64,
    pub alpha_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppendixBConfig {
    pub family: StateFamily,
    pub variance_grid: Vec<f64>,
}

/// A full run. Every field is optional in the document; [`RunConfig::validate`] decides
/// what the chosen subcommand needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<Subcommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<Units>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<SystemParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<FidelityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<ReliabilityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure2: Option<Figure2Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure3a: Option<Figure3aConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure3b: Option<Figure3bConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tradeoff: Option<TradeoffConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<DetuningConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appendix_b: Option<AppendixBConfig>,
}

fn missing(field: &str, errors: &mut Vec<String>) {
    errors.push(format!("{field}: required field is missing"));
}

/// Parses and validates a JSON document.
pub fn validate_config(document: &str) -> Result<RunConfig> {
    let config: RunConfig = serde_json::from_str(document)
        .map_err(|e| Error::Config(vec![format!("document: {e}")]))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("document: {e}")]))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn units(&self) -> Units {
        self.units.clone().unwrap_or_default()
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.subcommand.is_none() {
            missing("subcommand", &mut errors);
        }
        match &self.units {
            None => missing("units", &mut errors),
            Some(u) => {
                if let Err(e) = u.check() {
                    errors.push(e);
                }
            }
        }
        if self.seed.is_none() {
            missing("seed", &mut errors);
        }
        let Some(cmd) = self.subcommand else {
            errors.push(format!(
                "subcommand: one of {} decides which further sections are required",
                Subcommand::ALL.map(|c| c.name()).join(", ")
            ));
            return Err(Error::Config(errors));
        };
        let needs_params = matches!(
            cmd,
            Subcommand::Fidelity | Subcommand::Reliability | Subcommand::Tradeoff
        );
        if needs_params {
            match &self.params {
                None => missing("params", &mut errors),
                Some(p) => {
                    if let Err(e) = p.validate() {
                        errors.push(format!("params: {e}"));
                    }
                }
            }
        }
        match cmd {
            Subcommand::PulseFactors => self.check_protocol(&mut errors, false, true),
            Subcommand::Fidelity | Subcommand::Reliability => {
                self.check_protocol(&mut errors, true, true);
                if self.state.is_none() {
                    missing("state", &mut errors);
                }
            }
            Subcommand::Tradeoff => {
                let needs_pulse = self
                    .protocol
                    .as_ref()
                    .and_then(|p| p.pulse_convention)
                    .map(|c| c == PulseConvention::Definition)
                    .unwrap_or(false);
                self.check_protocol(&mut errors, false, needs_pulse);
            }
            _ => {}
        }
        match cmd {
            Subcommand::PulseFactors => {}
            Subcommand::Fidelity => match &self.fidelity {
                None => missing("fidelity", &mut errors),
                Some(f) => {
                    let mc = matches!(f.method, MethodSelection::Mc | MethodSelection::All);
                    if mc && f.samples.is_none() {
                        missing("fidelity.samples", &mut errors);
                    }
                }
            },
            Subcommand::Reliability => match &self.reliability {
                None => missing("reliability", &mut errors),
                Some(r) => {
                    if r.k == 0 {
                        errors.push("reliability.k: must be >= 1".into());
                    }
                    if r.mode == CorrelationMode::Custom && r.rho_file.is_none() {
                        missing("reliability.rho_file", &mut errors);
                    }
                }
            },
            Subcommand::Figure2 => match &self.figure2 {
                None => missing("figure2", &mut errors),
                Some(f) => {
                    if f.points < 2 {
                        errors.push("figure2.points: need at least 2".into());
                    }
                    if !(f.tau_ratio > 0.0) {
                        errors.push("figure2.tau_ratio: must be > 0".into());
                    }
                }
            },
            Subcommand::Figure3a => match &self.figure3a {
                None => missing("figure3a", &mut errors),
                Some(f) => {
                    if f.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
                        errors.push("figure3a.levels: fidelity levels must lie in (0, 1)".into());
                    }
                }
            },
            Subcommand::Figure3b => match &self.figure3b {
                None => missing("figure3b", &mut errors),
                Some(f) => {
                    if f.points < 2 || !(f.x_min >= 0.0 && f.x_max > f.x_min) {
                        errors.push("figure3b: need points >= 2 and 0 <= x_min < x_max".into());
                    }
                }
            },
            Subcommand::Tradeoff => match &self.tradeoff {
                None => missing("tradeoff", &mut errors),
                Some(t) => {
                    let fixed: &[(&str, Option<f64>)] = match t.solve_for {
                        SolveFor::TauS => &[("capacity", t.capacity), ("tau_d", t.tau_d)],
                        SolveFor::TauD => &[("capacity", t.capacity), ("tau_s", t.tau_s)],
                        SolveFor::Capacity => &[("tau_s", t.tau_s), ("tau_d", t.tau_d)],
                    };
                    for (name, value) in fixed {
                        if value.is_none() {
                            missing(&format!("tradeoff.{name}"), &mut errors);
                        }
                    }
                }
            },
            Subcommand::Detuning => {
                if self.detuning.is_none() {
                    missing("detuning", &mut errors);
                }
            }
            Subcommand::AppendixB => {
                if self.appendix_b.is_none() {
                    missing("appendix_b", &mut errors);
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    fn check_protocol(&self, errors: &mut Vec<String>, full: bool, needs_pulse: bool) {
        let Some(p) = &self.protocol else {
            errors.push("protocol: required field is missing".into());
            return;
        };
        if p.pulse_convention.is_none() {
            errors.push("protocol.pulse_convention: required field is missing".into());
        }
        if needs_pulse && p.pulse.is_none() {
            errors.push("protocol.pulse: required field is missing".into());
        }
        if full {
            if p.tau_s.is_none() {
                errors.push("protocol.tau_s: required field is missing".into());
            }
            if p.tau_d.is_none() && !p.is_csv() {
                errors.push("protocol.tau_d: required field is missing".into());
            }
        }
    }
}

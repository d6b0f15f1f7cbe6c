//! Config-driven runs producing CSV.
//!
//! Engines may parallelize internally; output is assembled here in a fixed order, so the
//! same config and seed give byte-identical CSV at any worker count.

pub mod config;

use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;
use serde_json::json;

use crate::admissibility::appendix_b_report;
use crate::berry::build_phase_model;
use crate::disorder::sample_realization;
use crate::error::{Error, Result};
use crate::fidelity::{
    compensated_fidelity_at, contour_gamma_over_n, fidelity_analytic, fidelity_coherent_closed,
    fidelity_lower_bound, fidelity_monte_carlo, fidelity_series, PhaseMode,
};
use crate::fock::{photon_stats, StoredState};
use crate::metrology::{
    high_fidelity_margin, infer_detuning, residual_detuning, tradeoff_infidelity, tradeoff_solve,
    CouplingConvention, MeasurementScenario, TradeoffPoint, TradeoffUnknown,
};
use crate::reliability::{
    read_rho_path, reliability_general, reliability_repeater, reliability_sync, CorrelationMode,
    CorrelationSpec,
};

pub use config::{validate_config, RunConfig, Subcommand};
use config::{MethodSelection, SolveFor};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "QMEM_THREADS";
pub const DEFAULT_SERIES_ORDER: usize = 3;

/// Exit status of a failed run: 3 for numerical failures, 2 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|n| *n > 0)
}

/// Round-trip safe: 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Runs on a dedicated pool of `threads` workers.
pub fn run_with_threads(config: &RunConfig, threads: usize) -> Result<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    pool.install(|| run(config))
}

/// Validates `config` and returns the CSV text of the run.
pub fn run(config: &RunConfig) -> Result<String> {
    config.validate()?;
    let cmd = config.subcommand.expect("validated");
    log::info!("running {}", cmd.name());
    match cmd {
        Subcommand::PulseFactors => pulse_factors_csv(config),
        Subcommand::Fidelity => fidelity_csv(config),
        Subcommand::Reliability => reliability_csv(config),
        Subcommand::Figure2 => figure2_csv(config),
        Subcommand::Figure3a => figure3a_csv(config),
        Subcommand::Figure3b => figure3b_csv(config),
        Subcommand::Tradeoff => tradeoff_csv(config),
        Subcommand::Detuning => detuning_csv(config),
        Subcommand::AppendixB => appendix_b_csv(config),
    }
}

/// JSON description of the phase model and conventions a run uses.
pub fn explain(config: &RunConfig) -> Result<String> {
    config.validate()?;
    let mut doc = json!({
        "subcommand": config.subcommand.map(|c| c.name()),
        "units": config.units(),
        "seed": config.seed,
        "phase_sign": "gamma0 = -Delta (tau_s + kappa tau_d); mean rotation reported as its magnitude",
        "tradeoff_coupling_conventions": ["printed", "phase_model (extra 1/4)"],
    });
    if let Some(p) = &config.protocol {
        if p.pulse_convention.is_some() {
            doc["pulse_factors"] = serde_json::to_value(p.factors()?)?;
        }
        if let (Some(params), true) = (&config.params, p.tau_s.is_some()) {
            let protocol = p.build()?;
            doc["phase_model"] = serde_json::to_value(build_phase_model(params, &protocol)?)?;
            doc["long_storage"] = json!(protocol.long_storage(crate::pulse::DEFAULT_MUCH_GREATER));
        }
    }
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Writes one disorder realization (`j, Delta_j, g_j`) for the config's params and seed.
pub fn dump_realizations<W: Write>(config: &RunConfig, out: W) -> Result<()> {
    let params = config
        .params
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["params: required to dump realizations".into()]))?;
    let seed = config
        .seed
        .ok_or_else(|| Error::Config(vec!["seed: required to dump realizations".into()]))?;
    sample_realization(params, seed)?.write_csv(out)
}

fn protocol_cfg(config: &RunConfig) -> &config::ProtocolConfig {
    config.protocol.as_ref().expect("validated")
}

fn pulse_factors_csv(config: &RunConfig) -> Result<String> {
    let f = protocol_cfg(config).factors()?;
    Ok(format!(
        "kappa_theta,zeta_theta,alpha_theta\n{},{},{}\n",
        fmt_real(f.kappa_theta),
        fmt_real(f.zeta_theta),
        fmt_real(f.alpha_theta)
    ))
}

fn fidelity_csv(config: &RunConfig) -> Result<String> {
    let params = config.params.as_ref().expect("validated");
    let protocol = protocol_cfg(config).build()?;
    let state = config.state.as_ref().expect("validated").build()?;
    let fc = config.fidelity.as_ref().expect("validated");
    let model = build_phase_model(params, &protocol)?;
    let variance = photon_stats(&state, 2).variance;
    let x = model.gamma_over_n() * variance;
    let order = fc.series_order.unwrap_or(DEFAULT_SERIES_ORDER);
    let all = fc.method == MethodSelection::All;
    let mut out = String::from("method,x,value,std_error\n");
    let mut row = |label: &str, value: f64, std_error: f64| {
        writeln!(out, "{label},{},{},{}", fmt_real(x), fmt_real(value), fmt_real(std_error)).unwrap();
    };
    if all || fc.method == MethodSelection::Analytic {
        row("analytic", fidelity_analytic(&state, &model, fc.compensated).value, 0.0);
    }
    if all || fc.method == MethodSelection::Mc {
        let mode = fc.phase_mode.unwrap_or(PhaseMode::Linear);
        let r = fidelity_monte_carlo(
            &state,
            params,
            &protocol,
            mode,
            fc.samples.expect("validated"),
            config.seed.expect("validated"),
            fc.compensated,
        )?;
        row(r.method.label(), r.value, r.std_error);
    }
    if all || fc.method == MethodSelection::Series {
        match fidelity_series(&state, x, order) {
            Ok(r) => row("series", r.value, 0.0),
            Err(e) if all => log::warn!("series row omitted: {e}"),
            Err(e) => return Err(e),
        }
    }
    if all || fc.method == MethodSelection::Bound {
        row("lower_bound", fidelity_lower_bound(x)?.value, 0.0);
    }
    Ok(out)
}

fn reliability_csv(config: &RunConfig) -> Result<String> {
    let params = config.params.as_ref().expect("validated");
    let protocol = protocol_cfg(config).build()?;
    let state = config.state.as_ref().expect("validated").build()?;
    let rc = config.reliability.as_ref().expect("validated");
    let model = build_phase_model(params, &protocol)?;
    let mut out = String::from("k,mode,value\n");
    match rc.mode {
        CorrelationMode::Custom => {
            let rho = read_rho_path(rc.rho_file.as_ref().expect("validated"))?;
            if rho.len() != rc.k {
                return Err(Error::Config(vec![format!(
                    "reliability.rho_file: matrix is {n}x{n} but k = {k}",
                    n = rho.len(),
                    k = rc.k
                )]));
            }
            let spec = CorrelationSpec::custom(rho)?;
            let states = vec![state; rc.k];
            let value = reliability_general(&states, &model, &spec, rc.compensated)?;
            writeln!(out, "{},custom,{}", rc.k, fmt_real(value)).unwrap();
        }
        mode => {
            for k in 1..=rc.k {
                let value = match mode {
                    CorrelationMode::Synchronizer => {
                        reliability_sync(&vec![state.clone(); k], &model, rc.compensated)?
                    }
                    _ => reliability_repeater(&state, &model, k, rc.compensated)?,
                };
                writeln!(out, "{k},{},{}", mode.label(), fmt_real(value)).unwrap();
            }
        }
    }
    Ok(out)
}

fn figure2_csv(config: &RunConfig) -> Result<String> {
    let f = config.figure2.as_ref().expect("validated");
    // detuning scaled to 1 so the residual is the relative error
    let scenario = MeasurementScenario {
        tau_s_de: f.tau_ratio,
        tau_d_de: 1.0,
        delta_true: 1.0,
        alpha_theta: f.alpha_theta,
    };
    let relative_residual = residual_detuning(&scenario)?;
    let mut out = String::from("abs_alpha,delta_tau_s_rad,residual_phase_rad,fidelity,margin\n");
    for &a in &f.amplitudes {
        for i in 0..f.points {
            let dts = f.delta_tau_s_max * i as f64 / (f.points - 1) as f64;
            let phase = relative_residual * dts;
            let fid = fidelity_coherent_closed(Complex64::new(a, 0.0), phase).value;
            let margin = if dts > 0.0 {
                high_fidelity_margin(&scenario, dts, a * a)?
            } else {
                f64::INFINITY
            };
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_real(a),
                fmt_real(dts),
                fmt_real(phase),
                fmt_real(fid),
                fmt_real(margin)
            )
            .unwrap();
        }
    }
    Ok(out)
}

fn figure3a_csv(config: &RunConfig) -> Result<String> {
    let f = config.figure3a.as_ref().expect("validated");
    let states: Vec<(f64, StoredState)> = f
        .grid
        .iter()
        .map(|&p| f.family.member(p).map(|s| (p, s)))
        .collect::<Result<_>>()?;
    let mut out =
        String::from("family,fidelity_level,family_parameter,variance,gamma_over_n,gamma_over_n_times_variance\n");
    for &level in &f.levels {
        for (p, state) in &states {
            let v = photon_stats(state, 2).variance;
            let g = contour_gamma_over_n(state, level).unwrap_or_else(|e| {
                log::warn!("no contour at level {level} for parameter {p}: {e}");
                f64::NAN
            });
            writeln!(
                out,
                "{},{},{},{},{},{}",
                f.family.label(),
                fmt_real(level),
                fmt_real(*p),
                fmt_real(v),
                fmt_real(g),
                fmt_real(g * v)
            )
            .unwrap();
        }
    }
    Ok(out)
}

fn figure3b_csv(config: &RunConfig) -> Result<String> {
    let f = config.figure3b.as_ref().expect("validated");
    let order = f.series_order.unwrap_or(DEFAULT_SERIES_ORDER);
    let mut out = String::from("state,x,exact,series,bound\n");
    for family in &f.families {
        let state = family.member_with_variance(f.variance)?;
        for i in 0..f.points {
            let x = if f.x_min > 0.0 {
                f.x_min * (f.x_max / f.x_min).powf(i as f64 / (f.points - 1) as f64)
            } else {
                f.x_min + (f.x_max - f.x_min) * i as f64 / (f.points - 1) as f64
            };
            let exact = compensated_fidelity_at(&state, x);
            // outside the series' range of validity the column is NaN
            let series = fidelity_series(&state, x, order).map(|r| r.value).unwrap_or(f64::NAN);
            let bound = fidelity_lower_bound(x)?.value;
            writeln!(
                out,
                "{},{},{},{},{}",
                family.label(),
                fmt_real(x),
                fmt_real(exact),
                fmt_real(series),
                fmt_real(bound)
            )
            .unwrap();
        }
    }
    Ok(out)
}

fn tradeoff_csv(config: &RunConfig) -> Result<String> {
    let params = config.params.as_ref().expect("validated");
    let factors = protocol_cfg(config).factors()?;
    let t = config.tradeoff.as_ref().expect("validated");
    let units = config.units();
    let tu = &units.time;
    let mut out = format!(
        "coupling_convention,solve_for,target_fidelity,capacity_nats,tau_s_{tu},tau_d_{tu},tau_s_expm1_capacity_{tu},delta_tau_d_expm1_capacity_rad,infidelity\n"
    );
    for (label, conv) in [
        ("printed", CouplingConvention::Printed),
        ("phase_model", CouplingConvention::PhaseModel),
    ] {
        let (unknown, name) = match t.solve_for {
            SolveFor::TauS => (
                TradeoffUnknown::TauS {
                    capacity: t.capacity.expect("validated"),
                    tau_d: t.tau_d.expect("validated"),
                },
                "tau_s",
            ),
            SolveFor::TauD => (
                TradeoffUnknown::TauD {
                    capacity: t.capacity.expect("validated"),
                    tau_s: t.tau_s.expect("validated"),
                },
                "tau_d",
            ),
            SolveFor::Capacity => (
                TradeoffUnknown::Capacity {
                    tau_s: t.tau_s.expect("validated"),
                    tau_d: t.tau_d.expect("validated"),
                },
                "capacity",
            ),
        };
        let solved = tradeoff_solve(t.target_fidelity, params, &factors, conv, unknown)?;
        let (capacity, tau_s, tau_d) = match t.solve_for {
            SolveFor::TauS => (t.capacity.unwrap(), solved, t.tau_d.unwrap()),
            SolveFor::TauD => (t.capacity.unwrap(), t.tau_s.unwrap(), solved),
            SolveFor::Capacity => (solved, t.tau_s.unwrap(), t.tau_d.unwrap()),
        };
        let point = TradeoffPoint {
            capacity,
            fidelity_floor: t.target_fidelity,
            tau_s,
            tau_d,
            params: *params,
            factors,
        };
        let infidelity = tradeoff_infidelity(&point, conv)?;
        let e = capacity.exp_m1();
        writeln!(
            out,
            "{label},{name},{},{},{},{},{},{},{}",
            fmt_real(t.target_fidelity),
            fmt_real(capacity),
            fmt_real(tau_s),
            fmt_real(tau_d),
            fmt_real(tau_s * e),
            fmt_real(params.delta * tau_d * e),
            fmt_real(infidelity)
        )
        .unwrap();
    }
    Ok(out)
}

fn detuning_csv(config: &RunConfig) -> Result<String> {
    let d = config.detuning.as_ref().expect("validated");
    let fu = config.units().frequency;
    let scenario = MeasurementScenario {
        tau_s_de: d.tau_s_de,
        tau_d_de: d.tau_d_de,
        delta_true: d.delta_true,
        alpha_theta: d.alpha_theta,
    };
    scenario.validate()?;
    let kappa = scenario.kappa_theta();
    let measured = d.delta_true * (d.tau_s_de + kappa * d.tau_d_de);
    let inferred = infer_detuning(measured, d.tau_s_de, d.tau_d_de, kappa, d.mode)?;
    let predicted = match d.mode {
        crate::metrology::InferenceMode::Naive => residual_detuning(&scenario)?,
        crate::metrology::InferenceMode::Berry => 0.0,
    };
    let mode = match d.mode {
        crate::metrology::InferenceMode::Naive => "naive",
        crate::metrology::InferenceMode::Berry => "berry",
    };
    Ok(format!(
        "mode,delta_true_{fu},measured_phase_rad,inferred_delta_{fu},calibration_error_{fu},predicted_residual_{fu}\n{mode},{},{},{},{},{}\n",
        fmt_real(d.delta_true),
        fmt_real(measured),
        fmt_real(inferred),
        fmt_real(inferred - d.delta_true),
        fmt_real(predicted)
    ))
}

fn appendix_b_csv(config: &RunConfig) -> Result<String> {
    let a = config.appendix_b.as_ref().expect("validated");
    let report = appendix_b_report(&a.family, &a.variance_grid)?;
    let mut out = String::from(
        "family,parameter,mean,variance,light_tailed,envelope_delta,envelope_slack_nats,ks_to_gaussian,ks_to_next\n",
    );
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_else(|| "NaN".into());
    for (i, p) in report.points.iter().enumerate() {
        let best = p.tail.best.as_ref();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            a.family.label(),
            fmt_real(p.parameter),
            fmt_real(p.mean),
            fmt_real(p.variance),
            p.tail.light_tailed(),
            opt(best.map(|b| b.delta)),
            opt(best.map(|b| b.slack_nats)),
            opt(p.ks_to_gaussian),
            opt(report.successive_ks.get(i).copied().flatten()),
        )
        .unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_lists_required_fields() {
        let err = validate_config("{}").unwrap_err();
        let Error::Config(list) = err else { panic!() };
        for field in ["subcommand", "units", "seed"] {
            assert!(list.iter().any(|e| e.starts_with(field)), "{list:?}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(validate_config(r#"{"subcommand": "figure2", "colour": 1}"#).is_err());
    }

    #[test]
    fn coupling_spread_above_coupling_rejected() {
        let doc = r#"{"subcommand": "tradeoff", "units": {"frequency": "MHz", "time": "us"}, "seed": 1,
            "params": {"n_atoms": 10, "delta": 1, "delta_spread": 0, "g": 1, "g_spread": 1.5},
            "protocol": {"pulse_convention": "paper"},
            "tradeoff": {"target_fidelity": 0.9, "solve_for": "capacity", "tau_s": 1, "tau_d": 1}}"#;
        let Error::Config(list) = validate_config(doc).unwrap_err() else { panic!() };
        assert!(list.iter().any(|e| e.starts_with("params:") && e.contains("g_spread")), "{list:?}");
    }

    #[test]
    fn mismatched_units_rejected() {
        let doc = r#"{"subcommand": "detuning", "units": {"frequency": "MHz", "time": "ms"}, "seed": 1,
            "detuning": {"mode": "naive", "tau_s_de": 1000, "tau_d_de": 1, "delta_true": 1, "alpha_theta": 2.7}}"#;
        let Error::Config(list) = validate_config(doc).unwrap_err() else { panic!() };
        assert!(list.iter().any(|e| e.starts_with("units")), "{list:?}");
    }

    #[test]
    fn tradeoff_lists_missing_fixed_variables() {
        let doc = r#"{"subcommand": "tradeoff", "units": {"frequency": "MHz", "time": "us"}, "seed": 1,
            "params": {"n_atoms": 10, "delta": 1, "delta_spread": 0.1, "g": 1, "g_spread": 0},
            "protocol": {"pulse_convention": "paper"},
            "tradeoff": {"target_fidelity": 0.9, "solve_for": "tau_s"}}"#;
        let Error::Config(list) = validate_config(doc).unwrap_err() else { panic!() };
        assert_eq!(list.len(), 2, "{list:?}");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config(vec![])), 2);
        assert_eq!(exit_code(&Error::Underflow { x: 1.0 }), 3);
    }

    #[test]
    fn number_format_round_trips() {
        let x = 0.1 + 0.2;
        assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
    }
}

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use qmem_core::fidelity::PhaseMode;
use qmem_core::metrology::InferenceMode;
use qmem_core::reliability::CorrelationMode;
use qmem_core::runner::config::{
    DetuningConfig, FidelityConfig, MethodSelection, ProtocolConfig, PulseSpec, ReliabilityConfig,
    SolveFor, StateSpec, TradeoffConfig, Units,
};
use qmem_core::runner::{self, RunConfig, Subcommand, THREADS_ENV};
use qmem_core::{Error, PulseConvention, SystemParams};

#[derive(Parser, Debug)]
#[command(name = "qmem", version, about = "Disorder-induced dephasing of EIT quantum memories")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write CSV here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Print the phase model and conventions to stderr.
    #[arg(long, global = true)]
    explain: bool,
    /// Write the disorder realization for the seed as CSV (j, Delta_j, g_j).
    #[arg(long, global = true)]
    dump_realizations: Option<PathBuf>,
    /// Print the merged configuration instead of running.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,

    /// Optional with --config, which names its own subcommand.
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug)]
struct SystemArgs {
    #[arg(long, global = true)]
    n_atoms: Option<u64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    delta_spread: Option<f64>,
    #[arg(long, global = true)]
    g: Option<f64>,
    #[arg(long, global = true)]
    g_spread: Option<f64>,
    #[arg(long, global = true)]
    frequency_unit: Option<String>,
    #[arg(long, global = true)]
    time_unit: Option<String>,
}

#[derive(Args, Debug)]
struct ProtocolArgs {
    #[arg(long, global = true)]
    tau_s: Option<f64>,
    #[arg(long, global = true)]
    tau_d: Option<f64>,
    /// Gaussian pulse endpoint ratio.
    #[arg(long, global = true)]
    xi: Option<f64>,
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    /// Tabulated waveform CSV (t, omega_over_sqrt_sum_g2).
    #[arg(long, global = true)]
    pulse_file: Option<PathBuf>,
    /// definition | paper
    #[arg(long, global = true)]
    pulse_convention: Option<PulseConvention>,
}

#[derive(Args, Debug, Default)]
struct StateArgs {
    /// coherent | cat | uniform | fock | file
    #[arg(long)]
    state: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    alpha_im: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    theta: f64,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    state_file: Option<PathBuf>,
}

#[derive(ClapSubcommand, Debug)]
enum Command {
    /// Pulse factors kappa, zeta, alpha.
    PulseFactors,
    /// Single-cycle fidelity by the selected methods.
    Fidelity {
        #[command(flatten)]
        state: StateArgs,
        /// analytic | mc | series | bound | all
        #[arg(long)]
        method: Option<MethodSelection>,
        #[arg(long)]
        samples: Option<u64>,
        /// exact | linear
        #[arg(long)]
        phase_mode: Option<String>,
        #[arg(long)]
        series_order: Option<usize>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        compensated: Option<bool>,
    },
    /// Multi-cycle reliability.
    Reliability {
        #[command(flatten)]
        state: StateArgs,
        /// sync | repeater | custom
        #[arg(long)]
        mode: Option<CorrelationMode>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        rho_file: Option<PathBuf>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        compensated: Option<bool>,
    },
    /// Coherent-state fidelity under naive detuning calibration.
    Figure2,
    /// Fidelity contours in (Gamma/N, variance).
    Figure3a,
    /// Exact, series and bound fidelity against x.
    Figure3b,
    /// Solve the capacity / storage-time / driving-time trade-off.
    Tradeoff {
        #[arg(long)]
        target_fidelity: Option<f64>,
        /// tau_s | tau_d | capacity
        #[arg(long)]
        solve_for: Option<SolveFor>,
        /// Capacity in nats.
        #[arg(long)]
        capacity: Option<f64>,
    },
    /// Detuning inferred from a measured phase.
    Detuning {
        /// naive | berry
        #[arg(long)]
        mode: Option<InferenceMode>,
        #[arg(long)]
        tau_s_de: Option<f64>,
        #[arg(long)]
        tau_d_de: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        delta_true: Option<f64>,
        #[arg(long)]
        alpha_theta: Option<f64>,
    },
    /// Tail and convergence checks for a state family.
    AppendixB,
}

impl Command {
    fn subcommand(&self) -> Subcommand {
        match self {
            Command::PulseFactors => Subcommand::PulseFactors,
            Command::Fidelity { .. } => Subcommand::Fidelity,
            Command::Reliability { .. } => Subcommand::Reliability,
            Command::Figure2 => Subcommand::Figure2,
            Command::Figure3a => Subcommand::Figure3a,
            Command::Figure3b => Subcommand::Figure3b,
            Command::Tradeoff { .. } => Subcommand::Tradeoff,
            Command::Detuning { .. } => Subcommand::Detuning,
            Command::AppendixB => Subcommand::AppendixB,
        }
    }
}

fn config_error(msg: String) -> Error {
    Error::Config(vec![msg])
}

fn state_spec(args: &StateArgs, current: Option<StateSpec>) -> Result<Option<StateSpec>, Error> {
    let Some(kind) = args.state.as_deref() else {
        return Ok(current);
    };
    let alpha = || {
        args.alpha
            .map(|a| [a, args.alpha_im])
            .ok_or_else(|| config_error("state.alpha: required for this state (--alpha)".into()))
    };
    Ok(Some(match kind {
        "coherent" => StateSpec::Coherent { alpha: alpha()? },
        "cat" => StateSpec::Cat {
            alpha: alpha()?,
            eta: args.eta,
            theta: args.theta,
        },
        "uniform" => StateSpec::Uniform {
            m: args.m.ok_or_else(|| config_error("state.m: required for uniform states (--m)".into()))?,
        },
        "fock" => StateSpec::Fock {
            n: args.n.ok_or_else(|| config_error("state.n: required for Fock states (--n)".into()))?,
        },
        "file" => StateSpec::File {
            path: args
                .state_file
                .clone()
                .ok_or_else(|| config_error("state.path: required for file states (--state-file)".into()))?,
        },
        other => return Err(config_error(format!("state: unknown kind '{other}'"))),
    }))
}

fn merge(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &cli.command {
        cfg.subcommand = Some(c.subcommand());
    }
    let Some(cmd) = cfg.subcommand else {
        return Err(config_error("subcommand: give one on the command line or in --config".into()));
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.config.is_none() {
        // flag-only runs get the default unit pair and seed 0
        cfg.units.get_or_insert_with(Units::default);
        cfg.seed.get_or_insert(0);
    }
    let s = &cli.system;
    if s.frequency_unit.is_some() || s.time_unit.is_some() {
        let u = cfg.units.get_or_insert_with(Units::default);
        if let Some(f) = &s.frequency_unit {
            u.frequency = f.clone();
        }
        if let Some(t) = &s.time_unit {
            u.time = t.clone();
        }
    }
    if cli.output.is_some() {
        cfg.output_path = cli.output.clone();
    }
    let any_param = s.n_atoms.is_some()
        || s.delta.is_some()
        || s.delta_spread.is_some()
        || s.g.is_some()
        || s.g_spread.is_some();
    if any_param {
        let base = cfg.params;
        let pick = |flag: Option<f64>, from: Option<f64>, name: &str| {
            flag.or(from)
                .ok_or_else(|| config_error(format!("params.{name}: required field is missing")))
        };
        cfg.params = Some(SystemParams {
            n_atoms: s
                .n_atoms
                .or(base.map(|b| b.n_atoms))
                .ok_or_else(|| config_error("params.n_atoms: required field is missing".into()))?,
            delta: pick(s.delta, base.map(|b| b.delta), "delta")?,
            delta_spread: pick(s.delta_spread, base.map(|b| b.delta_spread), "delta_spread")?,
            g: pick(s.g, base.map(|b| b.g), "g")?,
            g_spread: pick(s.g_spread, base.map(|b| b.g_spread), "g_spread")?,
        });
    }
    let p = &cli.protocol;
    if p.tau_s.is_some()
        || p.tau_d.is_some()
        || p.xi.is_some()
        || p.pulse_file.is_some()
        || p.pulse_convention.is_some()
        || p.grid_points.is_some()
    {
        let proto = cfg.protocol.get_or_insert_with(ProtocolConfig::default);
        if cmd != Subcommand::Tradeoff {
            proto.tau_s = p.tau_s.or(proto.tau_s);
            proto.tau_d = p.tau_d.or(proto.tau_d);
        }
        if let Some(c) = p.pulse_convention {
            proto.pulse_convention = Some(c);
        }
        if let Some(path) = &p.pulse_file {
            proto.pulse = Some(PulseSpec::Csv { path: path.clone() });
        }
        if let Some(xi) = p.xi {
            let grid_points = match &proto.pulse {
                Some(PulseSpec::Gaussian { grid_points, .. }) => *grid_points,
                _ => None,
            };
            proto.pulse = Some(PulseSpec::Gaussian { xi, grid_points });
        }
        if let (Some(n), Some(PulseSpec::Gaussian { grid_points, .. })) = (p.grid_points, proto.pulse.as_mut()) {
            *grid_points = Some(n);
        }
    }
    match &cli.command {
        Some(Command::Fidelity {
            state,
            method,
            samples,
            phase_mode,
            series_order,
            compensated,
        }) => {
            cfg.state = state_spec(state, cfg.state.take())?;
            let phase_mode = match phase_mode.as_deref() {
                None => None,
                Some("exact") => Some(PhaseMode::Exact),
                Some("linear") => Some(PhaseMode::Linear),
                Some(other) => return Err(config_error(format!("fidelity.phase_mode: unknown mode '{other}'"))),
            };
            let base = cfg.fidelity.take();
            let method = method
                .or(base.as_ref().map(|f| f.method))
                .ok_or_else(|| config_error("fidelity.method: required field is missing (--method)".into()))?;
            cfg.fidelity = Some(FidelityConfig {
                method,
                compensated: compensated.or(base.as_ref().map(|f| f.compensated)).unwrap_or(false),
                samples: samples.or(base.as_ref().and_then(|f| f.samples)),
                phase_mode: phase_mode.or(base.as_ref().and_then(|f| f.phase_mode)),
                series_order: series_order.or(base.as_ref().and_then(|f| f.series_order)),
            });
        }
        Some(Command::Reliability {
            state,
            mode,
            k,
            rho_file,
            compensated,
        }) => {
            cfg.state = state_spec(state, cfg.state.take())?;
            let base = cfg.reliability.take();
            let mode = mode
                .or(base.as_ref().map(|r| r.mode))
                .ok_or_else(|| config_error("reliability.mode: required field is missing (--mode)".into()))?;
            let k = k
                .or(base.as_ref().map(|r| r.k))
                .ok_or_else(|| config_error("reliability.k: required field is missing (--k)".into()))?;
            cfg.reliability = Some(ReliabilityConfig {
                mode,
                k,
                compensated: compensated.or(base.as_ref().map(|r| r.compensated)).unwrap_or(false),
                rho_file: rho_file.clone().or(base.and_then(|r| r.rho_file)),
            });
        }
        Some(Command::Tradeoff {
            target_fidelity,
            solve_for,
            capacity,
        }) => {
            let base = cfg.tradeoff.take();
            let target_fidelity = target_fidelity
                .or(base.as_ref().map(|t| t.target_fidelity))
                .ok_or_else(|| config_error("tradeoff.target_fidelity: required field is missing".into()))?;
            let solve_for = solve_for
                .or(base.as_ref().map(|t| t.solve_for))
                .ok_or_else(|| config_error("tradeoff.solve_for: required field is missing".into()))?;
            cfg.tradeoff = Some(TradeoffConfig {
                target_fidelity,
                solve_for,
                capacity: capacity.or(base.as_ref().and_then(|t| t.capacity)),
                tau_s: p.tau_s.or(base.as_ref().and_then(|t| t.tau_s)),
                tau_d: p.tau_d.or(base.as_ref().and_then(|t| t.tau_d)),
            });
        }
        Some(Command::Detuning {
            mode,
            tau_s_de,
            tau_d_de,
            delta_true,
            alpha_theta,
        }) => {
            let base = cfg.detuning.take();
            let need = |flag: Option<f64>, from: Option<f64>, name: &str| {
                flag.or(from)
                    .ok_or_else(|| config_error(format!("detuning.{name}: required field is missing")))
            };
            cfg.detuning = Some(DetuningConfig {
                mode: mode
                    .or(base.as_ref().map(|d| d.mode))
                    .ok_or_else(|| config_error("detuning.mode: required field is missing".into()))?,
                tau_s_de: need(*tau_s_de, base.as_ref().map(|d| d.tau_s_de), "tau_s_de")?,
                tau_d_de: need(*tau_d_de, base.as_ref().map(|d| d.tau_d_de), "tau_d_de")?,
                delta_true: need(*delta_true, base.as_ref().map(|d| d.delta_true), "delta_true")?,
                alpha_theta: need(*alpha_theta, base.as_ref().map(|d| d.alpha_theta), "alpha_theta")?,
            });
        }
        _ => {}
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let cfg = merge(cli)?;
    if cli.print_config {
        println!("{}", cfg.to_json()?);
        return Ok(());
    }
    cfg.validate()?;
    if cli.explain {
        eprintln!("{}", runner::explain(&cfg)?);
    }
    if let Some(path) = &cli.dump_realizations {
        runner::dump_realizations(&cfg, File::create(path)?)?;
    }
    let csv = match cli.threads {
        Some(n) => runner::run_with_threads(&cfg, n)?,
        None => runner::run(&cfg)?,
    };
    match &cfg.output_path {
        Some(path) => std::fs::write(path, csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(runner::exit_code(&e) as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stirsap_core::harness::*;
use stirsap_core::propagation::Frame;
use stirsap_core::pulse_synthesis::Protocol;

#[derive(Parser, Debug)]
#[command(name = "stirsap", version, about = "STIRAP / STIRSAP pulse synthesis, simulation and optimisation")]
struct Cli {
    /// TOML experiment config; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 = one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, value_enum)]
    frame: Option<FrameArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FrameArg {
    Lab,
    Rotating,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Amplitude,
    Detuning,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write raw and dressed envelope CSVs.
    Pulses,
    /// Run one transfer of the configured protocol.
    Simulate {
        /// Override the config's protocol (STIRAP, STIRSAP, STIRSAP_OPT).
        #[arg(long)]
        protocol: Option<Protocol>,
    },
    /// CMA-ES over the four control parameters.
    Optimize,
    /// Fidelity against total time.
    SweepTime {
        /// Comma-separated total times in ns; the config's list when absent.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Peak amplitude in rad/ns.
        #[arg(long)]
        omega0: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<Protocol>>,
    },
    /// Fidelity grids around the optimised controls.
    ScanRobustness {
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
    },
    /// Fit the uniform T1 that brings 500 ns STIRAP to the calibration target.
    CalibrateT1,
    /// Print the resolved config as TOML.
    DefaultConfig,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(frame) = cli.frame {
        cfg.propagation.frame = match frame {
            FrameArg::Lab => Frame::Lab,
            FrameArg::Rotating => Frame::Rotating,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut cfg = load(&cli)?;
    match cli.command {
        Command::Pulses => {
            for f in emit_pulses(&cfg)? {
                println!("{f}");
            }
        }
        Command::Simulate { protocol } => {
            if let Some(p) = protocol {
                cfg.protocol = p;
                cfg.validate()?;
            }
            let out = run_transfer(&cfg)?;
            println!("{} fidelity {:.9e} leakage {:.9e}", cfg.protocol, out.report.fidelity, out.report.leakage);
            for w in &out.manifest.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Optimize => {
            cfg.protocol = Protocol::StirsapOpt;
            if cfg.optimizer.is_none() {
                cfg.optimizer = Some(OptimizerConfig::default());
            }
            let out = run_optimize(&cfg)?;
            let c = out.control;
            println!(
                "best fidelity {:.9e} after {} evaluations ({:?})",
                1.0 - out.result.best_cost,
                out.result.evaluations,
                out.result.termination
            );
            println!("alpha_p {:.9e} alpha_s {:.9e} beta_p {:.9e} beta_s {:.9e}", c.alpha_p, c.alpha_s, c.beta_p, c.beta_s);
        }
        Command::SweepTime { times, omega0, variants } => {
            let spec = TimeSweepSpec::new(times.unwrap_or_else(|| cfg.scan.sweep_times.clone()), omega0.unwrap_or(cfg.scan.sweep_omega0))?;
            let variants = variants.unwrap_or_else(|| cfg.scan.sweep_variants.clone());
            let out = run_sweep(&cfg, &spec, &variants)?;
            print!("{}", sweep_table(&out.rows).as_str());
        }
        Command::ScanRobustness { mode } => {
            let modes = match mode {
                ModeArg::Amplitude => vec![RobustnessMode::Amplitude],
                ModeArg::Detuning => vec![RobustnessMode::Detuning],
                ModeArg::Both => vec![RobustnessMode::Amplitude, RobustnessMode::Detuning],
            };
            let out = run_robustness(&cfg, &modes)?;
            for g in &out.grids {
                let worst = g.cells.iter().map(|c| c.fidelity).fold(f64::INFINITY, f64::min);
                println!("{} reference {:.9e} worst {:.9e}", g.mode.name(), g.reference_fidelity, worst);
            }
        }
        Command::CalibrateT1 => {
            let t1 = calibrate_uniform_t1(&cfg, 1.0)?;
            println!("T1 {t1:.3} ns");
        }
        Command::DefaultConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `psi-lab`: simulate, fit, report, validate and sequence from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use psi_core::sensitivity::SweepParam;

#[derive(Debug, Parser)]
#[command(name = "psi-lab", version, about = "Point-source atom interferometer IMU toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (JSON). Built-in reference values when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a fringe image and write it with its truth sidecar.
    Simulate(Common),
    /// Estimate fringe parameters from one or more image CSVs.
    Fit {
        /// Image CSVs; each needs a `.json` sidecar next to it.
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = MethodArg::Both)]
        method: MethodArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Closed-form reports and parameter sweeps.
    Report {
        #[arg(value_enum)]
        kind: ReportKind,
        #[command(flatten)]
        common: Common,
        /// PARAM=START:STOP:STEPS, SI units.
        #[arg(long, value_parser = parse_sweep)]
        sweep: Option<Sweep>,
        /// Integration time, s.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Per-pulse LMT efficiency.
        #[arg(long, default_value_t = 0.9)]
        eta: f64,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
    },
    /// Monte Carlo comparison of fitted spread with predicted variances.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
    },
    /// Compile the three-axis timeline, or check an existing one.
    Sequence {
        #[command(flatten)]
        common: Common,
        /// Validate this timeline JSON instead of compiling one.
        #[arg(long)]
        check: Option<PathBuf>,
    },
    /// End-to-end run of every stage with reference parameters.
    Demo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "demo-out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Fourier,
    Wls,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Sensitivity,
    Systematics,
    Bandwidth,
    Lmt,
    Broadening,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

fn parse_sweep(s: &str) -> Result<Sweep, String> {
    let (name, range) = s.split_once('=').ok_or("expected PARAM=START:STOP:STEPS")?;
    let param: SweepParam = name.trim().parse().map_err(|e: psi_core::Error| e.to_string())?;
    let parts: Vec<&str> = range.split(':').collect();
    let [start, stop, steps] = parts[..] else {
        return Err("expected PARAM=START:STOP:STEPS".into());
    };
    let start: f64 = start.trim().parse().map_err(|_| format!("bad start {start:?}"))?;
    let stop: f64 = stop.trim().parse().map_err(|_| format!("bad stop {stop:?}"))?;
    let steps: usize = steps.trim().parse().map_err(|_| format!("bad step count {steps:?}"))?;
    if steps == 0 {
        return Err("step count must be >= 1".into());
    }
    let values = if steps == 1 {
        vec![start]
    } else {
        (0..steps)
            .map(|i| start + (stop - start) * i as f64 / (steps - 1) as f64)
            .collect()
    };
    Ok(Sweep { param, values })
}

fn init_threads() {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var("PSI_LAB_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring PSI_LAB_THREADS={v:?}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(common) => commands::simulate(&common),
        Command::Fit { images, method, out } => commands::fit(&images, method, &out),
        Command::Report {
            kind,
            common,
            sweep,
            tau,
            eta,
            n_max,
        } => commands::report(kind, &common, sweep.as_ref(), tau, eta, n_max),
        Command::Validate { common, trials } => commands::validate(&common, trials),
        Command::Sequence { common, check } => commands::sequence(&common, check.as_deref()),
        Command::Demo { seed, out } => commands::demo(seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

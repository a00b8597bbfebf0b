//! `beamforge`: design a beampattern, realize it as a correlation matrix or
//! weight matrix, optimize waveforms for it, and evaluate the result.

mod commands;
mod error;
mod files;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use commands::{PatternInput, WaveformOverrides};
use error::CliResult;
use spec::{DesignSpecFile, Mode, Objective};

#[derive(Debug, Parser)]
#[command(name = "beamforge", version, about = "Transmit beampattern design for MIMO arrays")]
struct Cli {
    /// Record wall time in report.json (makes reports run-dependent).
    #[arg(long, global = true)]
    record_time: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimax (Remez) design of the beampattern coefficients.
    Design {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn coefficients into a correlation matrix, optionally with TBP weights.
    Realize {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        coeffs: PathBuf,
        /// Overrides the spec's mode.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize an MTSFM waveform set.
    Waveforms {
        #[arg(long)]
        spec: PathBuf,
        /// Target coefficients for the `fit` objective.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, value_enum)]
        objective: Option<Objective>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a beampattern and report its metrics.
    #[command(group(ArgGroup::new("source").required(true).args(["matrix", "weights", "waveforms", "coeffs"])))]
    Evaluate {
        #[arg(long)]
        spec: PathBuf,
        /// Correlation matrix CSV.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// TBP weight matrix CSV; the pattern uses W W^H.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Waveform set CSV.
        #[arg(long)]
        waveforms: Option<PathBuf>,
        /// Cosine coefficient CSV.
        #[arg(long)]
        coeffs: Option<PathBuf>,
        /// Rescale to this coefficient file's level and report the deviation.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = beamforge::DEFAULT_GRID_SIZE)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Design { spec, out } => commands::design(&DesignSpecFile::load(&spec)?, out),
        Command::Realize {
            spec,
            coeffs,
            mode,
            max_iter,
            out,
        } => commands::realize(&DesignSpecFile::load(&spec)?, &coeffs, mode, max_iter, out),
        Command::Waveforms {
            spec,
            target,
            objective,
            seed,
            mu,
            max_iter,
            out,
        } => {
            let over = WaveformOverrides {
                objective,
                seed,
                mu,
                max_iter,
            };
            commands::waveforms(&DesignSpecFile::load(&spec)?, target.as_deref(), over, out)
        }
        Command::Evaluate {
            spec,
            matrix,
            weights,
            waveforms,
            coeffs,
            reference,
            grid,
            out,
        } => {
            let input = match (matrix, weights, waveforms, coeffs) {
                (Some(p), ..) => PatternInput::Matrix(p),
                (_, Some(p), ..) => PatternInput::Weights(p),
                (_, _, Some(p), _) => PatternInput::Waveforms(p),
                (_, _, _, Some(p)) => PatternInput::Coeffs(p),
                _ => unreachable!("clap enforces one source"),
            };
            commands::evaluate(&DesignSpecFile::load(&spec)?, input, reference.as_deref(), grid, out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BEAMFORGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    commands::RECORD_TIME.store(cli.record_time, std::sync::atomic::Ordering::Relaxed);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("beamforge: error: {e}");
            e.exit_code()
        }
    }
}

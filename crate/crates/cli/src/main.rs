use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use peakfilter::commands::{self, Exit, SimulateArgs, SynthesizeArgs, VerifyArgs};

/// Energy-to-peak filters for Lipschitz descriptor systems.
#[derive(Parser)]
#[command(name = "peakfilter", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the synthesis LMIs and optionally write the filter.
    Synthesize {
        config: PathBuf,
        /// Filter file to write.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// strict or sdp.
        #[arg(long)]
        mode: Option<String>,
        /// ladder, strict, nonstrict or off.
        #[arg(long)]
        xi2: Option<String>,
        /// full or printed dissipation inequality.
        #[arg(long)]
        xi1: Option<String>,
    },
    /// Simulate plant and filter for the configured disturbance.
    Simulate {
        config: PathBuf,
        filter: PathBuf,
        /// CSV trace to write.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Ignore the configured uncertainty F(t).
        #[arg(long)]
        nominal: bool,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Re-check a stored certificate and run the disturbance battery.
    Verify {
        config: PathBuf,
        filter: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
}

fn main() -> ExitCode {
    // Usage errors are input errors; clap's own code 2 would read as infeasible.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Input as u8 } else { Exit::Ok as u8 });
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Synthesize { config, output, mode, xi2, xi1 } => {
            commands::run_synthesize(&SynthesizeArgs { config, output, mode, xi2, xi1 }, &mut out)
        }
        Command::Simulate { config, filter, output, nominal, dt, t_end } => {
            commands::run_simulate(&SimulateArgs { config, filter, output, nominal, dt, t_end }, &mut out)
        }
        Command::Verify { config, filter, dt, t_end } => commands::run_verify(&VerifyArgs { config, filter, dt, t_end }, &mut out),
    };
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::from(Exit::Ok as u8),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use windvic::ControllerKind;
use windvic_cli::{cmd_check, cmd_gains, cmd_run, cmd_sweep, CliError, RunOptions};

#[derive(Parser)]
#[command(
    name = "windvic",
    version,
    about = "Wind-turbine virtual inertia scenario runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write its CSV, plots and metrics.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a scenario at several wind speeds and compare the metrics.
    Sweep {
        scenario: PathBuf,
        /// Comma-separated wind speeds in m/s.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        wind: Vec<f64>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Synthesize LQR gains, or check given gains for stability.
    Gains {
        /// Chain order (number of turbines plus one).
        #[arg(long, required_unless_present = "check", conflicts_with = "check")]
        n: Option<usize>,
        /// Diagonal state weights, comma-separated.
        #[arg(long, value_delimiter = ',', conflicts_with = "check")]
        q: Option<Vec<f64>>,
        /// Input weight.
        #[arg(long, default_value_t = 1.0, conflicts_with = "check")]
        alpha: f64,
        /// Gains to check, comma-separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        check: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct RunFlags {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Integration step in seconds; the recording interval is kept.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the controller named in the scenario file.
    #[arg(long, value_parser = parse_kind)]
    controller: Option<ControllerKind>,
    /// Accepted for compatibility; runs are deterministic.
    #[arg(long)]
    seedless: bool,
    #[arg(long)]
    no_plots: bool,
}

impl RunFlags {
    fn options(self) -> RunOptions {
        RunOptions {
            out: self.out,
            dt: self.dt,
            controller: self.controller,
            no_plots: self.no_plots,
        }
    }
}

fn parse_kind(s: &str) -> Result<ControllerKind, String> {
    s.parse().map_err(|e: windvic::Error| e.to_string())
}

fn print_bundle(bundle: &windvic_cli::report::OutputBundle) {
    for p in bundle.paths() {
        println!("wrote {}", p.display());
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario, flags } => {
            let (bundle, metrics) = cmd_run(&scenario, &flags.options())?;
            print_bundle(&bundle);
            print!("{}", metrics.to_text());
        }
        Command::Sweep {
            scenario,
            wind,
            flags,
        } => {
            let outcome = cmd_sweep(&scenario, &wind, &flags.options())?;
            let mut failed = Vec::new();
            for (v, run) in &outcome.runs {
                match run {
                    Ok((bundle, _)) => print_bundle(bundle),
                    Err(e) => {
                        eprintln!("error: wind {v} m/s: {e}");
                        failed.push(e.exit_code());
                    }
                }
            }
            println!("wrote {}", outcome.table.display());
            if let Some(&code) = failed.iter().max() {
                return Err(CliError::Sweep {
                    failed: failed.len(),
                    total: outcome.runs.len(),
                    code,
                });
            }
        }
        Command::Gains { n, q, alpha, check } => match (check, n) {
            (Some(k), _) => println!("{}", cmd_check(&k)),
            (None, Some(n)) => println!("{}", cmd_gains(n, q.as_deref(), alpha)?),
            (None, None) => unreachable!("clap requires --n or --check"),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qcollapse_cli::run::execute_run;
use qcollapse_cli::stats::{binomial, chi_square, two_sample, Verdict};
use qcollapse_cli::transition::transition_report;
use qcollapse_cli::CliError;

/// Collapse-dynamics scenario runner and analysis tools.
#[derive(Parser)]
#[command(name = "qcollapse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON scenario and write the CSV/JSON artifacts.
    Run {
        /// Scenario config file.
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hypothesis tests over emitted CSV columns; the verdict is a JSON
    /// line on stdout and the exit code stays 0 either way.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Powers-of-ten arithmetic for the scale where collapse must set in.
    ReportTransition(TransitionArgs),
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Pearson chi-square of a sample column against a tabulated density.
    ChiSquare {
        /// CSV with the observed samples.
        observed: PathBuf,
        /// CSV with `position,density` columns on a uniform grid.
        #[arg(long)]
        expected: PathBuf,
        #[arg(long, default_value = "center")]
        column: String,
        #[arg(long, default_value_t = 0.01)]
        significance: f64,
    },
    /// Two-sided z-test: fraction of samples below a split point.
    Binomial {
        /// CSV with the observed samples.
        events: PathBuf,
        /// Samples strictly below this value count as successes.
        #[arg(long)]
        split: f64,
        /// Hypothesized success probability.
        #[arg(long)]
        expected: f64,
        #[arg(long, default_value = "center")]
        column: String,
        /// Default is the two-sided 3-sigma level.
        #[arg(long, default_value_t = 0.0027)]
        significance: f64,
    },
    /// Welch's t-test on one column of two files.
    TwoSample {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, default_value_t = 0.01)]
        significance: f64,
    },
}

#[derive(Args)]
struct TransitionArgs {
    /// Particle count M of the body.
    #[arg(short = 'M', long = "M")]
    m: u32,
    /// Occupied-cell exponent each particle needs: 10^e cells.
    #[arg(short, long)]
    e: u32,
    /// Spatial dimensions per particle.
    #[arg(long, default_value_t = 3)]
    dims: u32,
    /// Cell size as a power of ten in centimetres.
    #[arg(long = "cell-exp", default_value_t = -15, allow_hyphen_values = true)]
    cell_exponent_cm: i64,
    /// Emit the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let outcome = execute_run(&config, seed, out)?;
            println!(
                "wrote {} ({} trajectories, {} events)",
                outcome.out_dir.display(),
                outcome.trajectories,
                outcome.events
            );
            Ok(())
        }
        Command::Stats(cmd) => {
            let verdict: Verdict = match cmd {
                StatsCommand::ChiSquare { observed, expected, column, significance } => {
                    chi_square(&observed, &expected, &column, significance)?
                }
                StatsCommand::Binomial { events, split, expected, column, significance } => {
                    binomial(&events, &column, split, expected, significance)?
                }
                StatsCommand::TwoSample { a, b, column, significance } => {
                    two_sample(&a, &b, &column, significance)?
                }
            };
            println!("{}", verdict.to_json());
            Ok(())
        }
        Command::ReportTransition(args) => {
            let report = transition_report(args.m, args.e, args.dims, args.cell_exponent_cm)?;
            if args.json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
            Ok(())
        }
    }
}

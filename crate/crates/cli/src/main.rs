use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use floquet_cli::{cmd_converge, cmd_decompose, cmd_diagonalize, cmd_lemmas, init_threads, parse_cutoffs};
use floquet_cli::{report_exit_code, CliError, DecompositionReport};

#[derive(Parser)]
#[command(name = "floquet", version, about = "Monodromy decomposition and diagonalization checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate, split the monodromy and fit the residual decay
    Decompose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the full chain through the middle-block diagonalization
    Diagonalize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Scan the lattice inequalities
    Lemmas {
        #[arg(long)]
        range: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare results across ascending cutoffs
    Converge {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated cutoffs, e.g. 32,48,64
        #[arg(long = "K")]
        cutoffs: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<DecompositionReport, CliError> {
    match cli.command {
        Command::Decompose { config, out, csv } => cmd_decompose(&config, out.as_deref(), csv.as_deref()),
        Command::Diagonalize { config, out, csv } => cmd_diagonalize(&config, out.as_deref(), csv.as_deref()),
        Command::Lemmas { range, out } => cmd_lemmas(range, out.as_deref()),
        Command::Converge { config, cutoffs, out } => cmd_converge(&config, &parse_cutoffs(&cutoffs)?, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_threads();
    match run(cli) {
        Ok(report) => {
            for warning in &report.warnings {
                eprintln!("warning: {warning}");
            }
            for failed in report.failures() {
                eprintln!("FAIL {}: value {:?}, limit {:e}", failed.name, failed.value, failed.limit);
            }
            ExitCode::from(report_exit_code(&report))
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

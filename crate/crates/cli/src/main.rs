use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lrlgf_cli::config::{ExperimentConfig, DATA_DIR_ENV};
use lrlgf_cli::experiment::{compare_regularizers, run_experiment};
use lrlgf_cli::fetch::{fetch_mnist, DEFAULT_MIRROR};
use lrlgf_cli::results::{render_summary, summarize, ResultTable};
use lrlgf_cli::CliError;
use lrlgf_core::rts::run_smoother;
use lrlgf_core::trace::{read_trace, write_smoothed};

#[derive(Parser)]
#[command(name = "lrlgf", version, about = "Low-rank Laplace-Gaussian filtering and smoothing for sequential tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the filter (and smoother, per the config's mode) over every seed.
    Run { config: PathBuf },
    /// Run the filter and the no-regularizer baseline on identical tasks.
    Compare { config: PathBuf },
    /// Smooth a saved filter trace.
    Smooth {
        trace_dir: PathBuf,
        /// Rank of the smoothed precision; defaults to the filter rank.
        #[arg(long)]
        rank: Option<usize>,
        /// Output directory; defaults to `<trace_dir>/smoothed`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the aggregates of a results directory.
    Summarize { results_dir: PathBuf },
    /// Download and verify the MNIST IDX files.
    FetchMnist {
        /// Target directory; defaults to $LRLGF_DATA_DIR or data/mnist.
        dir: Option<PathBuf>,
        /// HTTP mirror or local directory holding the (gzipped) files.
        #[arg(long, default_value = DEFAULT_MIRROR)]
        from: String,
    },
}

fn report(table: &ResultTable) -> Result<(), CliError> {
    let summary = lrlgf_cli::results::summarize_table(table);
    print!("{}", render_summary(&summary));
    if table.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{} seed arm(s) failed", table.failures.len())))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => report(&run_experiment(&ExperimentConfig::load(&config)?)?),
        Command::Compare { config } => report(&compare_regularizers(&ExperimentConfig::load(&config)?)?),
        Command::Smooth { trace_dir, rank, out } => {
            if !trace_dir.join("meta.json").is_file() {
                return Err(CliError::Config(format!("{} is not a trace directory", trace_dir.display())));
            }
            let (meta, trace) = read_trace(&trace_dir)?;
            let smoothed = run_smoother(&trace, rank.unwrap_or(trace.config.rank))?;
            let out = out.unwrap_or_else(|| trace_dir.join("smoothed"));
            write_smoothed(&out, &trace, &smoothed, meta.extra)?;
            println!("wrote {} smoothed beliefs to {}", smoothed.len(), out.display());
            Ok(())
        }
        Command::Summarize { results_dir } => {
            print!("{}", render_summary(&summarize(&results_dir)?));
            Ok(())
        }
        Command::FetchMnist { dir, from } => {
            let dir = dir
                .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("data/mnist"));
            fetch_mnist(&dir, &from)?;
            println!("MNIST ready in {}", dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

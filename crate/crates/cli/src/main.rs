use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "z2lgt", version, about = "Monitored dynamics of the 1+1D Z2 gauge theory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct ConfigArgs {
    /// key = value configuration file; omitted keys take their defaults
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a single key, e.g. `--set gamma=0.4` (repeatable)
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Axis {
    Gamma,
    X,
    L,
}

#[derive(Subcommand)]
enum Command {
    /// Run one evolution and write manifest.cfg and series.csv
    Evolve {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run a family of evolutions along one parameter axis
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
        /// Worker threads (default: available hardware threads)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fit saturation values from a sweep summary
    Fit {
        /// Summary CSV written by `sweep`
        summary: PathBuf,
        /// exp_linear (a·e^(-bγ) + cγ + d), exp_const (a·e^(-bγ) + c) or quadratic
        #[arg(long)]
        family: String,
        /// Summary column used as the dependent variable
        #[arg(long, default_value = "saturation")]
        column: String,
        /// Write JSON here instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare the MPS engine against the exact Trotter engine
    Benchmark {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Extra MPS runs at these cutoffs, compared pointwise
        #[arg(long, value_delimiter = ',')]
        cutoffs: Vec<f64>,
        #[arg(long, default_value_t = 1e-4)]
        cutoff_tol: f64,
    },
    /// Recompute a stored run and check Gauss's law along it
    CheckGauss {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Evolve { cfg } => commands::evolve(&cfg),
        Command::Sweep { cfg, axis, values, threads } => commands::sweep(&cfg, axis, &values, threads),
        Command::Fit { summary, family, column, output } => {
            commands::fit(&summary, &family, &column, output.as_deref())
        }
        Command::Benchmark { cfg, tol, cutoffs, cutoff_tol } => commands::benchmark(&cfg, tol, &cutoffs, cutoff_tol),
        Command::CheckGauss { run_dir, tol } => commands::check_gauss(&run_dir, tol),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

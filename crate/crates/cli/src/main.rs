use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use onebit_mimo::experiments::{emit_csv, figure_spec, run_experiment, write_csv, ExperimentSpec, FigureScale};
use onebit_mimo::par::{threads_from_env, with_threads, THREADS_ENV};

#[derive(Parser)]
#[command(
    name = "simulate",
    version,
    about = "Doubly 1-bit quantized massive MIMO link simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a JSON spec file.
    Run {
        spec: PathBuf,
        /// Write the CSV here instead of the spec's output-path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a spec file without running it.
    Validate { spec: PathBuf },
    /// Run the preset sweep behind one of the figures.
    Figures {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
        figure: u8,
        #[arg(long, default_value = "reduced")]
        scale: FigureScale,
        /// Print the preset spec as JSON instead of running it.
        #[arg(long)]
        print_spec: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { spec, output } => {
            let spec = ExperimentSpec::from_path(&spec)?;
            run(spec, output)
        }
        Command::Validate { spec: path } => {
            let spec = ExperimentSpec::from_path(&path)?;
            let infeasible = spec.validate()?;
            let total = spec.grid_points().len();
            if infeasible.is_empty() {
                println!("{}: ok ({total} grid points)", path.display());
                return Ok(ExitCode::SUCCESS);
            }
            for bad in &infeasible {
                println!("infeasible: {}: {}", bad.point, bad.reason);
            }
            println!("{}: {} infeasible grid point(s)", path.display(), infeasible.len());
            Ok(ExitCode::FAILURE)
        }
        Command::Figures {
            figure,
            scale,
            print_spec,
            output,
        } => {
            let Some(spec) = figure_spec(figure, scale) else {
                bail!("no preset for figure {figure}");
            };
            if print_spec {
                println!("{}", serde_json::to_string_pretty(&spec)?);
                return Ok(ExitCode::SUCCESS);
            }
            run(spec, output)
        }
    }
}

fn run(spec: ExperimentSpec, output: Option<PathBuf>) -> Result<ExitCode> {
    let threads = threads_from_env();
    if std::env::var_os(THREADS_ENV).is_some() && threads.is_none() {
        bail!("{THREADS_ENV} must be a positive integer");
    }
    let result = with_threads(threads, || run_experiment(&spec))?;
    match output.or(spec.output_path.clone()) {
        Some(path) => {
            let written = emit_csv(&result, &path)?;
            for p in written {
                eprintln!("wrote {}", p.display());
            }
        }
        None => write_csv(&result, io::stdout().lock()).context("writing CSV to stdout")?,
    }
    for e in &result.errors {
        eprintln!("skipped: {e}");
    }
    let failed_checks = result.checks.iter().filter(|c| !c.pass).count();
    if failed_checks > 0 {
        eprintln!("{failed_checks} validation check(s) failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

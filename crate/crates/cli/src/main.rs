//! `optiflow`: interpolate between two grayscale images by a fixed-point
//! transport solve, run the linear-blend baseline, generate the bump test
//! pair and inspect finished runs.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "optiflow", version, about = "Transport-based image interpolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fixed-point transport between two PGM images.
    Interpolate(RunArgs),
    /// Linear blend with the unweighted potential velocity.
    Baseline(RunArgs),
    /// Write the smooth-bump image pair as 16-bit PGMs.
    BumpGen(BumpArgs),
    /// Energy and mass report of a finished run, as JSON.
    Diagnose(DiagnoseArgs),
    /// Iteration counts of the bump problem across background levels, as JSON.
    SweepBeta(SweepArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Backend {
    Characteristics,
    Lsq,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Pgm,
    Csv,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    rho0: std::path::PathBuf,
    #[arg(long)]
    rho1: std::path::PathBuf,
    #[arg(long, value_enum, default_value = "characteristics")]
    backend: Backend,
    /// Time elements.
    #[arg(long, default_value_t = 60)]
    nt: usize,
    /// Fixed-point tolerance on the relative space-time change.
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    /// Density of pixel value 0. Defaults to the range recorded in the
    /// image header, else 0.05.
    #[arg(long)]
    lower: Option<f64>,
    /// Density of the maximal pixel value. Defaults to the range recorded in
    /// the image header, else 1.05.
    #[arg(long)]
    upper: Option<f64>,
    /// Frame file format.
    #[arg(long, value_enum, default_value = "pgm")]
    format: Format,
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args, Debug)]
struct BumpArgs {
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.3)]
    radius: f64,
    /// Elements per axis; the images have `nx + 1` pixels per side.
    #[arg(long, default_value_t = 40)]
    nx: usize,
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Output directory of an `interpolate` or `baseline` run.
    #[arg(long)]
    run: std::path::PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.2,0.1,0.05")]
    betas: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 40)]
    nx: usize,
    #[arg(long, default_value_t = 60)]
    nt: usize,
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
    #[arg(long, value_enum, default_value = "characteristics")]
    backend: Backend,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = commands::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Interpolate(a) => commands::run(a, false),
        Command::Baseline(a) => commands::run(a, true),
        Command::BumpGen(a) => commands::bump_gen(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::SweepBeta(a) => commands::sweep(a),
    };
    match result {
        Ok(commands::Status::Converged) => ExitCode::SUCCESS,
        Ok(commands::Status::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

use std::error::Error as StdError;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use optiflow::bump::{generate_bump_pair, BumpParams};
use optiflow::diagnostics::{diagnose as diagnose_solution, DiagnosticsReport};
use optiflow::io::{save_frames, FrameFormat, InputRecord, PgmImage, RunManifest, SolutionFile, Timings};
use optiflow::pipeline::{dacorogna_moser, fixed_point_transport, Method, SolverConfig, TransportBackend};
use optiflow::{Error, Grid2D};

use crate::{Backend, BumpArgs, DiagnoseArgs, Format, RunArgs, SweepArgs};

pub type CliResult = Result<Status, Box<dyn StdError>>;

pub enum Status {
    Converged,
    NotConverged,
}

impl Status {
    fn from(converged: bool) -> Self {
        if converged {
            Status::Converged
        } else {
            Status::NotConverged
        }
    }
}

const THREADS_VAR: &str = "OPTIFLOW_THREADS";
/// Header comment recording the density range of a generated image.
const RANGE_TAG: &str = "optiflow-range";
const DEFAULT_RANGE: [f64; 2] = [0.05, 1.05];
const FRAME_MAXVAL: u16 = 65535;

pub fn configure_threads() -> Result<(), Box<dyn StdError>> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn backend(b: Backend) -> TransportBackend {
    match b {
        Backend::Characteristics => TransportBackend::Characteristics,
        Backend::Lsq => TransportBackend::SpacetimeLsq,
    }
}

fn declared_range(bytes: &[u8]) -> Option<[f64; 2]> {
    PgmImage::header_comments(bytes).ok()?.iter().find_map(|c| {
        let mut it = c.strip_prefix(RANGE_TAG)?.split_whitespace();
        let lo = it.next()?.parse().ok()?;
        let hi = it.next()?.parse().ok()?;
        Some([lo, hi])
    })
}

fn read_input(path: &Path) -> Result<(Vec<u8>, InputRecord), Error> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let digest = Sha256::digest(&bytes);
    let record = InputRecord {
        path: path.display().to_string(),
        sha256: format!("{digest:x}"),
    };
    Ok((bytes, record))
}

/// Explicit flags win; otherwise both headers must agree on a recorded
/// range, else the default floor map applies.
fn intensity_range(args: &RunArgs, b0: &[u8], b1: &[u8]) -> [f64; 2] {
    let declared = match (declared_range(b0), declared_range(b1)) {
        (Some(a), Some(b)) if a == b => Some(a),
        _ => None,
    };
    let base = declared.unwrap_or(DEFAULT_RANGE);
    [args.lower.unwrap_or(base[0]), args.upper.unwrap_or(base[1])]
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn run(args: RunArgs, baseline: bool) -> CliResult {
    let start = Instant::now();
    let (b0, rec0) = read_input(&args.rho0)?;
    let (b1, rec1) = read_input(&args.rho1)?;
    let range = intensity_range(&args, &b0, &b1);
    let r0 = PgmImage::parse(&b0).and_then(|p| p.to_field(range[0], range[1]))?;
    let r1 = PgmImage::parse(&b1).and_then(|p| p.to_field(range[0], range[1]))?;

    let cfg = SolverConfig {
        nt: args.nt,
        tol_outer: args.tol,
        max_outer: args.max_outer,
        transport_backend: backend(args.backend),
        ..Default::default()
    };
    cfg.validate()?;
    let solve_start = Instant::now();
    let sol = if baseline {
        dacorogna_moser(&r0, &r1, &cfg)?
    } else {
        fixed_point_transport(&r0, &r1, &cfg)?
    };
    let solve_seconds = solve_start.elapsed().as_secs_f64();

    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let format = match args.format {
        Format::Pgm => FrameFormat::Pgm {
            lower: range[0],
            upper: range[1],
            maxval: FRAME_MAXVAL,
        },
        Format::Csv => FrameFormat::Csv,
    };
    save_frames(&sol.rho, args.out.join("frames"), format)?;
    SolutionFile::from_solution(&sol).write(args.out.join("solution.json"))?;
    let command = if baseline { "baseline" } else { "interpolate" };
    let timings = Timings {
        solve_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    let manifest = RunManifest::new(command, &cfg, range, vec![rec0, rec1], &sol, timings);
    write_file(&args.out.join("manifest.json"), manifest.to_json()?)?;

    let r = &sol.report;
    eprintln!(
        "{command}: converged {} after {} iteration(s), last residual {:.3e}, mass drift {:.2e}",
        r.converged,
        r.iterations,
        r.outer_residuals.last().copied().unwrap_or(0.0),
        r.mass_drift
    );
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Status::from(r.converged))
}

#[derive(Serialize)]
struct BumpSidecar {
    params: BumpParams,
    nx: usize,
    intensity_range: [f64; 2],
    maxval: u16,
    files: [&'static str; 2],
}

pub fn bump_gen(args: BumpArgs) -> CliResult {
    let params = BumpParams {
        beta: args.beta,
        alpha: args.alpha,
        radius: args.radius,
        ..Default::default()
    };
    let grid = Grid2D::unit_square(args.nx)?;
    let (r0, r1) = generate_bump_pair(&grid, &params)?;
    let range = [params.beta, params.beta + params.alpha];
    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let comment = vec![format!("{RANGE_TAG} {} {}", range[0], range[1])];
    let files = ["rho0.pgm", "rho1.pgm"];
    for (name, field) in files.iter().zip([&r0, &r1]) {
        let img = PgmImage::from_field(field, range[0], range[1], FRAME_MAXVAL)?;
        write_file(&args.out.join(name), img.to_p5_with_comments(&comment))?;
    }
    let sidecar = BumpSidecar {
        params,
        nx: args.nx,
        intensity_range: range,
        maxval: FRAME_MAXVAL,
        files,
    };
    write_file(&args.out.join("bump.json"), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(Status::Converged)
}

#[derive(Serialize)]
struct DiagnoseOutput {
    method: Method,
    converged: bool,
    iterations: usize,
    #[serde(flatten)]
    report: DiagnosticsReport,
}

pub fn diagnose(args: DiagnoseArgs) -> CliResult {
    let sol = SolutionFile::read(args.run.join("solution.json"))?.into_solution()?;
    let report = diagnose_solution(&sol, args.tol)?;
    let out = DiagnoseOutput {
        method: sol.method,
        converged: sol.report.converged,
        iterations: sol.report.iterations,
        report,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(Status::Converged)
}

#[derive(Serialize)]
struct SweepRow {
    beta: f64,
    iterations: usize,
    converged: bool,
    last_residual: f64,
    mass_drift: f64,
    solve_seconds: f64,
}

#[derive(Serialize)]
struct SweepTable {
    nx: usize,
    nt: usize,
    alpha: f64,
    tol: f64,
    rows: Vec<SweepRow>,
    /// Iteration counts never decrease along the listed backgrounds.
    non_decreasing: bool,
}

pub fn sweep(args: SweepArgs) -> CliResult {
    let grid = Grid2D::unit_square(args.nx)?;
    let cfg = SolverConfig {
        nt: args.nt,
        tol_outer: args.tol,
        transport_backend: backend(args.backend),
        ..Default::default()
    };
    cfg.validate()?;
    let mut rows = Vec::with_capacity(args.betas.len());
    for &beta in &args.betas {
        let params = BumpParams {
            beta,
            alpha: args.alpha,
            ..Default::default()
        };
        let (r0, r1) = generate_bump_pair(&grid, &params)?;
        let start = Instant::now();
        let sol = fixed_point_transport(&r0, &r1, &cfg)?;
        let r = sol.report;
        eprintln!("beta {beta}: {} iteration(s), converged {}", r.iterations, r.converged);
        rows.push(SweepRow {
            beta,
            iterations: r.iterations,
            converged: r.converged,
            last_residual: r.outer_residuals.last().copied().unwrap_or(0.0),
            mass_drift: r.mass_drift,
            solve_seconds: start.elapsed().as_secs_f64(),
        });
    }
    let table = SweepTable {
        nx: args.nx,
        nt: args.nt,
        alpha: args.alpha,
        tol: args.tol,
        non_decreasing: rows.windows(2).all(|w| w[1].iterations >= w[0].iterations),
        rows,
    };
    println!("{}", serde_json::to_string_pretty(&table)?);
    Ok(Status::from(table.rows.iter().all(|r| r.converged)))
}

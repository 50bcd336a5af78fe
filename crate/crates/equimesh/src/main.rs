use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use equimesh::cli::{
    cmd_solve, cmd_sweep, cmd_table1, exit_code, Method, Overrides, RunConfig, SweepAxis,
};
use equimesh::Error;

/// Adaptive 2D mesh generation by local equidistribution, solved on one
/// domain or by overlapping Schwarz iterations over strips.
#[derive(Parser)]
#[command(name = "equimesh", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and export mesh, history, and quality files.
    Solve(SolveArgs),
    /// Reproduce the three-method mesh-quality table (12x12, overlap 2, p=2).
    Table1(Table1Args),
    /// Run a sweep over overlap widths or Robin parameters.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file mirroring the run configuration; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Test problem name (boundary-layer, constant).
    #[arg(long)]
    problem: Option<String>,
    /// Nodes per direction (sets both unless --n-eta is given).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_eta: Option<usize>,
    /// Relaxation parameter in [0,1].
    #[arg(long)]
    a: Option<f64>,
    /// Gradient regularization, >= 0.
    #[arg(long)]
    b: Option<f64>,
    /// one-dim-ep or orthogonality.
    #[arg(long)]
    boundary_mode: Option<String>,
    /// single, classical, linear-robin, nonlinear-robin.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    n_sub: Option<usize>,
    /// Shared grid columns per adjacent strip pair.
    #[arg(long)]
    overlap: Option<usize>,
    /// Robin parameter (required for the Robin methods).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    outer_tol: Option<f64>,
    #[arg(long)]
    newton_tol: Option<f64>,
    /// Solve subdomains serially instead of concurrently.
    #[arg(long)]
    serial: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct Table1Args {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sweep axis: overlap or p.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values, e.g. 2,4,6,8 or 1,2,3.
    #[arg(long)]
    values: String,
    /// For the p axis: comma-separated kinds (linear,nonlinear).
    #[arg(long, default_value = "linear,nonlinear")]
    kinds: String,
}

fn build_config(common: &CommonArgs) -> Result<RunConfig, Error> {
    let base = match &common.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        problem: common.problem.clone(),
        n_xi: common.n,
        n_eta: common.n_eta,
        a: common.a,
        b: common.b,
        boundary_mode: common.boundary_mode.as_deref().map(str::parse).transpose()?,
        method: common.method.as_deref().map(str::parse).transpose()?,
        n_sub: common.n_sub,
        overlap_points: common.overlap,
        p: common.p,
        max_outer: common.max_outer,
        outer_tol: common.outer_tol,
        newton_tol: common.newton_tol,
        serial: common.serial,
        out_dir: common.out.clone(),
    };
    Ok(base.apply(&overrides))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, Error> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::Config(format!("{what}: cannot parse {s:?}")))
        })
        .collect()
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => {
            let config = build_config(&args.common)?;
            let summary = cmd_solve(&config)?;
            if !summary.converged {
                return Err(Error::NonConvergence {
                    iterations: summary.outer_iterations,
                    best_residual: f64::NAN,
                    residual_history: Vec::new(),
                    best_state: Vec::new(),
                });
            }
            Ok(())
        }
        Command::Table1(args) => {
            cmd_table1(&args.out)?;
            Ok(())
        }
        Command::Sweep(args) => {
            let config = build_config(&args.common)?;
            let axis = match args.axis.as_str() {
                "overlap" => SweepAxis::Overlap(parse_list(&args.values, "values")?),
                "p" => SweepAxis::P {
                    values: parse_list(&args.values, "values")?,
                    kinds: args
                        .kinds
                        .split(',')
                        .map(|s| s.trim().parse::<Method>())
                        .collect::<Result<Vec<_>, _>>()?,
                },
                other => {
                    return Err(Error::Config(format!(
                        "axis: expected overlap or p, got {other:?}"
                    )))
                }
            };
            cmd_sweep(&config, &axis)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}

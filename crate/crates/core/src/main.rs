//! Command-line front end: load quote files, dispatch to the bound engines,
//! emit JSON or CSV reports.
//!
//! Exit codes: 0 success, 1 error, 2 arbitrage detected by `check`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mgbounds::arbitrage::check_no_arbitrage;
use mgbounds::basket::{bound_basket_both, BasketInstance};
use mgbounds::bounds1d::{bound_payoff_1d, Payoff1D};
use mgbounds::bounds2d::{
    bound_payoff_2d_approx, bound_payoff_2d_exact, Payoff2D, DEFAULT_VAR_BUDGET,
};
use mgbounds::quotes::{read_discounts_csv, read_quotes_csv, read_spots_csv, NormalizedSurface};
use mgbounds::report::{sweep_csv, Report};
use mgbounds::Error;

#[derive(Parser)]
#[command(name = "mgbounds", version, about = "No-arbitrage price bounds on piecewise-linear payoffs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct SurfaceArgs {
    /// quotes CSV: asset,maturity,strike,price
    #[arg(long, env = "MB_QUOTES")]
    quotes: PathBuf,
    /// spots CSV: asset,spot
    #[arg(long, env = "MB_SPOTS")]
    spots: PathBuf,
    /// discount factors CSV: maturity,df (defaults to 1 everywhere)
    #[arg(long, env = "MB_DISCOUNTS")]
    discounts: Option<PathBuf>,
    #[arg(long, env = "MB_ASSET")]
    asset: String,
    /// tolerance for consistency checks
    #[arg(long, env = "MB_TOL", default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, env = "MB_FORMAT", value_enum, default_value = "json")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Joint no-arbitrage check for one asset
    Check(CheckCmd),
    /// One-asset bounds on a piecewise-linear payoff
    Bound1d(Bound1dCmd),
    /// Two-asset bounds via the exact path LP
    Bound2dExact(Bound2dCmd),
    /// Two-asset bounds via the ε-lattice LP
    Bound2dApprox(Bound2dCmd),
    /// Single-period basket bounds from other basket prices
    Basket(BasketCmd),
    /// Strike sweep of one-asset call bounds
    Sweep(SweepCmd),
}

#[derive(Args)]
struct CheckCmd {
    #[command(flatten)]
    surface: SurfaceArgs,
}

#[derive(Args)]
struct Bound1dCmd {
    #[command(flatten)]
    surface: SurfaceArgs,
    /// target maturity t*
    #[arg(long, env = "MB_MATURITY")]
    maturity: u32,
    /// payoff JSON: {"breakpoints": [[x, value], …], "terminal_slope": s}
    #[arg(long, env = "MB_PAYOFF")]
    payoff: PathBuf,
    /// support bound (default: twice the largest strike/witness bound)
    #[arg(long = "L", env = "MB_L")]
    l_bound: Option<f64>,
}

#[derive(Args)]
struct Bound2dCmd {
    #[command(flatten)]
    surface: SurfaceArgs,
    #[arg(long, env = "MB_ASSET2")]
    asset2: String,
    #[arg(long, env = "MB_MATURITY")]
    maturity: u32,
    /// payoff JSON: {"alpha", "beta", "k"} or {"pieces", "lines"}
    #[arg(long, env = "MB_PAYOFF")]
    payoff: PathBuf,
    #[arg(long = "L", env = "MB_L")]
    l_bound: Option<f64>,
    /// lattice step (approximate solver only)
    #[arg(long, env = "MB_EPS", default_value_t = 0.25)]
    eps: f64,
    #[arg(long, env = "MB_BUDGET", default_value_t = DEFAULT_VAR_BUDGET)]
    budget: usize,
    /// keep only lattice nodes near graph edges
    #[arg(long, env = "MB_RESTRICTED_LATTICE", default_value_t = false)]
    restricted_lattice: bool,
}

#[derive(Args)]
struct BasketCmd {
    /// instance JSON: {n, L, constraints: [{weights, strike, price}…],
    /// target: {weights, strike}}
    #[arg(long, env = "MB_INSTANCE")]
    instance: PathBuf,
    #[arg(long, env = "MB_FORMAT", value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    surface: SurfaceArgs,
    #[arg(long, env = "MB_MATURITY")]
    maturity: u32,
    /// comma-separated call strikes
    #[arg(long, env = "MB_GRID", value_delimiter = ',', num_args = 0..)]
    grid: Vec<f64>,
    #[arg(long = "L", env = "MB_L")]
    l_bound: Option<f64>,
    /// worker pool size (0 = all cores)
    #[arg(long, env = "MB_JOBS", default_value_t = 0)]
    jobs: usize,
}

fn load_surface_files(a: &SurfaceArgs) -> Result<NormalizedSurface, Error> {
    let quotes = read_quotes_csv(&a.quotes)?;
    let spots = read_spots_csv(&a.spots)?;
    let discounts = match &a.discounts {
        Some(p) => read_discounts_csv(p)?,
        None => quotes.iter().map(|q| (q.maturity, 1.0)).collect(),
    };
    Ok(mgbounds::quotes::load_surface(&quotes, &spots, &discounts)?.normalize())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn surface_inputs(mut report: Report, a: &SurfaceArgs) -> Result<Report, Error> {
    report = report.with_input("quotes", &a.quotes)?.with_input("spots", &a.spots)?;
    if let Some(d) = &a.discounts {
        report = report.with_input("discounts", d)?;
    }
    Ok(report)
}

fn default_l(surface: &NormalizedSurface, asset: &str, tol: f64) -> Result<f64, Error> {
    let wit = mgbounds::arbitrage::witness_envelopes(surface, asset, tol)?;
    Ok(mgbounds::arbitrage::default_support_bound(
        surface,
        asset,
        wit.support_bound,
    ))
}

fn emit(report: &Report, format: Format) {
    match format {
        Format::Json => print!("{}", report.to_json()),
        Format::Csv => print!("{}", report.to_csv()),
    }
}

fn run_check(cmd: &CheckCmd) -> Result<ExitCode, Error> {
    let surface = load_surface_files(&cmd.surface)?;
    let rep = check_no_arbitrage(&surface, &cmd.surface.asset, cmd.surface.tol)?;
    let mut out = surface_inputs(Report::new("check"), &cmd.surface)?;
    out.status = if rep.consistent { "ok" } else { "arbitrage" }.into();
    out.details = serde_json::to_value(&rep.violations).expect("violations serialize");
    emit(&out, cmd.surface.format);
    Ok(if rep.consistent {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn run_bound1d(cmd: &Bound1dCmd) -> Result<ExitCode, Error> {
    let surface = load_surface_files(&cmd.surface)?;
    let raw: Payoff1D = read_json(&cmd.payoff)?;
    let payoff = Payoff1D::new(raw.breakpoints, raw.terminal_slope)?;
    let l = match cmd.l_bound {
        Some(l) => l,
        None => {
            let base = default_l(&surface, &cmd.surface.asset, cmd.surface.tol)?;
            payoff
                .kinks()
                .into_iter()
                .fold(base, |acc, k| acc.max(2.0 * k))
        }
    };
    let r = bound_payoff_1d(
        &surface,
        &cmd.surface.asset,
        cmd.maturity,
        &payoff,
        l,
        cmd.surface.tol,
    )?;
    let mut out = surface_inputs(Report::new("bound1d"), &cmd.surface)?
        .with_input("payoff", &cmd.payoff)?;
    out.lower = Some(r.lower);
    out.upper = Some(r.upper);
    out.details = json!({
        "witness_lower": r.witness_lower,
        "witness_upper": r.witness_upper,
    });
    out.diagnostics = json!({
        "n_vars": r.n_vars,
        "n_rows": r.n_rows,
        "L": l,
        "support_size": r.support.len(),
        "max_residual": r.witness_lower.max_residual.max(r.witness_upper.max_residual),
    });
    emit(&out, cmd.surface.format);
    Ok(ExitCode::SUCCESS)
}

fn run_bound2d(cmd: &Bound2dCmd, exact: bool) -> Result<ExitCode, Error> {
    let surface = load_surface_files(&cmd.surface)?;
    let payoff: Payoff2D = read_json(&cmd.payoff)?;
    let l = match cmd.l_bound {
        Some(l) => l,
        None => default_l(&surface, &cmd.surface.asset, cmd.surface.tol)?
            .max(default_l(&surface, &cmd.asset2, cmd.surface.tol)?),
    };
    let name = if exact { "bound2d-exact" } else { "bound2d-approx" };
    let r = if exact {
        bound_payoff_2d_exact(
            &surface,
            &cmd.surface.asset,
            &cmd.asset2,
            cmd.maturity,
            &payoff,
            l,
            cmd.budget,
            cmd.surface.tol,
        )?
    } else {
        bound_payoff_2d_approx(
            &surface,
            &cmd.surface.asset,
            &cmd.asset2,
            cmd.maturity,
            &payoff,
            l,
            cmd.eps,
            cmd.restricted_lattice,
            cmd.budget,
            cmd.surface.tol,
        )?
    };
    let mut out = surface_inputs(Report::new(name), &cmd.surface)?
        .with_input("payoff", &cmd.payoff)?;
    out.lower = Some(r.lower);
    out.upper = Some(r.upper);
    out.details = json!({
        "witness_lower": r.witness_lower,
        "witness_upper": r.witness_upper,
    });
    out.diagnostics = json!({
        "n_vars": r.n_vars,
        "n_rows": r.n_rows,
        "L": l,
        "eps": if exact { None } else { Some(cmd.eps) },
        "bracket": r.bracket,
        "max_residual": r.witness_lower.max_residual.max(r.witness_upper.max_residual),
    });
    emit(&out, cmd.surface.format);
    Ok(ExitCode::SUCCESS)
}

fn run_basket(cmd: &BasketCmd) -> Result<ExitCode, Error> {
    let instance: BasketInstance = read_json(&cmd.instance)?;
    let (lo, hi) = bound_basket_both(&instance)?;
    let mut out = Report::new("basket").with_input("instance", &cmd.instance)?;
    out.lower = Some(lo.value);
    out.upper = Some(hi.value);
    out.details = json!({
        "witness_lower": lo.witness,
        "witness_upper": hi.witness,
    });
    out.diagnostics = json!({
        "n_vertices": lo.n_vertices,
        "max_residual": lo.max_residual.max(hi.max_residual),
    });
    emit(&out, cmd.format);
    Ok(ExitCode::SUCCESS)
}

fn run_sweep(cmd: &SweepCmd) -> Result<ExitCode, Error> {
    if cmd.grid.is_empty() {
        return Err(Error::EmptyInput("sweep needs a nonempty strike grid".into()));
    }
    let surface = load_surface_files(&cmd.surface)?;
    let l = match cmd.l_bound {
        Some(l) => l,
        None => cmd
            .grid
            .iter()
            .fold(default_l(&surface, &cmd.surface.asset, cmd.surface.tol)?, |acc, &k| {
                acc.max(2.0 * k)
            }),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cmd.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    // rows computed in parallel, emitted in grid order
    let rows: Vec<Result<(f64, f64, f64), Error>> = pool.install(|| {
        use rayon::prelude::*;
        cmd.grid
            .par_iter()
            .map(|&k| {
                let r = bound_payoff_1d(
                    &surface,
                    &cmd.surface.asset,
                    cmd.maturity,
                    &Payoff1D::call(k),
                    l,
                    cmd.surface.tol,
                )?;
                Ok((k, r.lower, r.upper))
            })
            .collect()
    });
    let rows: Vec<(f64, f64, f64)> = rows.into_iter().collect::<Result<_, _>>()?;
    match cmd.surface.format {
        Format::Csv => print!("{}", sweep_csv(&rows)),
        Format::Json => {
            let mut out = surface_inputs(Report::new("sweep"), &cmd.surface)?;
            out.details = json!(rows
                .iter()
                .map(|&(k, lo, hi)| json!({"strike": k, "lower": lo, "upper": hi}))
                .collect::<Vec<_>>());
            emit(&out, Format::Json);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, result) = match &cli.command {
        Command::Check(c) => ("check", run_check(c)),
        Command::Bound1d(c) => ("bound1d", run_bound1d(c)),
        Command::Bound2dExact(c) => ("bound2d-exact", run_bound2d(c, true)),
        Command::Bound2dApprox(c) => ("bound2d-approx", run_bound2d(c, false)),
        Command::Basket(c) => ("basket", run_basket(c)),
        Command::Sweep(c) => ("sweep", run_sweep(c)),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            print!("{}", Report::error(name, &err).to_json());
            ExitCode::from(1)
        }
    }
}

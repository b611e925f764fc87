//! Batch front door: simulate, estimate, diagnose, and acf over CSV/JSON
//! files with deterministic seeding.
//!
//! Exit codes: 0 success; 1 validation or I/O failure; 2 simulate finished
//! but flagged the path unstable (output still written); 3 estimate's
//! optimizer stopped without converging (report still written).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cogarch::estimate::{gmm, GmmOptions, IncrementSeries, Objective, Recover};
use cogarch::linalg::Vec64;
use cogarch::model::{diagnose, DiagnoseOptions};
use cogarch::moments::acf_curve;
use cogarch::report::{
    check_equally_spaced, read_data_csv, read_increments_csv, write_increments_csv,
    write_trajectory_csv, DiagnoseReport, EstimateReport, TOOL_VERSION,
};
use cogarch::simulate::{
    euler_with_increments, mixed_with_increments, simulate, SamplingGrid, Scheme,
};
use cogarch::{CogarchSpec, Error};

#[derive(Parser)]
#[command(name = "cogarch", version, about = "COGARCH(p,q) simulation and estimation")]
struct Cli {
    /// RNG seed shared by every stochastic stage.
    #[arg(long, global = true, default_value_t = 12345)]
    seed: u64,
    /// Worker threads for the batched linear-algebra passes (0 = default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Suppress the stderr summary.
    #[arg(long, global = true, default_value_t = false)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a sample path and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit coefficients to an observed series by ACF-matching GMM.
    Estimate(EstimateArgs),
    /// Stationarity / nonnegativity / moment-existence diagnostics.
    Diagnose(DiagnoseArgs),
    /// Theoretical (and optionally empirical) ACF of squared increments.
    Acf(AcfArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model spec JSON file.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = "mixed")]
    scheme: String,
    /// Horizon T.
    #[arg(long)]
    terminal: f64,
    /// Number of grid steps.
    #[arg(long)]
    steps: usize,
    /// Comma-separated start state (default: stationary mean).
    #[arg(long)]
    y0: Option<String>,
    /// Drive the path with increments from this CSV instead of sampling.
    #[arg(long)]
    increments: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Omit the dL column.
    #[arg(long, default_value_t = false)]
    no_dl: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// Observed series CSV with `time,G` columns.
    #[arg(long)]
    data: PathBuf,
    /// Spec template JSON (orders, Levy family, starting coefficients).
    #[arg(long)]
    spec_template: PathBuf,
    /// Optional start JSON `{"a": [...], "b": [...]}` overriding the template.
    #[arg(long)]
    start: Option<PathBuf>,
    #[arg(long, default_value = "l2")]
    objective: String,
    /// Maximum ACF lag d (default floor(sqrt(N))).
    #[arg(long)]
    lag_max: Option<usize>,
    /// Lag width r in grid steps.
    #[arg(long, default_value_t = 1)]
    lag_width: usize,
    /// none | incr | incr+levy
    #[arg(long, default_value = "none")]
    recover: String,
    /// Independent optimizer starts.
    #[arg(long, default_value_t = 1)]
    starts: usize,
    /// Output JSON report path.
    #[arg(long)]
    out: PathBuf,
    /// Also write recovered increments here.
    #[arg(long)]
    increments_out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Monte Carlo draws for the Levy-measure integrals.
    #[arg(long, default_value_t = 1_000_000)]
    n_mc: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AcfArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Optional observed series; adds empirical columns joined on h.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    lag_max: usize,
    #[arg(long, default_value_t = 1)]
    lag_width: usize,
    /// Grid spacing when no data file fixes it.
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let code = match &cli.command {
        Command::Simulate(args) => run_simulate(&cli, args),
        Command::Estimate(args) => run_estimate(&cli, args),
        Command::Diagnose(args) => run_diagnose(&cli, args),
        Command::Acf(args) => run_acf(&cli, args),
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_spec(path: &PathBuf) -> Result<CogarchSpec, Error> {
    let f = File::open(path).map_err(|e| Error::Value(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(f).map_err(|e| Error::Value(format!("{}: {e}", path.display())))
}

fn run_simulate(cli: &Cli, args: &SimulateArgs) -> Result<ExitCode, Error> {
    let spec = load_spec(&args.spec)?;
    let scheme: Scheme = args.scheme.parse()?;
    let grid = SamplingGrid { terminal: args.terminal, n: args.steps };
    let y0 = match &args.y0 {
        Some(s) => Some(Vec64::from_vec(
            s.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Value(format!("bad y0: {e}"))))
                .collect::<Result<Vec<f64>, Error>>()?,
        )),
        None => None,
    };
    let tr = match &args.increments {
        Some(path) => {
            let dl = read_increments_csv(File::open(path)?)?;
            match scheme {
                Scheme::Euler => euler_with_increments(&spec, &grid, y0.as_ref(), &dl)?,
                Scheme::Mixed => mixed_with_increments(&spec, &grid, y0.as_ref(), &dl)?,
                Scheme::ExactCp => {
                    return Err(Error::Value(
                        "exact-cp draws its own jump times; use euler or mixed with --increments".into(),
                    ))
                }
            }
        }
        None => simulate(&spec, &grid, scheme, y0.as_ref(), cli.seed)?,
    };
    let mut out = BufWriter::new(File::create(&args.out)?);
    write_trajectory_csv(&mut out, &tr, !args.no_dl)?;
    out.flush()?;
    if !cli.quiet {
        let diag = diagnose(&spec, &DiagnoseOptions { n_mc: 100_000, seed: cli.seed, ..Default::default() });
        match diag {
            Ok(d) => eprintln!(
                "simulate: scheme={} stationary={:?} nonnegative={:?} unstable={} min_v={:.6}",
                args.scheme, d.stationary, d.nonnegative_variance, tr.unstable, tr.min_v()
            ),
            Err(e) => eprintln!("simulate: diagnostics unavailable ({e}); unstable={}", tr.unstable),
        }
    }
    Ok(if tr.unstable { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

#[derive(serde::Deserialize)]
struct StartJson {
    a: Vec<f64>,
    b: Vec<f64>,
}

fn run_estimate(cli: &Cli, args: &EstimateArgs) -> Result<ExitCode, Error> {
    let template = load_spec(&args.spec_template)?;
    let (times, g) = read_data_csv(File::open(&args.data)?)?;
    let dt = check_equally_spaced(&times)?;
    let series = IncrementSeries::new(g, dt, args.lag_width, args.lag_max)?;
    let objective: Objective = args.objective.parse()?;
    let recover = match args.recover.as_str() {
        "none" => Recover::None,
        "incr" => Recover::Increments,
        "incr+levy" | "incr-levy" => Recover::IncrementsLevy,
        other => return Err(Error::Value(format!("unknown recover mode '{other}'"))),
    };
    let start = match &args.start {
        Some(p) => {
            let s: StartJson = serde_json::from_reader(File::open(p)?)
                .map_err(|e| Error::Value(format!("start file: {e}")))?;
            Some((s.a, s.b))
        }
        None => None,
    };
    let opts = GmmOptions {
        objective,
        start,
        starts: args.starts,
        recover,
        seed: cli.seed,
        ..Default::default()
    };
    let config = serde_json::json!({
        "command": "estimate",
        "data": args.data.display().to_string(),
        "spec_template": args.spec_template.display().to_string(),
        "objective": args.objective,
        "lag_width": args.lag_width,
        "lag_max": args.lag_max,
        "recover": args.recover,
        "starts": args.starts,
        "seed": cli.seed,
        "dt": dt,
        "n_observations": series.values.len(),
    });
    let fit = gmm(series, &template, &opts)?;
    if let (Some(path), Some(incr)) = (&args.increments_out, &fit.increments) {
        let mut w = BufWriter::new(File::create(path)?);
        write_increments_csv(&mut w, incr)?;
        w.flush()?;
    }
    let report = EstimateReport::from_fit(&fit, config);
    let mut out = BufWriter::new(File::create(&args.out)?);
    serde_json::to_writer_pretty(&mut out, &report).map_err(|e| Error::Value(e.to_string()))?;
    out.flush()?;
    if !cli.quiet {
        for c in &report.coefficients {
            match c.std_error {
                Some(se) => eprintln!("{:>8} {:>14.6e}  (se {:.6})", c.name, c.estimate, se),
                None => eprintln!("{:>8} {:>14.6e}  (se n/a)", c.name, c.estimate),
            }
        }
        eprintln!("log objective: {:.6}  converged: {}", report.log_obj_value, report.converged);
    }
    Ok(if fit.converged { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn run_diagnose(cli: &Cli, args: &DiagnoseArgs) -> Result<ExitCode, Error> {
    let spec = load_spec(&args.spec)?;
    let report = diagnose(
        &spec,
        &DiagnoseOptions { n_mc: args.n_mc, seed: cli.seed, ..Default::default() },
    )?;
    let config = serde_json::json!({
        "command": "diagnose",
        "spec": args.spec.display().to_string(),
        "n_mc": args.n_mc,
        "seed": cli.seed,
    });
    let full = DiagnoseReport { version: TOOL_VERSION.into(), config, diagnostics: report };
    let mut out = BufWriter::new(File::create(&args.out)?);
    serde_json::to_writer_pretty(&mut out, &full).map_err(|e| Error::Value(e.to_string()))?;
    out.flush()?;
    if !cli.quiet {
        eprintln!(
            "diagnose: stationary={:?} nonnegative={:?}",
            full.diagnostics.stationary, full.diagnostics.nonnegative_variance
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn run_acf(_cli: &Cli, args: &AcfArgs) -> Result<ExitCode, Error> {
    let spec = load_spec(&args.spec)?;
    let lm = spec.levy().levy_moments();
    let (dt, emp): (f64, Option<(Vec<f64>, Vec<f64>)>) = match &args.data {
        Some(path) => {
            let (times, g) = read_data_csv(File::open(path)?)?;
            let dt = check_equally_spaced(&times)?;
            let series = IncrementSeries::new(g, dt, args.lag_width, Some(args.lag_max))?;
            let acf = cogarch::estimate::empirical_acf(&series)?;
            let acov = acf.gamma_hat[args.lag_width..].to_vec();
            let rho = acf.rho_hat[args.lag_width - 1..].to_vec();
            (dt, Some((acov, rho)))
        }
        None => (args.dt, None),
    };
    let curve = acf_curve(&spec, &lm, args.lag_width, args.lag_max, dt)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    match &emp {
        None => {
            writeln!(out, "h,acov,acf")?;
            for (i, h) in (curve.first_lag..=args.lag_max).enumerate() {
                writeln!(out, "{h},{},{}", curve.autocov[i], curve.autocorr[i])?;
            }
        }
        Some((acov_e, rho_e)) => {
            writeln!(out, "h,acov_model,acf_model,acov_data,acf_data")?;
            for (i, h) in (curve.first_lag..=args.lag_max).enumerate() {
                writeln!(
                    out,
                    "{h},{},{},{},{}",
                    curve.autocov[i], curve.autocorr[i], acov_e[i], rho_e[i]
                )?;
            }
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

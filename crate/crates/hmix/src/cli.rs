//! Argument parsing, logging setup and dispatch.

use std::ffi::OsString;
use std::io::{IsTerminal, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use crate::commands::{self, CoverArgs, LaplaceArgs, MixArgs, OdeArgs, RunReport};
use crate::error::CliError;
use crate::output::RunManifest;
use crate::parallel;
use crate::selftest::{self, SelftestArgs};

#[derive(Debug, Parser)]
#[command(name = "hmix", version, about = "Horocycle mixing asymptotics: ODE, Laplace expansions, covers, mixing integrals")]
pub struct Cli {
    /// Diagnostics as line-delimited JSON on stderr.
    #[arg(long, global = true)]
    pub json_logs: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HMIX_WORKERS")]
    pub workers: Option<usize>,
    /// Seed of the Monte Carlo streams.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the correlation ODE and assemble its forcing.
    Ode(OdeCli),
    /// Laplace integrals against their asymptotic expansion.
    Laplace(LaplaceCli),
    /// Spectral averages over a finite Abelian cover.
    Cover(CoverCli),
    /// The mixing integral in log t and its leading constant.
    Mix(MixCli),
    /// Closed-form checks of every module.
    Selftest(SelftestCli),
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct OdeCli {
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    n: i64,
    #[arg(long, default_value_t = 0)]
    m: i64,
    #[arg(long, default_value_t = 1.0)]
    y0_re: f64,
    #[arg(long, default_value_t = 0.0)]
    y0_im: f64,
    /// Long grids let the tail integrals of the asymptotic constants converge.
    #[arg(long, default_value_t = 1e12)]
    t_max: f64,
    #[arg(long, default_value_t = 1000)]
    steps_per_decade: usize,
    #[arg(long, default_value = "ode.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LaplaceCli {
    #[arg(long, value_parser = ["gauss1d", "gauss2d", "quartic1d", "custom-json"])]
    preset: String,
    /// Problem file for `--preset custom-json`.
    #[arg(long)]
    problem: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, default_value_t = 1e2)]
    t_min: f64,
    #[arg(long, default_value_t = 1e6)]
    t_max: f64,
    #[arg(long, default_value_t = 8)]
    points_per_decade: usize,
    #[arg(long, default_value = "laplace.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CoverCli {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated cyclic orders, one per rank.
    #[arg(long, default_value = "64,64")]
    orders: String,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value = "one", value_parser = ["one", "linear", "identity", "bump"])]
    test_fn: String,
    /// Sweep orders/16 up to orders and emit the convergence table.
    #[arg(long)]
    study: bool,
    #[arg(long, default_value = "cover.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MixCli {
    #[arg(long)]
    model: PathBuf,
    /// `const:<value>` or `json:<path>` (polynomial amplitude).
    #[arg(long, default_value = "const:1")]
    amplitude: String,
    #[arg(long, default_value_t = 1e2)]
    log_t_min: f64,
    #[arg(long, default_value_t = 1e4)]
    log_t_max: f64,
    #[arg(long, default_value_t = 8)]
    points_per_decade: usize,
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Single evaluation at t, given as a decimal literal (e.g. 1e4343).
    #[arg(long, conflicts_with = "log_t")]
    t: Option<String>,
    /// Single evaluation at log t.
    #[arg(long)]
    log_t: Option<f64>,
    #[arg(long, default_value = "mix.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelftestCli {
    #[arg(long, default_value = "selftest")]
    out_dir: PathBuf,
}

fn init_logging(json: bool) {
    use tracing_subscriber::EnvFilter;
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn"));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal());
    // a second dispatch in the same process keeps the first subscriber
    let _ = if json { builder.json().try_init() } else { builder.try_init() };
}

fn execute(cli: &Cli) -> Result<RunReport, CliError> {
    match &cli.command {
        Command::Ode(a) => commands::run_ode(&OdeArgs {
            lambda: a.lambda,
            n: a.n,
            m: a.m,
            y0: Complex64::new(a.y0_re, a.y0_im),
            t_max: a.t_max,
            steps_per_decade: a.steps_per_decade,
            out: a.out.clone(),
        }),
        Command::Laplace(a) => commands::run_laplace(&LaplaceArgs {
            preset: a.preset.clone(),
            problem: a.problem.clone(),
            order: a.order,
            t_min: a.t_min,
            t_max: a.t_max,
            points_per_decade: a.points_per_decade,
            out: a.out.clone(),
        }),
        Command::Cover(a) => commands::run_cover(&CoverArgs {
            model: a.model.clone(),
            orders: a.orders.clone(),
            epsilon: a.epsilon,
            test_fn: a.test_fn.clone(),
            study: a.study,
            out: a.out.clone(),
        }),
        Command::Mix(a) => commands::run_mix(&MixArgs {
            model: a.model.clone(),
            amplitude: a.amplitude.clone(),
            log_t_min: a.log_t_min,
            log_t_max: a.log_t_max,
            points_per_decade: a.points_per_decade,
            order: a.order,
            t: a.t.clone(),
            log_t: a.log_t,
            out: a.out.clone(),
        }),
        Command::Selftest(a) => selftest::run_selftest(&SelftestArgs { out_dir: a.out_dir.clone(), seed: cli.seed }),
    }
}

fn report_error(json_logs: bool, e: &CliError) {
    if json_logs {
        tracing::error!(exit_code = e.exit_code(), "{e}");
    } else {
        eprintln!("hmix: {e}");
    }
}

/// Runs one command line; returns the process exit code
/// (0 ok, 1 usage or configuration error, 2 failed validation).
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.json_logs);
    let workers = parallel::resolve_workers(cli.workers);
    let run = parallel::build_pool(workers).and_then(|pool| pool.install(|| execute(&cli)));
    let report = match run {
        Ok(r) => r,
        Err(e) => {
            report_error(cli.json_logs, &e);
            return e.exit_code();
        }
    };
    let manifest = RunManifest::new(report.subcommand, &report.config, cli.seed, workers, &report.outputs);
    if let Err(e) = manifest.write(&report.manifest) {
        report_error(cli.json_logs, &e);
        return e.exit_code();
    }
    let mut stdout = std::io::stdout().lock();
    let _ = serde_json::to_writer_pretty(&mut stdout, &report.summary);
    let _ = writeln!(stdout);
    if report.failures.is_empty() {
        0
    } else {
        for f in &report.failures {
            report_error(cli.json_logs, &CliError::Validation(f.clone()));
        }
        2
    }
}

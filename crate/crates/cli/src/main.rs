//! `hazshift`: incremental hazard-shift effects from the command line.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use hazshift::Dgp;

mod commands;
mod output;
mod theta_arg;

#[derive(Parser, Debug)]
#[command(name = "hazshift", version)]
#[command(about = "Incremental causal effects of shifting a treatment-initiation hazard")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Worker threads for bootstrap replicates and study replications.
    #[arg(long, global = true, env = "HAZSHIFT_THREADS")]
    threads: Option<usize>,
    /// Add wall time to the JSON metadata (outputs then differ between runs).
    #[arg(long, global = true)]
    record_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate ψ(θ) on a dataset with multiplier-bootstrap intervals.
    Estimate(EstimateArgs),
    /// Generate a dataset from a simulation design.
    Simulate(SimulateArgs),
    /// Run a Monte-Carlo study: bias, SEE, SD and coverage per θ.
    Study(StudyArgs),
    /// Cox fit, Schoenfeld residual tests and the Kaplan–Meier curve.
    Diagnose(DiagnoseArgs),
    /// Hazard and density of the shifted treatment time under an analytic hazard.
    Curves(CurvesArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long = "col-y", default_value = "y")]
    pub col_y: String,
    #[arg(long = "col-time", default_value = "time")]
    pub col_time: String,
    #[arg(long = "col-delta", default_value = "delta")]
    pub col_delta: String,
    /// Comma-separated covariate columns; all remaining columns by default.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Administrative censoring horizon.
    #[arg(long)]
    pub tau: f64,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// θ values, e.g. `0.5,1,2`, `1/3`, `loglinear:0.1,0.2,0.5` or `json:{...}`.
    #[arg(long, required = true, allow_hyphen_values = true)]
    pub theta: Vec<String>,
    /// Bootstrap replicates; 0 reports point estimates only.
    #[arg(long = "B", default_value_t = 200)]
    pub bootstrap: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON output; the CSV projection goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub dgp: Dgp,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV output; a `.meta.json` sidecar goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    /// Study configuration as JSON; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dgp: Option<Dgp>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "R")]
    pub replications: Option<usize>,
    #[arg(long = "B")]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// θ grid; the design's standard grid by default.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Vec<String>,
    /// JSON output; the table CSV goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// JSON output; residual, test and Kaplan–Meier CSVs go next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CurvesArgs {
    /// Baseline hazard `scale · t^power`.
    #[arg(long, default_value_t = 0.9)]
    pub scale: f64,
    #[arg(long, default_value_t = 0.5)]
    pub power: f64,
    /// Log-linear link coefficients.
    #[arg(long, value_delimiter = ',', default_value = "0.2", allow_hyphen_values = true)]
    pub link: Vec<f64>,
    /// Covariate values at which the curves are drawn.
    #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
    pub covariate: Vec<f64>,
    #[arg(long, required = true, allow_hyphen_values = true)]
    pub theta: Vec<String>,
    /// Grid end; the grid runs from 0 in equal steps.
    #[arg(long = "t-max", default_value_t = 3.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 301)]
    pub points: usize,
    /// JSON output; one CSV per θ goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<hazshift::Error>() {
            return e.kind();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "Io";
        }
    }
    "InvalidArgument"
}

fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("cannot start worker threads")?;
    let started = Instant::now();
    let opts = commands::Options {
        record_timing: cli.record_timing,
        started,
    };
    pool.install(|| match cli.command {
        Command::Estimate(a) => commands::estimate(&a, &opts),
        Command::Simulate(a) => commands::simulate(&a, &opts),
        Command::Study(a) => commands::study(&a, &opts),
        Command::Diagnose(a) => commands::diagnose(&a, &opts),
        Command::Curves(a) => commands::curves(&a, &opts),
    })?;
    eprintln!("finished in {:.3}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn report_error(kind: &str, message: String) {
    eprintln!("{}", serde_json::json!({ "error": { "kind": kind, "message": message } }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() || err.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => err.exit(),
        Err(err) => {
            report_error("Usage", err.to_string().trim_end().to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report_error(error_kind(&err), format!("{err:#}"));
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flexcompute::ErrorKind;

mod commands;
#[cfg(feature = "fetch")]
mod fetch;
mod output;

#[derive(Parser, Debug)]
#[command(name = "flexcompute", version, about = "Carbon- and cost-aware dynamic operation of computing clusters")]
struct Cli {
    /// TOML file adding or overriding setups, workloads and the tariff.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Blend raw generation, emission factors and prices into an interval file.
    Ingest(IngestArgs),
    /// Download one year of generation and price data from the public API.
    Fetch(FetchArgs),
    /// Yearly renewable share and mean intensity from raw generation files.
    Summarize(SummarizeArgs),
    /// Find the cost- or emission-optimal utilisation for one setup and workload.
    Optimize(OptimizeArgs),
    /// Optimise every setup and workload and write a result table.
    Study(StudyArgs),
    /// Re-optimise while varying one setup parameter.
    Sweep(SweepArgs),
    /// Carry a threshold into another year and check the utilisation it reaches.
    Validate(ValidateArgs),
    /// Compare constant operation at a limited clock frequency with nominal operation.
    CompareFreq(CompareFreqArgs),
    /// Aggregate previous outputs into result tables.
    Report(ReportArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum FormatArg {
    /// Choose by file extension: `.json` is JSON, anything else CSV.
    Auto,
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Emission,
    Cost,
}

impl From<ObjectiveArg> for flexcompute::ObjectiveKind {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Emission => flexcompute::ObjectiveKind::Emission,
            ObjectiveArg::Cost => flexcompute::ObjectiveKind::Cost,
        }
    }
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Generation per source; may be repeated (e.g. one file per month).
    #[arg(long, required = true, num_args = 1..)]
    generation: Vec<PathBuf>,
    /// Day-ahead prices; may be repeated.
    #[arg(long, required = true, num_args = 1..)]
    prices: Vec<PathBuf>,
    /// Emission factors per source, `source,kg_per_mwh[,year]`.
    #[arg(long)]
    factors: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    format: FormatArg,
    /// File name of the interval file inside the output directory.
    #[arg(long, default_value = "intervals.csv")]
    name: String,
}

#[derive(Args, Debug)]
pub struct FetchArgs {
    #[arg(long)]
    year: i32,
    /// Bidding zone for prices.
    #[arg(long, default_value = "DE-LU")]
    bzn: String,
    /// Country for generation.
    #[arg(long, default_value = "de")]
    country: String,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    /// Generation files; records are grouped by UTC calendar year.
    #[arg(long, required = true, num_args = 1..)]
    generation: Vec<PathBuf>,
    #[arg(long)]
    factors: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    format: FormatArg,
    /// Accept years covered by less than 95 % of their hours.
    #[arg(long)]
    allow_partial: bool,
    /// Comma-separated renewable source names (defaults to the built-in list).
    #[arg(long, value_delimiter = ',')]
    renewable: Vec<String>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    /// Interval file written by `ingest`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    setup: String,
    #[arg(long)]
    workload: String,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Emission)]
    objective: ObjectiveArg,
    /// TOML file with a `[tariff]` table.
    #[arg(long)]
    tariff: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Emission)]
    objective: ObjectiveArg,
    /// Setups to include (default: all, or all with an acquisition cost for `cost`).
    #[arg(long, value_delimiter = ',')]
    setups: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "medium,heavy,backfilling")]
    workloads: Vec<String>,
    #[arg(long)]
    tariff: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    setup: String,
    #[arg(long)]
    workload: String,
    /// idle-ratio, embedded-rate, embedded-factor, acq-rate or acq-factor.
    #[arg(long)]
    param: String,
    #[arg(long, requires_all = ["to", "steps"], conflicts_with = "values")]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Explicit comma-separated values instead of a range.
    #[arg(long, value_delimiter = ',', required_unless_present = "from")]
    values: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Emission)]
    objective: ObjectiveArg,
    #[arg(long)]
    tariff: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Interval file of the year the threshold is optimised on.
    #[arg(long)]
    base: PathBuf,
    /// Interval file of the year the threshold is carried into.
    #[arg(long)]
    target: PathBuf,
    /// Yearly share table written by `summarize`.
    #[arg(long)]
    shares: PathBuf,
    #[arg(long)]
    setup: String,
    #[arg(long)]
    workload: String,
}

#[derive(Args, Debug)]
pub struct CompareFreqArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    setup: String,
    #[arg(long)]
    workload: String,
    /// Fractional reduction of full-load power.
    #[arg(long, default_value_t = 0.40)]
    power_reduction: f64,
    /// Fractional drop in per-core performance.
    #[arg(long, default_value_t = 0.19)]
    performance_drop: f64,
    /// Also optimise dynamic operation of the clock-limited setup.
    #[arg(long)]
    dynamic: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory searched recursively for result, sweep and validation files.
    #[arg(long)]
    from: PathBuf,
}

/// Exit status for a failure: 2 input, 3 data quality, 4 invariant violation.
fn failure(err: &anyhow::Error) -> (u8, String) {
    match err.downcast_ref::<flexcompute::Error>() {
        Some(e) => {
            let code = match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::DataQuality => 3,
                ErrorKind::Invariant => 4,
            };
            (code, e.module().to_string())
        }
        None => (2, "cli".to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Error
        } else {
            log::LevelFilter::Info
        })
        .format_timestamp(None)
        .format_target(false)
        .parse_env("FLEXCOMPUTE_LOG")
        .init();

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, module) = failure(&err);
            eprintln!("error[{module}]: {err:#}");
            ExitCode::from(code)
        }
    }
}

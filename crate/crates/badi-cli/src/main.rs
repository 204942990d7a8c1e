mod commands;
mod config;
mod manifest;
mod outdir;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Deprivation-index pipeline: build bADI/ADI scores from census tables,
/// benchmark them against outcome data, contrast cost and utilization
/// across deprivation quintiles, and generate synthetic inputs.
#[derive(Debug, Parser)]
#[command(name = "badi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, filter, impute, and score census block groups.
    BuildIndex(BuildIndexArgs),
    /// Correlation reports against housing values and outcome tables.
    Benchmark(BenchmarkArgs),
    /// Stratified quintile contrasts of cost and ER visits.
    Glm(GlmArgs),
    /// Generate synthetic census and beneficiary files.
    Synth(SynthArgs),
    /// Summarize a completed run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    /// TOML config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Delimited census table with a header row.
    #[arg(long)]
    census: Option<PathBuf>,
    /// Field delimiter of the census table: a single character or `tab`.
    #[arg(long)]
    delimiter: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Imputation neighbor count.
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated variants to build: badi, adi.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    /// External ADI coefficient file (JSON), required for the adi variant.
    #[arg(long)]
    coefficients: Option<PathBuf>,
    /// Bypass the imputation/coefficient cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// index_scores.csv from build-index.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// imputed_records.jsonl from build-index (houses home values and
    /// population weights).
    #[arg(long)]
    records: Option<PathBuf>,
    /// Outcome tables (geoid, measure, value); repeatable. Level inferred
    /// from GEOID length.
    #[arg(long = "outcomes")]
    outcomes: Vec<PathBuf>,
    /// County-to-metro crosswalk (county_fips, cbsa, name).
    #[arg(long)]
    crosswalk: Option<PathBuf>,
    /// Externally supplied index tables, NAME=PATH (csv: geoid, value);
    /// repeatable.
    #[arg(long = "extra-index")]
    extra_index: Vec<String>,
    /// Population-weighted county aggregation.
    #[arg(long)]
    weighted_agg: bool,
    /// Average percentiles instead of rescaled scores when aggregating.
    #[arg(long)]
    percentile_agg: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GlmArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Beneficiary table (csv).
    #[arg(long)]
    beneficiaries: Option<PathBuf>,
    /// index_scores.csv from build-index.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Pearson-dispersion quasi-likelihood SEs for the count model.
    #[arg(long)]
    quasi: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directory containing manifest.json.
    #[arg(long)]
    run: PathBuf,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::BuildIndex(args) => commands::build_index::run(args),
        Command::Benchmark(args) => commands::benchmark::run(args),
        Command::Glm(args) => commands::glm::run(args),
        Command::Synth(args) => commands::synth::run(args),
        Command::Report(args) => commands::report::run(args),
    }
}

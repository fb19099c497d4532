//! `dslbench` — evaluation and data-preparation toolkit for
//! repository-scale NL-to-DSL generation.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, GlobalFlags, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "dslbench",
    version,
    about = "Linearize project trees, score repository-scale predictions, build datasets, check toy-DSL markets, and drive prompting runs.",
    propagate_version = true
)]
struct Cli {
    /// Flat key-value config file; flags override file values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed for splits and generation requests (default 7).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Change-similarity exponent (default 5.0).
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Cap on the log-length line weight (default 20.0).
    #[arg(long, global = true)]
    w_max: Option<f64>,

    /// Maximum in-flight completion requests (default 1).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serialize a directory tree into a linearized document.
    Linearize(LinearizeArgs),
    /// Write a linearized document back out as a directory tree.
    Delinearize(DelinearizeArgs),
    /// Score predictions against a corpus and emit reports.
    Eval(EvalArgs),
    /// Build, derive, split, inspect, and export datasets.
    Dataset(DatasetArgs),
    /// Check a market snapshot against the toy-DSL rules and generator.
    Dslcheck(DslcheckArgs),
    /// Run prompting against an endpoint (or replay archive) and score it.
    Run(RunArgs),
    /// Merge per-example record files into one summary table.
    Report(ReportArgs),
}

#[derive(Args)]
struct LinearizeArgs {
    /// Directory to serialize.
    dir: PathBuf,
    /// Output document path (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also dump the flattened (path, content) view as CSV.
    #[arg(long, value_name = "FILE")]
    flat_csv: Option<PathBuf>,
}

#[derive(Args)]
struct DelinearizeArgs {
    /// Linearized document to read.
    document: PathBuf,
    /// Destination directory (must be empty or absent).
    dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Corpus file (one example per line).
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Predictions file (generation-log format, aligned by example id).
    #[arg(long, value_name = "FILE", conflicts_with = "replay")]
    predictions: Option<PathBuf>,
    /// Replay archive; prompts are rebuilt to look up responses.
    #[arg(long, value_name = "FILE", requires = "mode")]
    replay: Option<PathBuf>,
    /// Prompt mode when evaluating through a replay archive.
    #[arg(long, value_name = "zero-shot|one-shot")]
    mode: Option<String>,
    /// Grammar summary text file (one-shot mode).
    #[arg(long, value_name = "FILE")]
    grammar: Option<PathBuf>,
    /// Demonstration file (JSON with instruction and output_document).
    #[arg(long, value_name = "FILE")]
    demo: Option<PathBuf>,
    /// Row label in the summary table.
    #[arg(long, default_value = "eval")]
    setting: String,
    /// Where to write per-example records (JSON lines).
    #[arg(long, value_name = "FILE")]
    records_out: Option<PathBuf>,
    /// Where to write the summary table.
    #[arg(long, value_name = "FILE")]
    table_out: Option<PathBuf>,
    /// Where to write the summary as CSV.
    #[arg(long, value_name = "FILE")]
    summary_csv: Option<PathBuf>,
    /// Print per-example changed-line details and edit scripts.
    #[arg(long)]
    explain: bool,
}

#[derive(Args)]
struct DatasetArgs {
    #[command(subcommand)]
    command: DatasetCommand,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Build a full-variant example from before/after directories.
    Build(DatasetBuildArgs),
    /// Derive a minimal-context variant of an existing example.
    Variant(DatasetVariantArgs),
    /// Split a corpus into train/eval without group leakage.
    Split(DatasetSplitArgs),
    /// Print corpus statistics.
    Stats(DatasetStatsArgs),
    /// Export SFT records with verified mask boundaries.
    ExportSft(DatasetExportSftArgs),
}

#[derive(Args)]
struct DatasetBuildArgs {
    #[arg(long)]
    instruction: String,
    #[arg(long, value_name = "DIR")]
    context_dir: PathBuf,
    #[arg(long, value_name = "DIR")]
    target_dir: PathBuf,
    /// create | add_attribute | add_product | delete_attribute | delete_product
    #[arg(long)]
    operation: String,
    #[arg(long)]
    group_id: String,
    /// Corpus file to append to (created if absent).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct DatasetVariantArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Id of the example to derive from.
    #[arg(long)]
    id: String,
    /// Comma-separated path prefixes to keep.
    #[arg(long, value_delimiter = ',')]
    keep: Vec<String>,
    /// Corpus file to append to (created if absent).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct DatasetSplitArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Train/eval ratios, for example 0.8,0.2.
    #[arg(long, default_value = "0.8,0.2")]
    ratios: String,
    #[arg(long, value_name = "FILE")]
    train_out: PathBuf,
    #[arg(long, value_name = "FILE")]
    eval_out: PathBuf,
    /// Manifest recording seed and group assignment.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
}

#[derive(Args)]
struct DatasetStatsArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Emit stats as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DatasetExportSftArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Prompt template file with {instruction} and {context} placeholders.
    #[arg(long, value_name = "FILE")]
    template: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct DslcheckArgs {
    /// Linearized market document; or use --dir for an on-disk tree.
    #[arg(value_name = "SNAPSHOT", required_unless_present = "dir")]
    snapshot: Option<PathBuf>,
    #[arg(long, value_name = "DIR", conflicts_with = "snapshot")]
    dir: Option<PathBuf>,
    /// Type registry data file.
    #[arg(long, value_name = "FILE")]
    registry: PathBuf,
    /// Write diagnostics as machine-readable records.
    #[arg(long, value_name = "FILE")]
    diagnostics_out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// zero-shot | one-shot
    #[arg(long)]
    mode: String,
    /// Endpoint base URL (chat/completions-style).
    #[arg(long, value_name = "URL", conflicts_with = "replay")]
    endpoint_url: Option<String>,
    /// Model name sent to the endpoint.
    #[arg(long)]
    model: Option<String>,
    /// Replay archive for deterministic offline runs.
    #[arg(long, value_name = "FILE")]
    replay: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    grammar: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    demo: Option<PathBuf>,
    /// Row label in the summary table (defaults to the mode).
    #[arg(long)]
    setting: Option<String>,
    #[arg(long, value_name = "FILE")]
    records_out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    table_out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    generations_out: Option<PathBuf>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Per-example record files to merge (one table row each).
    #[arg(required = true, value_name = "RECORDS")]
    records: Vec<PathBuf>,
    /// Comma-separated row labels (defaults to file stems).
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    #[arg(long, value_name = "FILE")]
    table_out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => match ConfigFile::load(path) {
            Ok(file) => file,
            Err(e) => {
                eprintln!("error: {e}");
                std::process::exit(e.exit_code);
            }
        },
        None => ConfigFile::default(),
    };
    let config = RunConfig::resolve(
        &GlobalFlags {
            seed: cli.seed,
            alpha: cli.alpha,
            w_max: cli.w_max,
            jobs: cli.jobs,
        },
        file,
    );

    let result: Result<i32, CliError> = match cli.command {
        Command::Linearize(args) => commands::linearize(&args, &config),
        Command::Delinearize(args) => commands::delinearize(&args, &config),
        Command::Eval(args) => commands::eval(&args, &config),
        Command::Dataset(args) => match args.command {
            DatasetCommand::Build(args) => commands::dataset_build(&args, &config),
            DatasetCommand::Variant(args) => commands::dataset_variant(&args, &config),
            DatasetCommand::Split(args) => commands::dataset_split(&args, &config),
            DatasetCommand::Stats(args) => commands::dataset_stats(&args, &config),
            DatasetCommand::ExportSft(args) => commands::dataset_export_sft(&args, &config),
        },
        Command::Dslcheck(args) => commands::dslcheck(&args, &config),
        Command::Run(args) => commands::run(&args, &config),
        Command::Report(args) => commands::report(&args, &config),
    };

    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code);
        }
    }
}

//! `sqlcontam`: command-line front end for the audit toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "sqlcontam", version, about = "Contamination and robustness audits for text-to-SQL benchmarks")]
struct Cli {
    /// TOML configuration file. Without one, built-in defaults apply and
    /// relative paths resolve against the working directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `audit.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Call the endpoint and append every exchange to this transcript store.
    #[arg(long, global = true, value_name = "STORE", conflicts_with = "replay")]
    record: Option<PathBuf>,
    /// Answer model calls only from this transcript store.
    #[arg(long, global = true, value_name = "STORE")]
    replay: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// A dataset given as a manifest, a directory of dumps, or both. With both,
/// the dumps listed in the manifest are looked up by file name in the
/// directory.
#[derive(Args, Clone, Default)]
pub struct DatasetArgs {
    /// Dataset manifest, or a directory containing `manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory searched recursively for `.sql` dumps.
    #[arg(long)]
    dumps: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Schema and query statistics with column-name classes.
    Stats {
        #[command(flatten)]
        dataset: DatasetArgs,
        /// Word list for the abbreviation test (one word per line).
        #[arg(long)]
        wordlist: Option<PathBuf>,
        /// Write the Markdown table and per-database CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Query hardness levels.
    Hardness {
        #[command(subcommand)]
        command: HardnessCommand,
    },
    /// Masks a share of the column names of one dump.
    Mask {
        #[arg(long = "dump")]
        dump: PathBuf,
        #[arg(long)]
        ratio: Option<f64>,
        /// Never mask primary-key columns.
        #[arg(long)]
        exclude_pk: bool,
        /// Print the complete probe prompt instead of the masked dump.
        #[arg(long)]
        prompt: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the masked names as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Schema-reconstruction contamination probe.
    ProbeDc {
        /// Dataset directory: a manifest directory or a directory of dumps.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        exclude_pk: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Removes foreign keys and data rows from a dump.
    Atd {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Asks the model to translate every question of a dataset.
    Translate {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long, default_value = "original")]
        variant: String,
        /// Predictions file (JSON lines); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Judges predictions with fuzzed database instances.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Dump directories; may be repeated.
        #[arg(long, required = true)]
        dumps: Vec<PathBuf>,
        #[arg(long)]
        max_instances: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multiple-choice test construction and scoring.
    Mcq {
        #[command(subcommand)]
        command: McqCommand,
    },
    /// Encrypts a dataset directory into a bundle.
    Pack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restores a bundle into a directory.
    Unpack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs every stage over the datasets named in the configuration.
    Audit {
        /// Report directory; defaults to `audit.output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum HardnessCommand {
    /// Per-query levels and the per-database histogram as CSV.
    Classify {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum McqCommand {
    /// Builds items, printable sheets and the answer key.
    Build {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        trials: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores an annotation sheet.
    Score {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", commands::describe(&e));
            ExitCode::from(commands::error_code(&e))
        }
    }
}

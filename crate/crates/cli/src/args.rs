use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use maintainkit::experiment::StrategyKind;
use maintainkit::ChangePattern;
use serde::Deserialize;

const ENV_HELP: &str = "\
Environment:
  MAINTAINKIT_CONFIG, MAINTAINKIT_FORMAT, MAINTAINKIT_JOBS, MAINTAINKIT_RUNS_DIR,
  MAINTAINKIT_MODEL, MAINTAINKIT_PROBE_MODEL, MAINTAINKIT_CASSETTE,
  MAINTAINKIT_CASSETTE_MODE, MAINTAINKIT_PYTHON, MAINTAINKIT_RATE_LIMIT
      stand in for the matching global flags.
  MAINTAINKIT_API_BASE, MAINTAINKIT_API_KEY
      OpenAI-compatible endpoint used in live and record modes.

Settings are taken from flags, then environment, then the config file
(--config, or ./maintainkit.toml when present), then built-in defaults.

Exit status: 0 success, 1 usage or input error, 2 internal error.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Md,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Record,
    Replay,
    Live,
}

#[derive(Debug, Parser)]
#[command(name = "maintainkit", version, about = "Maintainability metrics, benchmark building and evaluation runs", after_help = ENV_HELP)]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "MAINTAINKIT_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output format [default: md].
    #[arg(long, global = true, env = "MAINTAINKIT_FORMAT", value_enum)]
    pub format: Option<Format>,
    /// Worker threads and concurrent sandbox processes [default: logical CPUs].
    #[arg(long, global = true, env = "MAINTAINKIT_JOBS")]
    pub jobs: Option<usize>,
    /// Directory holding run directories [default: runs].
    #[arg(long, global = true, env = "MAINTAINKIT_RUNS_DIR", value_name = "DIR")]
    pub runs_dir: Option<PathBuf>,
    /// Generator model id [default: gpt-4o-mini].
    #[arg(long, global = true, env = "MAINTAINKIT_MODEL")]
    pub model: Option<String>,
    /// Probe model id for phase II [default: the generator model].
    #[arg(long, global = true, env = "MAINTAINKIT_PROBE_MODEL")]
    pub probe_model: Option<String>,
    /// Cassette file for recorded model responses.
    #[arg(long, global = true, env = "MAINTAINKIT_CASSETTE", value_name = "FILE")]
    pub cassette: Option<PathBuf>,
    /// Cassette mode [default: replay with a cassette, live without].
    #[arg(long, global = true, env = "MAINTAINKIT_CASSETTE_MODE", value_enum)]
    pub cassette_mode: Option<Mode>,
    /// Python interpreter for the sandbox [default: python3].
    #[arg(long, global = true, env = "MAINTAINKIT_PYTHON", value_name = "PATH")]
    pub python: Option<PathBuf>,
    /// Requests per minute in live and record modes.
    #[arg(long, global = true, env = "MAINTAINKIT_RATE_LIMIT")]
    pub rate_limit: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print static metrics for Python source files.
    Metrics {
        #[arg(required = true, value_name = "FILE")]
        files: Vec<PathBuf>,
    },
    /// Build requirement-change variants for a seed dataset.
    BenchBuild {
        /// JSONL file with seed problems.
        #[arg(long, value_name = "FILE")]
        seed: PathBuf,
        /// Change patterns to build [default: all].
        #[arg(long, value_delimiter = ',', value_parser = parse_pattern)]
        patterns: Vec<ChangePattern>,
        /// Output dataset (problems plus finalized variants).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Review queue output [default: <out>.review.jsonl].
        #[arg(long, value_name = "FILE")]
        review: Option<PathBuf>,
        /// Repair rounds per variant [default: 3].
        #[arg(long)]
        cap: Option<u32>,
    },
    /// Phase I: generate and measure initial solutions.
    EvalRun {
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: StrategyKind,
        /// Samples per problem [default: 5].
        #[arg(long, short = 'n')]
        samples: Option<u64>,
        /// Pass@k values [default: 5].
        #[arg(long = "k", value_delimiter = ',')]
        ks: Vec<u64>,
        /// Discount for the maintainability estimate [default: 1].
        #[arg(long)]
        gamma: Option<f64>,
        /// Horizon for the maintainability estimate [default: 1].
        #[arg(long)]
        horizon: Option<u32>,
        /// Change patterns probed in phase II [default: all].
        #[arg(long, value_delimiter = ',', value_parser = parse_pattern)]
        patterns: Vec<ChangePattern>,
        /// Framework evaluation rounds [default: 3].
        #[arg(long)]
        framework_eval_cap: Option<u32>,
        /// Code optimization rounds [default: 5].
        #[arg(long)]
        optimization_cap: Option<u32>,
        /// Per-job sandbox timeout in milliseconds [default: 10000].
        #[arg(long)]
        sandbox_timeout_ms: Option<u64>,
    },
    /// Phase II: adapt every sample to every variant and test it.
    Probe {
        /// Run id under the runs directory, or a run directory path.
        #[arg(long)]
        run: String,
    },
    /// Aggregate a run into report.json, report.csv and report.md.
    Report {
        /// Run id under the runs directory, or a run directory path.
        #[arg(long)]
        run: String,
    },
}

fn parse_pattern(s: &str) -> Result<ChangePattern, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse()
}

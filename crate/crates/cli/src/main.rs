//! `guiscout`: explore simulated GUIs, build grounding datasets and compare
//! exploration strategies.

mod commands;
mod seeds;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use guiscout::explorer::{DedupMode, StrategyId, DEFAULT_BUDGET, DEFAULT_ERROR_LEXICON};
use guiscout::llm::{DEFAULT_MODEL, DEFAULT_TOKEN_ENV};
use guiscout::model::ActionKind;
use guiscout::parser::{DEFAULT_NMS_OVERLAP, DEFAULT_TAU};

#[derive(Debug, Parser)]
#[command(name = "guiscout", version, about = "Autonomous GUI exploration and grounding data tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Explore one environment and record a grounding dataset plus a run log.
    Explore(ExploreArgs),
    /// Run a strategy x environment x seed matrix and write a comparison report.
    Bench(BenchArgs),
    /// Parse one screenshot into UI elements and print the parse as JSON.
    Parse(ParseArgs),
    /// Generate grounding instructions for a recorded dataset.
    GenInstructions(GenInstructionsArgs),
    /// Score grounding predictions against instructions (correct iff IoU > 0.3).
    EvalGrounding(EvalGroundingArgs),
}

#[derive(Debug, Clone, Args)]
struct ParserArgs {
    /// Minimum normalized cross-correlation for an icon detection.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// IoU at or above which overlapping detections are suppressed.
    #[arg(long, default_value_t = DEFAULT_NMS_OVERLAP)]
    nms_overlap: f64,
    /// Also match templates at scales 0.75 to 1.25.
    #[arg(long)]
    multiscale: bool,
}

#[derive(Debug, Clone, Args)]
struct ExplorerArgs {
    /// Text dropout of the simulated OCR; defaults to 0.5 for random_walk_ocr and 0 otherwise.
    #[arg(long)]
    text_dropout: Option<f64>,
    /// Substring (case-insensitive) that marks an element as an error message; repeatable.
    #[arg(long = "error-pattern", default_values_t = DEFAULT_ERROR_LEXICON.map(String::from))]
    error_patterns: Vec<String>,
    /// Frontier dedup key: global_name or state_name.
    #[arg(long, default_value = "global_name", value_parser = parse_dedup)]
    dedup: DedupMode,
    /// Comma-separated action kinds to try: click, drag, scroll.
    #[arg(long, value_delimiter = ',', default_value = "click", value_parser = parse_kind)]
    action_kinds: Vec<ActionKind>,
}

#[derive(Debug, Clone, Args)]
struct SelectorArgs {
    /// Remote selector endpoint for llm_selector; without one the bundled mock is started.
    #[arg(long)]
    selector_endpoint: Option<String>,
    /// Environment variable holding the selector bearer token.
    #[arg(long, default_value = DEFAULT_TOKEN_ENV)]
    selector_token_env: String,
    /// Model name sent to the selector.
    #[arg(long, default_value = DEFAULT_MODEL)]
    selector_model: String,
    /// Per-request timeout in milliseconds.
    #[arg(long, default_value_t = 20_000)]
    selector_timeout_ms: u64,
    /// Retries after a failed request.
    #[arg(long, default_value_t = 2)]
    selector_retries: u32,
}

#[derive(Debug, Args)]
struct ExploreArgs {
    /// Environment JSON file.
    #[arg(long)]
    env: PathBuf,
    /// frontier_auto, random_walk_parser, random_walk_ocr or llm_selector.
    #[arg(long, default_value = "frontier_auto", value_parser = parse_strategy)]
    strategy: StrategyId,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum number of actions.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Output directory; must be empty or absent.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    parser: ParserArgs,
    #[command(flatten)]
    explorer: ExplorerArgs,
    #[command(flatten)]
    selector: SelectorArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Environment JSON file; repeatable. Defaults to every env in --suite.
    #[arg(long)]
    env: Vec<PathBuf>,
    /// Directory of environment files used when no --env is given.
    #[arg(long, default_value = "fixtures/suite")]
    suite: PathBuf,
    /// Comma-separated strategies.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "frontier_auto,random_walk_parser,random_walk_ocr,llm_selector",
        value_parser = parse_strategy
    )]
    strategies: Vec<StrategyId>,
    /// Seeds as a list of values and inclusive ranges, e.g. `0-9` or `1,4,7-8`.
    #[arg(long, default_value = "0-9", value_parser = seeds::parse_seeds)]
    seeds: seeds::Seeds,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Concurrent cells; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory for report.json, report.txt and runs/.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    #[command(flatten)]
    parser: ParserArgs,
    #[command(flatten)]
    explorer: ExplorerArgs,
    #[command(flatten)]
    selector: SelectorArgs,
}

#[derive(Debug, Args)]
struct ParseArgs {
    /// PNG screenshot to parse.
    #[arg(long, conflicts_with_all = ["env_file", "state"], required_unless_present = "env_file")]
    image: Option<PathBuf>,
    /// Directory of icon templates (PNG plus JSON sidecar) used with --image.
    #[arg(long, requires = "image")]
    templates: Option<PathBuf>,
    /// OCR endpoint used with --image; without it only icons are detected.
    #[arg(long, requires = "image")]
    text_endpoint: Option<String>,
    /// Render a state of this environment instead of reading --image; text comes from its ground truth.
    #[arg(long = "env", requires = "state")]
    env_file: Option<PathBuf>,
    /// State id to render with --env.
    #[arg(long)]
    state: Option<String>,
    /// Text dropout applied with --env.
    #[arg(long, default_value_t = 0.0)]
    text_dropout: f64,
    /// Seed of the text dropout.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the parse here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    parser: ParserArgs,
}

#[derive(Debug, Args)]
struct GenInstructionsArgs {
    /// Dataset directory written by `explore`.
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated query types: name, shape, function, refexpr.
    #[arg(long, value_delimiter = ',', default_value = "name,shape,function,refexpr")]
    types: Vec<String>,
    /// Seed of the instruction shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalGroundingArgs {
    /// instructions.jsonl with the ground truth.
    #[arg(long)]
    instructions: PathBuf,
    /// JSON lines of {sample_id, query_id, bbox}.
    #[arg(long)]
    predictions: PathBuf,
    /// Also write the full result as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<StrategyId, String> {
    s.parse()
}

fn parse_dedup(s: &str) -> Result<DedupMode, String> {
    s.parse()
}

fn parse_kind(s: &str) -> Result<ActionKind, String> {
    s.parse()
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Explore(a) => commands::explore(a),
        Command::Bench(a) => commands::bench(a),
        Command::Parse(a) => commands::parse(a),
        Command::GenInstructions(a) => commands::gen_instructions(a),
        Command::EvalGrounding(a) => commands::eval_grounding(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message before them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

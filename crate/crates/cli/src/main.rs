//! `bisift`: bilingual document detection, classification and reporting.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage or I/O
//! error.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use bisift::analytics::ReportFormat;
use bisift::classify::Stage2Mode;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "bisift",
    version,
    about = "Find, classify and analyze bilingual documents in web corpora"
)]
pub struct Cli {
    /// TOML file with defaults; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// No progress messages on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stage 1: profile documents and label high-entropy ones as candidates.
    Detect(DetectArgs),
    /// Stage 2: verify candidates and classify them.
    Classify(ClassifyArgs),
    /// Write the four training configurations and check their algebra.
    Split(SplitArgs),
    /// Composition and source-domain reports for a labeled corpus.
    Stats(StatsArgs),
    /// Share of generations in the target, source or mixed language.
    Genlang(GenlangArgs),
    /// Layer-wise P@1 retrieval between paired embeddings.
    Align(AlignArgs),
    /// Seeded synthetic corpus or generation set with planted labels.
    Synth(SynthArgs),
    /// Save the bundled language-identification model.
    ExportModel(ExportModelArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Pivot and partner language, e.g. en-fr.
    #[arg(long)]
    pub pair: Option<String>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,

    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,

    /// Run report path; defaults to `<output>.run.json`.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Human,
    Machine,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Human => ReportFormat::Human,
            FormatArg::Machine => ReportFormat::Machine,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScorerArgs {
    /// Language-identification model file; the bundled model by default.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// Precomputed per-sentence scores (JSONL) instead of a model.
    #[arg(long, value_name = "FILE", conflicts_with = "model")]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Corpus shards or directories of shards.
    #[arg(long, short, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,

    /// Annotated corpus; `.gz` compresses.
    #[arg(long, short)]
    pub output: PathBuf,

    #[command(flatten)]
    pub scorer: ScorerArgs,

    /// Entropy threshold in nats; candidates have entropy strictly above it.
    #[arg(long)]
    pub tau: Option<f64>,

    /// Documents with less of their language mass on the pair are out of pair.
    #[arg(long)]
    pub min_pair_mass: Option<f64>,

    /// Renormalize each sentence's scores over the pair before weighting.
    #[arg(long)]
    pub per_sentence_normalization: bool,

    /// Larger documents are labeled out of pair without scoring.
    #[arg(long)]
    pub max_doc_bytes: Option<usize>,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Heuristic,
    Remote,
    /// Remote judge, heuristic when the judge fails.
    Fallback,
}

impl From<ModeArg> for Stage2Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Heuristic => Stage2Mode::Heuristic,
            ModeArg::Remote => Stage2Mode::Remote,
            ModeArg::Fallback => Stage2Mode::RemoteWithHeuristicFallback,
        }
    }
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Stage-1 output shards or directories.
    #[arg(long, short, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,

    #[arg(long, short)]
    pub output: PathBuf,

    #[command(flatten)]
    pub scorer: ScorerArgs,

    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Chat-completions URL of the judge.
    #[arg(long, value_name = "URL")]
    pub judge_endpoint: Option<String>,

    #[arg(long)]
    pub judge_model: Option<String>,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Classified corpus shards or directories.
    #[arg(long, short, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,

    /// Directory for the four split files.
    #[arg(long, short)]
    pub output: PathBuf,

    /// Keep out-of-pair documents in every split instead of dropping them.
    #[arg(long)]
    pub keep_out_of_pair: bool,

    /// Write bare documents without annotations.
    #[arg(long)]
    pub strip_annotations: bool,

    /// Gzip the split files.
    #[arg(long)]
    pub gzip: bool,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, short, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,

    /// Report file; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,

    /// Domains listed per category.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,

    /// Public suffix list replacing the bundled one.
    #[arg(long, value_name = "FILE")]
    pub suffix_list: Option<PathBuf>,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct GenlangArgs {
    /// JSONL with `source` and `generated` fields.
    #[arg(long, short)]
    pub input: PathBuf,

    #[arg(long, short)]
    pub output: Option<PathBuf>,

    #[command(flatten)]
    pub scorer: ScorerArgs,

    /// Minimum partner-language share of a target-language output.
    #[arg(long)]
    pub theta_target: Option<f64>,

    /// Entropy above which a non-target output is mixed.
    #[arg(long)]
    pub tau_mixed: Option<f64>,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Source-language embedding files, one per layer.
    #[arg(long, required = true, num_args = 1..)]
    pub src: Vec<PathBuf>,

    /// Target-language embedding files, paired with --src by position.
    #[arg(long, required = true, num_args = 1..)]
    pub tgt: Vec<PathBuf>,

    /// Baseline model's source files for per-layer deltas.
    #[arg(long, num_args = 1.., requires = "baseline_tgt")]
    pub baseline_src: Vec<PathBuf>,

    #[arg(long, num_args = 1.., requires = "baseline_src")]
    pub baseline_tgt: Vec<PathBuf>,

    #[arg(long, short)]
    pub output: Option<PathBuf>,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    Corpus,
    Generations,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "corpus")]
    pub kind: SynthKind,

    #[arg(long, short)]
    pub output: PathBuf,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Corpus size, or number of generations.
    #[arg(long)]
    pub documents: Option<usize>,

    #[arg(long)]
    pub bilingual_rate: Option<f64>,

    #[arg(long)]
    pub out_of_pair_rate: Option<f64>,

    /// Corpus: parallel,code-switching,miscellaneous shares. Generations:
    /// target,source,mixed shares.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub mix: Option<Vec<f64>>,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ExportModelArgs {
    #[arg(long, short)]
    pub output: PathBuf,
}

/// A verification check failed (exit code 1).
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

/// The error chain on one line. Library errors already quote their cause,
/// so a cause the previous message ends with is not repeated.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !last.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            if e.downcast_ref::<CheckFailed>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

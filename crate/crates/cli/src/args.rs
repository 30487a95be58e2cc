use std::path::PathBuf;

use ampgen_core::conditioning::Range;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ampgen",
    version,
    about = "Peptide generation, filtering and evaluation pipelines"
)]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads. Outputs do not depend on this value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode FASTA sequences into embedding matrices (JSON).
    Encode(EncodeArgs),
    /// Decode embedding matrices back into FASTA.
    Decode(DecodeArgs),
    /// Emit conditioning vectors as CSV.
    Cond(CondArgs),
    /// Generate synthetic negatives.
    Negatives(NegativesArgs),
    /// Write the feature matrix of a FASTA file as CSV.
    Featurize(FeaturizeArgs),
    /// Train the boosted-tree classifier.
    TrainClf(TrainClfArgs),
    /// Score sequences with a trained classifier.
    Predict(PredictArgs),
    /// Evaluate a classifier on labeled sets.
    EvalClf(EvalClfArgs),
    /// Train the toy denoiser.
    TrainDenoiser(TrainDenoiserArgs),
    /// Sample sequences from a trained denoiser.
    Sample(SampleArgs),
    /// Diversity, uniqueness, novelty and fitness of a sequence set.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CondMode {
    /// Property conditioning over the configured ranges.
    Pc,
    /// Subset conditioning on reference sequences.
    Sc,
    /// The exact vector of every input sequence.
    Exact,
}

#[derive(Debug, Args)]
pub struct CondArgs {
    #[arg(long, value_enum)]
    pub mode: CondMode,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reference (sc) or source (exact) FASTA; defaults to the bundled AMP set.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Label exact vectors as non-AMP.
    #[arg(long)]
    pub non_amp: bool,
    /// `lo:hi`
    #[arg(long, value_parser = parse_range::<u32>)]
    pub length: Option<Range<u32>>,
    #[arg(long, value_parser = parse_range::<f64>, allow_hyphen_values = true)]
    pub charge: Option<Range<f64>>,
    #[arg(long, value_parser = parse_range::<f64>, allow_hyphen_values = true)]
    pub hydrophobicity: Option<Range<f64>>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct NegativesArgs {
    /// random, shuffled, mutated or add-delete
    #[arg(long)]
    pub mode: String,
    #[arg(long)]
    pub seed: u64,
    /// Defaults to the configured per-source size times the scale factor.
    #[arg(long)]
    pub count: Option<usize>,
    /// Source AMPs; defaults to the bundled set.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub ema_alpha: Option<f64>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainClfArgs {
    /// Experimentally validated positives; defaults to the bundled AMP set.
    #[arg(long)]
    pub positives: Option<PathBuf>,
    /// `provenance=path`, e.g. `synthetic-s=shuffled.fa`. Repeatable.
    #[arg(long, required = true)]
    pub negatives: Vec<String>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub max_estimators: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub ema_alpha: Option<f64>,
    #[arg(long)]
    pub output: PathBuf,
    /// Per-round losses as CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Training summary as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub ema_alpha: Option<f64>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalClfArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub positives: PathBuf,
    /// `source=path`; every record is a negative. Repeatable.
    #[arg(long, required = true)]
    pub negatives: Vec<String>,
    /// `name=path` sets whose false-positive rate is reported. Repeatable.
    #[arg(long)]
    pub robustness: Vec<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub ema_alpha: Option<f64>,
    #[arg(long)]
    pub output: PathBuf,
    /// Per-example scores as CSV.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainDenoiserArgs {
    /// Training sequences; defaults to the bundled AMP set.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
    /// Per-iteration losses as CSV.
    #[arg(long)]
    pub losses: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Samples per condition.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Condition CSV; overrides the single-condition flags.
    #[arg(long)]
    pub conditions: Option<PathBuf>,
    #[arg(long)]
    pub non_amp: bool,
    #[arg(long)]
    pub length: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub charge: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub hydrophobicity: Option<f64>,
    /// Sample without condition annealing.
    #[arg(long)]
    pub no_cads: bool,
    #[arg(long)]
    pub output: PathBuf,
    /// Requested versus realized properties as CSV.
    #[arg(long)]
    pub audit: Option<PathBuf>,
    /// Final embeddings as JSON.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Training set for novelty.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// One line of comma-separated per-position log-probabilities per sequence.
    #[arg(long)]
    pub log_probs: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    /// Residue frequency profile as CSV.
    #[arg(long)]
    pub frequencies: Option<PathBuf>,
}

fn parse_range<T: std::str::FromStr>(s: &str) -> Result<Range<T>, String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got '{s}'"))?;
    let num = |v: &str| {
        v.trim()
            .parse::<T>()
            .map_err(|_| format!("bad bound '{v}'"))
    };
    Ok(Range {
        lo: num(lo)?,
        hi: num(hi)?,
    })
}

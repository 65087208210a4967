use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "idiolens",
    version,
    about = "Idiom processing analyses over translation-model activations"
)]
pub struct Cli {
    /// Random seed; the IDIOLENS_SEED environment variable takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert MAGPIE JSON lines into the corpus format.
    Convert(ConvertArgs),
    /// Label translations as paraphrase, word-for-word or copy.
    Label(LabelArgs),
    /// Label percentages per gold category.
    Distribution(DistributionArgs),
    /// Pairwise label agreement between languages.
    Agreement(AgreementArgs),
    /// Model labels against labels of reference translations.
    Crosstab(CrosstabArgs),
    /// PIE length and position statistics per category.
    Lengths(LengthsArgs),
    /// Encoder self-attention statistics per layer.
    Attn(AttnArgs),
    /// Cross-attention statistics per layer.
    Xattn(AttnArgs),
    /// Fit CCA projections on a token pool.
    CcaFit(CcaFitArgs),
    /// Similarity of adjacent layers.
    CcaLayers(CcaLayersArgs),
    /// Similarity of normal and masked hidden states.
    CcaMask(CcaMaskArgs),
    /// Figurativeness probes per layer with idiom-grouped folds.
    Probe(ProbeArgs),
    /// Train nullspace projectors for the paraphrase property.
    InlpTrain(InlpTrainArgs),
    /// Success of an intervention on translations and attention.
    InlpEval(InlpEvalArgs),
    /// Success per intervened layer subset.
    InlpSweep(InlpSweepArgs),
    /// Summary of a workspace's inputs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub magpie: PathBuf,
    /// idiom<TAB>keyword... per line.
    #[arg(long)]
    pub keywords: PathBuf,
    /// One noun per line, used to tag context nouns.
    #[arg(long)]
    pub nouns: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub min_confidence: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub translations: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArg {
    /// all, identical, intersection or length-controlled.
    #[arg(long, default_value = "all")]
    pub filter: String,
}

#[derive(Debug, Args)]
pub struct DistributionArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub filter: FilterArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// lang=path, once per language.
    #[arg(long = "labels", required = true)]
    pub labels: Vec<String>,
    /// lang<TAB>lang<TAB>similarity per line.
    #[arg(long)]
    pub genetic: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file for the correlation with genetic similarity.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrosstabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub translations: PathBuf,
    /// Reference-corpus translations of the same sentences.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LengthsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Enables the translation-label categories.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    /// Dump directory.
    #[arg(long = "dump")]
    pub dump: PathBuf,
    /// Defaults to corpus.jsonl inside the dump directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArg,
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    #[arg(long)]
    pub analysis: String,
    #[command(flatten)]
    pub input: DumpArgs,
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    /// A subset name, or fig-par-minus-lit-wfw for the difference.
    #[arg(long, default_value = "all")]
    pub subset: String,
    #[arg(long, default_value = "und")]
    pub language: String,
    /// A single head instead of the head average.
    #[arg(long)]
    pub head: Option<usize>,
    /// ctx2pie from every context word rather than context nouns.
    #[arg(long)]
    pub all_context_words: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CcaFitArgs {
    #[command(flatten)]
    pub input: DumpArgs,
    /// Fit normal-vs-masked projections against this masked dump directory.
    #[arg(long)]
    pub masked: Option<PathBuf>,
    #[arg(long, default_value = "non-pie")]
    pub class: String,
    #[arg(long, default_value_t = idiolens_core::repr::DEFAULT_POOL_SIZE)]
    pub pool_size: usize,
    #[arg(long, default_value_t = idiolens_core::repr::DEFAULT_RIDGE)]
    pub ridge: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CcaLayersArgs {
    #[command(flatten)]
    pub input: DumpArgs,
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long, default_value = "all")]
    pub subset: String,
    #[arg(long, default_value = "pie")]
    pub class: String,
    #[arg(long, default_value_t = idiolens_core::repr::DEFAULT_MIN_TOKENS)]
    pub min_tokens: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CcaMaskArgs {
    #[command(flatten)]
    pub input: DumpArgs,
    #[arg(long)]
    pub masked: PathBuf,
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long, default_value = "all")]
    pub subset: String,
    #[arg(long, default_value = "non-pie")]
    pub class: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub input: DumpArgs,
    /// gold (figurative vs literal), frequency (zipf baseline) or
    /// paraphrase (fig-par vs fig-wfw).
    #[arg(long, default_value = "gold")]
    pub target: String,
    #[arg(long)]
    pub frequency: Option<PathBuf>,
    #[arg(long, default_value_t = idiolens_core::probe::freq::DEFAULT_MISSING_ZIPF)]
    pub missing_zipf: f64,
    /// Mean-pool PIE subtokens per sentence instead of one sample per subtoken.
    #[arg(long)]
    pub mean_pooled: bool,
    #[arg(long, default_value_t = idiolens_core::probe::cv::DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = 1.0)]
    pub l2: f64,
    #[arg(long, default_value = "und")]
    pub language: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InlpTrainArgs {
    #[command(flatten)]
    pub input: DumpArgs,
    /// Hidden-state indices to train on; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    #[arg(long, default_value_t = idiolens_core::probe::cv::DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub rotation: usize,
    #[arg(long, default_value_t = 1.0)]
    pub l2: f64,
    /// Projector container.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-layer summary CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-iteration dev accuracy CSV.
    #[arg(long)]
    pub accuracies: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InlpEvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Translations without intervention.
    #[arg(long)]
    pub translations: PathBuf,
    /// Translations with the intervention.
    #[arg(long)]
    pub post: PathBuf,
    /// Normal dump directory, for the attention change.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Dump directory recorded with projected hidden states.
    #[arg(long)]
    pub projected: Option<PathBuf>,
    #[arg(long, default_value = "fig-par")]
    pub subset: String,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Attention change CSV; needs --dump and --projected.
    #[arg(long)]
    pub attn_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InlpSweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub translations: PathBuf,
    /// Holds one directory per layer subset (e.g. 0-1-2) with translations.jsonl.
    #[arg(long)]
    pub sweep_dir: PathBuf,
    /// Only score the test fold of this rotation.
    #[arg(long)]
    pub rotation: Option<usize>,
    #[arg(long, default_value_t = idiolens_core::probe::cv::DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value = "und")]
    pub language: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub translations: Option<PathBuf>,
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    #[arg(long = "dump")]
    pub dump: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "g2p-bridge", version, about = "Persian grapheme-to-phoneme pipeline")]
pub struct Cli {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize Persian text from stdin.
    Normalize,
    /// Rewrite romanized text from stdin into canonical Pinglish.
    Canonicalize(AlphabetArg),
    /// Homograph lexicon tools.
    #[command(subcommand)]
    Lexicon(LexiconCommand),
    /// Label a corpus with train/val/test splits.
    Split(SplitArgs),
    /// Grow the training split by merging and splitting sentences.
    Augment(AugmentArgs),
    /// Train the BPE tokenizer on a corpus.
    TrainTokenizer(TrainTokenizerArgs),
    /// Train the transducer.
    Train(TrainArgs),
    /// Transliterate Persian lines from stdin.
    Convert(ConvertArgs),
    /// Score a model on a corpus split.
    Evaluate(EvaluateArgs),
    /// Summarize a checkpoint, tokenizer or corpus file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct AlphabetArg {
    /// Alphabet table; the bundled default when omitted.
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum LexiconCommand {
    /// Validate every reading against the alphabet.
    Check {
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[command(flatten)]
        alphabet: AlphabetArg,
    },
    /// Annotate the homographs of a corpus.
    Annotate {
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        alphabet: AlphabetArg,
    },
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    #[command(flatten)]
    pub alphabet: AlphabetArg,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub target_size: Option<usize>,
    #[arg(long)]
    pub max_words: Option<usize>,
    #[command(flatten)]
    pub alphabet: AlphabetArg,
}

#[derive(Debug, Args)]
pub struct TrainTokenizerArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub alphabet: AlphabetArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub tokenizer: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub alphabet: AlphabetArg,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub tokenizer: Option<PathBuf>,
    /// Beam width; 1 is greedy.
    #[arg(long)]
    pub beam: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub tokenizer: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Report file (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to `test` for a labeled corpus, `all` otherwise.
    #[arg(long, value_enum)]
    pub split: Option<SplitChoice>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[command(flatten)]
    pub alphabet: AlphabetArg,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
    #[command(flatten)]
    pub alphabet: AlphabetArg,
}

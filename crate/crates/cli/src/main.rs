use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use morphnlg::generation::{InputMode, OutputMode};
use morphnlg::lexicalize::LexKind;

mod commands;
mod errors;
mod experiment;
mod manifest;

#[derive(Parser, Debug)]
#[command(name = "morphnlg", version, about = "Delexicalized data-to-text generation pipeline")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "MORPHNLG_OUT", default_value = "out")]
    pub out: PathBuf,
    /// DA type and slot inventory; the built-in restaurant domain by default.
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Delexicalize a raw corpus and check that every value is mentioned.
    Prepare(PrepareArgs),
    /// Split a corpus into train/dev/test with no shared DA signatures.
    Split(SplitArgs),
    /// Grow a corpus to per-signature target counts.
    Expand(ExpandArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
    /// Train a model.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Decode the DAs of a corpus with a trained generator.
    Generate(GenerateArgs),
    /// Fill placeholders of generated outputs with surface forms.
    Lexicalize(LexicalizeArgs),
    /// Score lexicalized outputs against a corpus.
    Evaluate(EvaluateArgs),
    /// Finite-difference checks of all layers and models.
    Gradcheck(GradcheckArgs),
    /// Train, generate, lexicalize and evaluate one experiment variant.
    Run(RunArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Raw corpus, one JSON record per line (`da`, `text`, optional `lemmas`, `tags`).
    #[arg(long)]
    pub raw: PathBuf,
    /// Surface-form lexicon (TSV).
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Exit 0 even when some DA values are not mentioned in their text.
    #[arg(long)]
    pub allow_missing: bool,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Instance proportions train:dev:test.
    #[arg(long, default_value = "3:1:1")]
    pub ratios: String,
    /// Do not force slotless DAs (goodbye, ?reqmore, ...) into train.
    #[arg(long)]
    pub no_pin_slotless: bool,
}

#[derive(Args, Debug)]
pub struct ExpandArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// `signature<TAB>count` lines.
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// n-gram LM listing from `train ngram-lm`; trained on the corpus lemmas when absent.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Divide LM scores by sentence length.
    #[arg(long)]
    pub length_normalize: bool,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    WordForms,
    LemmaTag,
}

impl From<ModeArg> for OutputMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::WordForms => OutputMode::WordForms,
            ModeArg::LemmaTag => OutputMode::LemmaTag,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputArg {
    Delex,
    Lex,
}

impl From<InputArg> for InputMode {
    fn from(m: InputArg) -> Self {
        match m {
            InputArg::Delex => InputMode::Delexicalized,
            InputArg::Lex => InputMode::Lexicalized,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainData {
    #[arg(long)]
    pub train: PathBuf,
    /// Validation corpus; the training corpus is used when absent.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// JSON file with model hyperparameters; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum TrainCommand {
    /// Sequence-to-sequence generator.
    Generator {
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        input: Option<InputArg>,
        /// Upper bound on training passes.
        #[arg(long)]
        max_passes: Option<usize>,
    },
    /// DA classifier used to rerank beam candidates.
    Reranker {
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long, value_enum, default_value = "word-forms")]
        mode: ModeArg,
        #[arg(long)]
        passes: Option<usize>,
    },
    /// Forward and backward RNN LMs over lexicalized texts.
    LexicalizerLm {
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        passes: Option<usize>,
    },
    /// Kneser-Ney n-gram LM over corpus lemmas.
    NgramLm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        order: usize,
    },
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub generator: PathBuf,
    #[arg(long)]
    pub reranker: Option<PathBuf>,
    /// Corpus whose distinct DAs are decoded.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub beam: Option<usize>,
    /// Rank by `logprob - weight * penalty` instead of penalty first.
    #[arg(long)]
    pub rerank_weight: Option<f64>,
}

fn parse_lex_kind(s: &str) -> Result<LexKind, String> {
    s.parse::<LexKind>().map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
pub struct LexicalizeArgs {
    /// Output of `generate`.
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// random, most-frequent or rnn-lm.
    #[arg(long, value_parser = parse_lex_kind)]
    pub strategy: LexKind,
    /// LM checkpoint for the rnn-lm strategy.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// Corpus whose tagged texts form the morphological dictionary (lemma-tag outputs).
    #[arg(long)]
    pub dictionary_corpus: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Output of `lexicalize`.
    #[arg(long)]
    pub system: PathBuf,
    /// Reference corpus; instances with the same DA form one reference set.
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub instances: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub input: Option<InputArg>,
    /// Comma-separated lexicalizers, overriding the configuration.
    #[arg(long, value_delimiter = ',', value_parser = parse_lex_kind)]
    pub lexicalizers: Option<Vec<LexKind>>,
    /// Comma-separated seeds, overriding the configuration.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { errors::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(errors::exit_code(&e))
        }
    }
}

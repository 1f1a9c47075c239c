//! `entnorm`: synthesize, train, index, query and evaluate entity
//! normalization runs.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 runtime error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use entnorm::eval::TprMode;
use entnorm::{DistanceMetric, IndexMode};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<entnorm::Error> for CliError {
    fn from(e: entnorm::Error) -> Self {
        match e {
            entnorm::Error::InvalidConfig(m) => CliError::Usage(m),
            e if e.is_data_error() => CliError::Data(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "entnorm", version, about = "Entity normalization by triplet-loss metric learning")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    margin: Option<f64>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    group_size: Option<usize>,
    #[arg(long, global = true)]
    groups_per_batch: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true, value_parser = ["batch-all", "batch-hard", "hybrid"])]
    strategy: Option<String>,
    #[arg(long, global = true)]
    switch_epoch: Option<usize>,
    #[arg(long, global = true, value_parser = parse_metric)]
    metric: Option<DistanceMetric>,
    #[arg(long, global = true, value_parser = parse_index_mode)]
    index_mode: Option<IndexMode>,
    #[arg(long, global = true)]
    topk: Option<usize>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Remote embedding service used instead of a local model; the bearer
    /// token is read from ENTNORM_PROVIDER_TOKEN
    #[arg(long, global = true, value_name = "URL")]
    provider_endpoint: Option<String>,
    /// Directory with kb.jsonl, train.jsonl and test.jsonl (default: --out)
    #[arg(long, global = true, value_name = "DIR")]
    data: Option<PathBuf>,
}

fn parse_metric(s: &str) -> Result<DistanceMetric, String> {
    s.parse().map_err(|e: entnorm::Error| e.to_string())
}

fn parse_index_mode(s: &str) -> Result<IndexMode, String> {
    s.parse().map_err(|e: entnorm::Error| e.to_string())
}

fn parse_tpr_mode(s: &str) -> Result<TprMode, String> {
    match s {
        "top-one-correct" => Ok(TprMode::TopOneCorrect),
        "accepted-only" => Ok(TprMode::AcceptedOnly),
        _ => Err(format!("unknown TPR mode {s:?} (top-one-correct, accepted-only)")),
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus (kb.jsonl, train.jsonl, test.jsonl)
    Synth {
        #[arg(long)]
        entities: Option<usize>,
        #[arg(long)]
        mentions: Option<usize>,
    },
    /// Train the encoder; writes checkpoint.bin, history.jsonl, config.toml
    Train,
    /// Embed the knowledge base into index.bin
    Index {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Print the top-k entities for mentions given as arguments or on stdin
    Query {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        index: Option<PathBuf>,
        mentions: Vec<String>,
    },
    /// Top-k accuracy on the test split; writes eval.jsonl
    Eval {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        index: Option<PathBuf>,
    },
    /// ROC against out-of-KB mentions; writes roc.jsonl and roc.tsv
    Roc {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        index: Option<PathBuf>,
        /// One out-of-KB mention per line
        #[arg(long, value_name = "PATH")]
        negatives: PathBuf,
        #[arg(long, value_parser = parse_tpr_mode)]
        tpr_mode: Option<TprMode>,
        #[arg(long)]
        thresholds: Option<usize>,
    },
    /// Median wall time of encoding and retrieving the test split
    Bench {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        index: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// k-fold cross-validation of top-1 accuracy on the train split
    Cv {
        #[arg(long)]
        folds: Option<usize>,
    },
    /// TF-IDF baseline; writes tfidf.bin, tfidf-index.bin, eval-tfidf.jsonl
    Tfidf,
}

impl GlobalArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = &self.$flag {
                    c.$field = v.clone().into();
                })*
            };
        }
        set!(seed => seed, margin => margin, lr => learning_rate, group_size => group_size,
             groups_per_batch => groups_per_batch, epochs => epochs, strategy => strategy,
             switch_epoch => switch_epoch, metric => metric, index_mode => index_mode,
             topk => topk, out => out, provider_endpoint => provider_endpoint, data => data);
        if c.topk == 0 {
            return Err(CliError::Usage("--topk must be at least 1".into()));
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = cli.global.resolve()?;
    use commands::*;
    match cli.command {
        Command::Synth { entities, mentions } => {
            if let Some(n) = entities {
                cfg.synth_entities = n;
            }
            if let Some(n) = mentions {
                cfg.synth_mentions = n;
            }
            synth(&cfg)
        }
        Command::Train => train(&cfg),
        Command::Index { model } => index(&cfg, model),
        Command::Query { model, index, mentions } => query(&cfg, model, index, mentions),
        Command::Eval { model, index } => eval(&cfg, model, index),
        Command::Roc {
            model,
            index,
            negatives,
            tpr_mode,
            thresholds,
        } => {
            if let Some(m) = tpr_mode {
                cfg.tpr_mode = m;
            }
            if let Some(t) = thresholds {
                cfg.thresholds = t;
            }
            roc(&cfg, model, index, &negatives)
        }
        Command::Bench { model, index, repeats } => {
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            bench(&cfg, model, index)
        }
        Command::Cv { folds } => {
            if let Some(k) = folds {
                cfg.folds = k;
            }
            cv(&cfg)
        }
        Command::Tfidf => tfidf(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("entnorm: {e}");
            ExitCode::from(e.code())
        }
    }
}

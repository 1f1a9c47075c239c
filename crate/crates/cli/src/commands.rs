use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use entnorm::corpus::{read_surfaces, save_corpus, synthesize_corpus, SynthesisConfig};
use entnorm::encoder::provider::{ProviderClient, ProviderConfig};
use entnorm::encoder::{load_checkpoint, save_checkpoint};
use entnorm::eval::{benchmark_inference, roc_curve, topk_accuracy, EvalReport};
use entnorm::tfidf::{fit_corpus, TfidfConfig, TfidfModel};
use entnorm::trainer::{cross_validate, train_with_validation, Validation};
use entnorm::{
    build_index, load_corpus, Corpus, DistanceMetric, EmbeddingIndex, EmbeddingVector, Encoder,
    EncoderParams,
};

use crate::config::RunConfig;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Any encoder the CLI can run queries through.
enum Model {
    Hashed(EncoderParams),
    Tfidf(TfidfModel),
    Provider(ProviderClient),
}

impl Encoder for Model {
    fn encode_batch(&self, texts: &[String]) -> entnorm::Result<Vec<EmbeddingVector>> {
        match self {
            Model::Hashed(m) => m.encode_batch(texts),
            Model::Tfidf(m) => m.encode_batch(texts),
            Model::Provider(m) => m.encode_batch(texts),
        }
    }
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Data(format!("missing file: {}", path.display())))
    }
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    Ok(())
}

/// Echoes the effective configuration of `command` into the output directory.
fn echo_config(cfg: &RunConfig, name: &str) -> Result<()> {
    fs::write(cfg.out_file(name), cfg.to_toml())?;
    Ok(())
}

fn load(cfg: &RunConfig) -> Result<Corpus> {
    let [kb, train, test] = cfg.corpus_paths();
    for p in [&kb, &train, &test] {
        require(p)?;
    }
    Ok(load_corpus(&kb, &train, &test)?)
}

fn load_model(cfg: &RunConfig, path: Option<PathBuf>) -> Result<Model> {
    if let Some(endpoint) = &cfg.provider_endpoint {
        let cache = cfg
            .provider_cache
            .clone()
            .unwrap_or_else(|| cfg.out_file("provider-cache.bin"));
        let pc = ProviderConfig {
            batch_limit: cfg.provider_batch_limit,
            ..ProviderConfig::new(endpoint.clone(), cache)
        };
        return Ok(Model::Provider(ProviderClient::new(pc)?));
    }
    let path = path.unwrap_or_else(|| cfg.out_file("checkpoint.bin"));
    require(&path)?;
    match load_checkpoint(&path) {
        Ok((params, _)) => Ok(Model::Hashed(params)),
        Err(first) => TfidfModel::load(&path)
            .map(Model::Tfidf)
            .map_err(|_| first.into()),
    }
}

fn load_index(cfg: &RunConfig, path: Option<PathBuf>) -> Result<EmbeddingIndex> {
    let path = path.unwrap_or_else(|| cfg.out_file("index.bin"));
    require(&path)?;
    Ok(EmbeddingIndex::load(&path)?)
}

fn print_accuracy(report: &EvalReport) {
    for (k, acc) in &report.top_k {
        println!("T@{k}\t{acc:.4}");
    }
}

fn ks(cfg: &RunConfig) -> Vec<usize> {
    (1..=cfg.topk).collect()
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let corpus = synthesize_corpus(&SynthesisConfig {
        n_entities: cfg.synth_entities,
        mentions_per_entity: cfg.synth_mentions,
        seed: cfg.seed,
        ..SynthesisConfig::default()
    })?;
    prepare_out(cfg)?;
    let [kb, train, test] = [
        cfg.out_file("kb.jsonl"),
        cfg.out_file("train.jsonl"),
        cfg.out_file("test.jsonl"),
    ];
    save_corpus(&corpus, &kb, &train, &test)?;
    echo_config(cfg, "config-synth.toml")?;
    println!(
        "{} entities, {} train and {} test mentions in {}",
        corpus.entities().len(),
        corpus.train().len(),
        corpus.test().len(),
        cfg.out.display()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let tcfg = cfg.train_config()?;
    let init = EncoderParams::random(&cfg.encoder_config()?, cfg.seed)?;
    let validation = cfg.validate.then_some(Validation {
        corpus: &corpus,
        mentions: corpus.test(),
    });
    let (params, history) = train_with_validation(&corpus, &tcfg, init, validation)?;
    prepare_out(cfg)?;
    save_checkpoint(&cfg.out_file("checkpoint.bin"), &params, &cfg.to_toml())?;
    history.write_jsonl(&cfg.out_file("history.jsonl"))?;
    echo_config(cfg, "config.toml")?;
    match (history.first_loss(), history.last_loss()) {
        (Some(a), Some(b)) => println!("{} epochs, mean loss {a:.4} -> {b:.4}", history.records.len()),
        _ => println!("0 epochs; checkpoint holds the initialization"),
    }
    Ok(())
}

pub fn index(cfg: &RunConfig, model: Option<PathBuf>) -> Result<()> {
    let corpus = load(cfg)?;
    let model = load_model(cfg, model)?;
    let index = build_index(&model, &corpus, cfg.index_mode, cfg.metric)?;
    prepare_out(cfg)?;
    index.save(&cfg.out_file("index.bin"))?;
    echo_config(cfg, "config-index.toml")?;
    println!(
        "{} rows for {} entities ({} mode, {})",
        index.len(),
        index.n_entities(),
        index.mode(),
        index.metric().name()
    );
    Ok(())
}

pub fn query(cfg: &RunConfig, model: Option<PathBuf>, index: Option<PathBuf>, mentions: Vec<String>) -> Result<()> {
    let index = load_index(cfg, index)?;
    let model = load_model(cfg, model)?;
    let mentions: Vec<String> = if mentions.is_empty() {
        io::stdin()
            .lock()
            .lines()
            .collect::<io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|l| !l.trim().is_empty())
            .collect()
    } else {
        mentions
    };
    let vectors = model.encode_batch(&mentions)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (m, v) in mentions.iter().zip(&vectors) {
        write!(out, "{m}")?;
        for hit in index.search(v, cfg.topk)? {
            write!(out, "\t{}:{:.6}", hit.entity_id, hit.distance)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig, model: Option<PathBuf>, index: Option<PathBuf>) -> Result<()> {
    let corpus = load(cfg)?;
    let index = load_index(cfg, index)?;
    let model = load_model(cfg, model)?;
    let report = topk_accuracy(&index, &model, corpus.test(), &ks(cfg))?;
    prepare_out(cfg)?;
    report.write_jsonl(&cfg.out_file("eval.jsonl"))?;
    echo_config(cfg, "config-eval.toml")?;
    print_accuracy(&report);
    Ok(())
}

pub fn roc(cfg: &RunConfig, model: Option<PathBuf>, index: Option<PathBuf>, negatives: &Path) -> Result<()> {
    let corpus = load(cfg)?;
    require(negatives)?;
    let negatives = read_surfaces(negatives)?;
    let index = load_index(cfg, index)?;
    let model = load_model(cfg, model)?;
    let report = roc_curve(&index, &model, corpus.test(), &negatives, cfg.thresholds, cfg.tpr_mode)?;
    prepare_out(cfg)?;
    report.write(&cfg.out_file("roc.jsonl"), &cfg.out_file("roc.tsv"))?;
    echo_config(cfg, "config-roc.toml")?;
    println!("auc\t{:.4}", report.auc);
    Ok(())
}

pub fn bench(cfg: &RunConfig, model: Option<PathBuf>, index: Option<PathBuf>) -> Result<()> {
    let corpus = load(cfg)?;
    let index = load_index(cfg, index)?;
    let model = load_model(cfg, model)?;
    let report = benchmark_inference(&index, &model, corpus.test(), cfg.repeats)?;
    println!(
        "{} mentions, median {:.6} s over {} runs",
        corpus.test().len(),
        report.median_secs,
        report.runs_secs.len()
    );
    Ok(())
}

pub fn cv(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let tcfg = cfg.train_config()?;
    let init = EncoderParams::random(&cfg.encoder_config()?, cfg.seed)?;
    let report = cross_validate(&corpus, &tcfg, cfg.folds, &init)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for (i, acc) in report.fold_accuracies.iter().enumerate() {
        println!("fold {}\t{acc:.4}", i + 1);
    }
    println!("mean\t{:.4}\nstd\t{:.4}", report.mean, report.std_dev);
    Ok(())
}

pub fn tfidf(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let model = fit_corpus(&corpus, &TfidfConfig::default())?;
    let index = build_index(&model, &corpus, cfg.index_mode, DistanceMetric::Cosine)?;
    let report = topk_accuracy(&index, &model, corpus.test(), &ks(cfg))?;
    prepare_out(cfg)?;
    model.save(&cfg.out_file("tfidf.bin"))?;
    index.save(&cfg.out_file("tfidf-index.bin"))?;
    report.write_jsonl(&cfg.out_file("eval-tfidf.jsonl"))?;
    echo_config(cfg, "config-tfidf.toml")?;
    println!("vocabulary {} terms", model.dim());
    print_accuracy(&report);
    Ok(())
}

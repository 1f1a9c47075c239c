use std::path::{Path, PathBuf};

use entnorm::encoder::EncoderConfig;
use entnorm::eval::TprMode;
use entnorm::mining::MiningStrategy;
use entnorm::trainer::OptimizerKind;
use entnorm::{DistanceMetric, IndexMode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every setting of a run. Read from TOML, overridden by flags, and echoed
/// to `config.toml` in the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub margin: f64,
    pub learning_rate: f64,
    pub group_size: usize,
    pub groups_per_batch: usize,
    pub epochs: usize,
    /// `batch-all`, `batch-hard` or `hybrid`.
    pub strategy: String,
    /// Last batch-all epoch of the hybrid schedule; half the epochs if unset.
    pub switch_epoch: Option<usize>,
    pub metric: DistanceMetric,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub include_names: bool,
    /// Record held-out top-1 accuracy in the history after every epoch.
    pub validate: bool,

    pub feature_dim: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub out_dim: usize,
    pub init_scale: f64,

    /// Directory holding `kb.jsonl`, `train.jsonl` and `test.jsonl`;
    /// defaults to the output directory.
    pub data: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,

    pub index_mode: IndexMode,
    pub topk: usize,
    pub out: PathBuf,

    pub provider_endpoint: Option<String>,
    pub provider_batch_limit: usize,
    pub provider_cache: Option<PathBuf>,

    pub synth_entities: usize,
    pub synth_mentions: usize,
    pub folds: usize,
    pub repeats: usize,
    pub thresholds: usize,
    pub tpr_mode: TprMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let e = EncoderConfig::default();
        RunConfig {
            seed: t.seed,
            margin: t.margin,
            learning_rate: t.learning_rate,
            group_size: t.group_size,
            groups_per_batch: t.groups_per_batch,
            epochs: t.epochs,
            strategy: "hybrid".into(),
            switch_epoch: None,
            metric: t.metric,
            optimizer: "adam".into(),
            include_names: t.include_names,
            validate: false,
            feature_dim: e.feature_dim,
            ngram_min: e.ngram_range.0,
            ngram_max: e.ngram_range.1,
            out_dim: e.out_dim,
            init_scale: e.init_scale,
            data: None,
            kb: None,
            train: None,
            test: None,
            index_mode: IndexMode::Canonical,
            topk: 5,
            out: PathBuf::from("out"),
            provider_endpoint: None,
            provider_batch_limit: 64,
            provider_cache: None,
            synth_entities: 30,
            synth_mentions: 10,
            folds: 5,
            repeats: 10,
            thresholds: 201,
            tpr_mode: TprMode::TopOneCorrect,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let strategy = match self.strategy.as_str() {
            "hybrid" => MiningStrategy::Hybrid {
                switch_epoch: self.switch_epoch.unwrap_or((self.epochs / 2).max(1)),
            },
            s => s.parse().map_err(|e: entnorm::Error| CliError::Usage(e.to_string()))?,
        };
        let optimizer = match self.optimizer.as_str() {
            "adam" => OptimizerKind::default(),
            "sgd" => OptimizerKind::Sgd,
            o => return Err(CliError::Usage(format!("unknown optimizer {o:?}"))),
        };
        let cfg = TrainConfig {
            margin: self.margin,
            learning_rate: self.learning_rate,
            group_size: self.group_size,
            groups_per_batch: self.groups_per_batch,
            epochs: self.epochs,
            strategy,
            metric: self.metric,
            seed: self.seed,
            optimizer,
            include_names: self.include_names,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn encoder_config(&self) -> Result<EncoderConfig, CliError> {
        let cfg = EncoderConfig {
            feature_dim: self.feature_dim,
            ngram_range: (self.ngram_min, self.ngram_max),
            out_dim: self.out_dim,
            init_scale: self.init_scale,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// KB, train and test paths, in that order.
    pub fn corpus_paths(&self) -> [PathBuf; 3] {
        let dir = self.data.clone().unwrap_or_else(|| self.out.clone());
        [
            self.kb.clone().unwrap_or_else(|| dir.join("kb.jsonl")),
            self.train.clone().unwrap_or_else(|| dir.join("train.jsonl")),
            self.test.clone().unwrap_or_else(|| dir.join("test.jsonl")),
        ]
    }
}

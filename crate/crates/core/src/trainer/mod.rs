//! Gradient-descent training over contrastive-group batches.

mod cv;
mod optim;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MentionRecord};
use crate::encoder::{
    loss_and_gradients_features, DistanceMetric, EncoderParams, LossConfig, SparseVector,
};
use crate::error::{Error, Result};
use crate::eval::topk_accuracy;
use crate::index::{build_index, IndexMode};
use crate::mining::{sample_batches, CategoryCounts, Mining, MiningStrategy};

pub use cv::{cross_validate, CvReport};
pub use optim::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    /// Samples per class in a batch (`g`).
    pub group_size: usize,
    /// Classes per batch (`b`).
    pub groups_per_batch: usize,
    pub epochs: usize,
    pub strategy: MiningStrategy,
    pub metric: DistanceMetric,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Use each entity's canonical name as a training sample of its class.
    pub include_names: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let epochs = 50;
        TrainConfig {
            margin: 2.0,
            learning_rate: 1e-2,
            group_size: 10,
            groups_per_batch: 16,
            epochs,
            strategy: MiningStrategy::Hybrid {
                switch_epoch: epochs / 2,
            },
            metric: DistanceMetric::Cosine,
            seed: 0,
            optimizer: OptimizerKind::default(),
            include_names: true,
        }
    }
}

impl TrainConfig {
    /// Sets the epoch budget, moving a hybrid switch to the new midpoint.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        if let MiningStrategy::Hybrid { .. } = self.strategy {
            self.strategy = MiningStrategy::Hybrid {
                switch_epoch: (epochs / 2).max(1),
            };
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::InvalidConfig(format!("margin {} must be >= 0", self.margin)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be >= 0",
                self.learning_rate
            )));
        }
        if self.group_size < 2 || self.groups_per_batch < 2 {
            return Err(Error::InvalidConfig(
                "group size and groups per batch must be at least 2".into(),
            ));
        }
        self.strategy.validate(self.epochs)?;
        self.optimizer.validate()
    }

    pub fn loss_config(&self, epoch: usize) -> LossConfig {
        LossConfig {
            mining: self.strategy.at_epoch(epoch),
            margin: self.margin,
            metric: self.metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub strategy: Mining,
    pub mean_loss: f64,
    pub batches: usize,
    pub counts: CategoryCounts,
    pub val_top1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// One JSON object per epoch, newline terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("history serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(self.to_jsonl().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.mean_loss)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.mean_loss)
    }
}

/// Held-out mentions scored after every epoch against an index of
/// canonical names.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub corpus: &'a Corpus,
    pub mentions: &'a [MentionRecord],
}

/// Trains on the corpus' training samples (see
/// [`Corpus::training_samples`]).
pub fn train(corpus: &Corpus, cfg: &TrainConfig, init: EncoderParams) -> Result<(EncoderParams, TrainHistory)> {
    train_with_validation(corpus, cfg, init, None)
}

pub fn train_with_validation(
    corpus: &Corpus,
    cfg: &TrainConfig,
    init: EncoderParams,
    validation: Option<Validation<'_>>,
) -> Result<(EncoderParams, TrainHistory)> {
    let samples = corpus.training_samples(cfg.include_names);
    fit_samples(&samples, cfg, init, validation)
}

/// Training loop over an explicit sample list.
///
/// Each epoch draws its batches with [`sample_batches`], evaluates the
/// mining loss in force for that epoch and applies one optimizer step per
/// batch. Everything runs on one thread in a fixed order, so equal inputs
/// give bit-identical results.
pub fn fit_samples(
    samples: &[MentionRecord],
    cfg: &TrainConfig,
    init: EncoderParams,
    validation: Option<Validation<'_>>,
) -> Result<(EncoderParams, TrainHistory)> {
    cfg.validate()?;
    let mut params = init;
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((params, history));
    }

    let feats: Vec<SparseVector> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            params.featurize(&s.surface).map_err(|_| Error::EmptyText { index: i })
        })
        .collect::<Result<_>>()?;

    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &params);
    for epoch in 1..=cfg.epochs {
        let loss_cfg = cfg.loss_config(epoch);
        let plans = sample_batches(samples, cfg.group_size, cfg.groups_per_batch, cfg.seed, epoch)?;
        let mut total = 0.0;
        let mut counts = CategoryCounts::default();
        for (bi, plan) in plans.iter().enumerate() {
            let (idx, labels) = plan.flatten();
            let batch: Vec<&SparseVector> = idx.iter().map(|&i| &feats[i]).collect();
            let out = loss_and_gradients_features(&params, &batch, &labels, &loss_cfg).map_err(|e| {
                Error::Training {
                    epoch,
                    batch: bi,
                    source: Box::new(e),
                }
            })?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            opt.step(&mut params, &out.grads);
            if !params.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            total += out.loss;
            counts.merge(&out.counts);
        }
        let val_top1 = match validation {
            Some(v) if !v.mentions.is_empty() => {
                let index = build_index(&params, v.corpus, IndexMode::Canonical, cfg.metric)?;
                Some(topk_accuracy(&index, &params, v.mentions, &[1])?.accuracy(1))
            }
            _ => None,
        };
        history.records.push(EpochRecord {
            epoch,
            strategy: loss_cfg.mining,
            mean_loss: total / plans.len() as f64,
            batches: plans.len(),
            counts,
            val_top1,
        });
    }
    Ok((params, history))
}

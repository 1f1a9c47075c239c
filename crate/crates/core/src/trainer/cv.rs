use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit_samples, TrainConfig};
use crate::corpus::{Corpus, MentionRecord};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::eval::topk_accuracy;
use crate::index::{build_index, IndexMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub std_dev: f64,
    /// Entities with fewer train mentions than folds; kept whole in one fold.
    pub warnings: Vec<String>,
}

/// Assigns every train mention to a fold, stratified by entity.
///
/// An entity with at least `k` mentions is shuffled and dealt round-robin
/// from a random starting fold; a smaller entity goes whole into the next
/// fold of a rotating counter.
pub fn assign_folds(train: &[MentionRecord], k: usize, seed: u64) -> (Vec<usize>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<&str> = Vec::new();
    let mut by_entity: std::collections::HashMap<&str, Vec<usize>> = Default::default();
    for (i, m) in train.iter().enumerate() {
        by_entity
            .entry(m.entity_id.as_str())
            .or_insert_with(|| {
                order.push(m.entity_id.as_str());
                Vec::new()
            })
            .push(i);
    }
    let mut fold_of = vec![0; train.len()];
    let mut warnings = Vec::new();
    let mut next_small = 0;
    for id in order {
        let mut idx = by_entity[id].clone();
        if idx.len() < k {
            warnings.push(format!(
                "entity {id} has {} train mentions (< {k} folds); kept in fold {next_small}",
                idx.len()
            ));
            for i in idx {
                fold_of[i] = next_small;
            }
            next_small = (next_small + 1) % k;
            continue;
        }
        idx.shuffle(&mut rng);
        let start = rng.random_range(0..k);
        for (j, i) in idx.into_iter().enumerate() {
            fold_of[i] = (start + j) % k;
        }
    }
    (fold_of, warnings)
}

/// k-fold cross-validation of top-1 accuracy on the corpus' train split.
///
/// Each fold trains from `init` on the other folds (plus canonical names
/// and KB mentions as configured) and scores the held-out fold against an
/// index of canonical names.
pub fn cross_validate(corpus: &Corpus, cfg: &TrainConfig, k: usize, init: &EncoderParams) -> Result<CvReport> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    let train = corpus.train();
    let (fold_of, warnings) = assign_folds(train, k, cfg.seed);
    let base = corpus.training_samples(cfg.include_names);
    let base = &base[..base.len() - train.len()];

    let mut accs = Vec::with_capacity(k);
    for fold in 0..k {
        let held: Vec<MentionRecord> = train
            .iter()
            .zip(&fold_of)
            .filter(|(_, &f)| f == fold)
            .map(|(m, _)| m.clone())
            .collect();
        if held.is_empty() {
            return Err(Error::EmptyInput(format!("fold {fold} has no mentions")));
        }
        let mut samples = base.to_vec();
        samples.extend(
            train
                .iter()
                .zip(&fold_of)
                .filter(|(_, &f)| f != fold)
                .map(|(m, _)| m.clone()),
        );
        let (params, _) = fit_samples(&samples, cfg, init.clone(), None)?;
        let index = build_index(&params, corpus, IndexMode::Canonical, cfg.metric)?;
        accs.push(topk_accuracy(&index, &params, &held, &[1])?.accuracy(1));
    }
    let mean = accs.iter().sum::<f64>() / k as f64;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    Ok(CvReport {
        fold_accuracies: accs,
        mean,
        std_dev: var.sqrt(),
        warnings,
    })
}

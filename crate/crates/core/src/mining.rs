//! Online triplet mining.
//!
//! A triplet `(a, p, n)` is valid when `a != p`, `a` and `p` share a label
//! and `n` has another label. With `gap = d(a, n) - d(a, p)` a triplet is
//! *easy* when `gap > margin`, *hard* when `gap < 0` and *semihard*
//! otherwise (both boundaries count as semihard).
//!
//! Batch-all averages the hinge loss over every hard or semihard valid
//! triplet. Batch-hard picks, for each anchor, the farthest positive and the
//! nearest negative (ties go to the lowest batch index) and averages the
//! hinge over all `B` anchors.
//!
//! The loss functions also return `∂loss/∂d(i, j)` as a dense `B x B` matrix
//! so callers can back-propagate into the embeddings.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::MentionRecord;
use crate::encoder::DistanceMetric;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TripletCategory {
    Easy,
    Semihard,
    Hard,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub hard: usize,
    pub semihard: usize,
    pub easy: usize,
}

impl CategoryCounts {
    pub fn add(&mut self, c: TripletCategory) {
        match c {
            TripletCategory::Easy => self.easy += 1,
            TripletCategory::Semihard => self.semihard += 1,
            TripletCategory::Hard => self.hard += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.hard + self.semihard + self.easy
    }

    pub fn merge(&mut self, other: &CategoryCounts) {
        self.hard += other.hard;
        self.semihard += other.semihard;
        self.easy += other.easy;
    }
}

/// `max(d_ap - d_an + margin, 0)`.
pub fn triplet_loss(d_ap: f64, d_an: f64, margin: f64) -> f64 {
    ((d_ap - d_an) + margin).max(0.0)
}

pub fn classify_triplet(d_ap: f64, d_an: f64, margin: f64) -> TripletCategory {
    let gap = d_an - d_ap;
    if gap > margin {
        TripletCategory::Easy
    } else if gap < 0.0 {
        TripletCategory::Hard
    } else {
        TripletCategory::Semihard
    }
}

/// Every valid triplet, in lexicographic `(anchor, positive, negative)` order.
pub fn enumerate_valid_triplets<L: PartialEq>(labels: &[L]) -> Vec<Triplet> {
    let n = labels.len();
    let mut out = Vec::new();
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for neg in 0..n {
                if labels[neg] != labels[a] {
                    out.push(Triplet {
                        anchor: a,
                        positive: p,
                        negative: neg,
                    });
                }
            }
        }
    }
    out
}

/// Symmetric matrix of pairwise distances with a zero diagonal.
pub fn pairwise_distances<T: AsRef<[f64]>>(embeddings: &[T], metric: DistanceMetric) -> Result<Vec<Vec<f64>>> {
    let n = embeddings.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = metric.distance(embeddings[i].as_ref(), embeddings[j].as_ref())?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchAllOutcome {
    pub loss: f64,
    pub counts: CategoryCounts,
    /// `∂loss/∂d(i, j)`, zero where the pair does not contribute.
    pub distance_grad: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchHardOutcome {
    pub loss: f64,
    /// `(d_ap_max, d_an_min)` for every anchor, in batch order.
    pub per_anchor: Vec<(f64, f64)>,
    /// `(hardest positive, hardest negative)` indices for every anchor.
    pub selected: Vec<(usize, usize)>,
    pub counts: CategoryCounts,
    pub distance_grad: Vec<Vec<f64>>,
}

fn class_sizes<L: PartialEq>(labels: &[L]) -> Vec<usize> {
    labels
        .iter()
        .map(|l| labels.iter().filter(|m| *m == l).count())
        .collect()
}

fn distinct_classes<L: PartialEq>(labels: &[L]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|(i, l)| !labels[..*i].contains(l))
        .count()
}

fn check_embeddings<T: AsRef<[f64]>, L>(embeddings: &[T], labels: &[L]) -> Result<()> {
    if embeddings.len() != labels.len() {
        return Err(Error::DegenerateBatch(format!(
            "{} embeddings but {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    Ok(())
}

pub fn batch_all_loss<T: AsRef<[f64]>, L: PartialEq>(
    embeddings: &[T],
    labels: &[L],
    margin: f64,
    metric: DistanceMetric,
) -> Result<BatchAllOutcome> {
    check_embeddings(embeddings, labels)?;
    let dist = pairwise_distances(embeddings, metric)?;
    batch_all_from_distances(&dist, labels, margin)
}

pub fn batch_all_from_distances<L: PartialEq>(
    dist: &[Vec<f64>],
    labels: &[L],
    margin: f64,
) -> Result<BatchAllOutcome> {
    let n = labels.len();
    if distinct_classes(labels) < 2 {
        return Err(Error::DegenerateBatch("batch-all needs at least two classes".into()));
    }
    if !class_sizes(labels).iter().any(|&s| s >= 2) {
        return Err(Error::DegenerateBatch(
            "batch-all needs a class with at least two samples".into(),
        ));
    }

    let mut counts = CategoryCounts::default();
    let mut sum = 0.0;
    // hinge-active (a,p) and (a,n) pair multiplicities, scaled after counting
    let mut active = vec![vec![0.0f64; n]; n];
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            let d_ap = dist[a][p];
            for neg in 0..n {
                if labels[neg] == labels[a] {
                    continue;
                }
                let d_an = dist[a][neg];
                let cat = classify_triplet(d_ap, d_an, margin);
                counts.add(cat);
                if cat == TripletCategory::Easy {
                    continue;
                }
                let l = triplet_loss(d_ap, d_an, margin);
                sum += l;
                if l > 0.0 {
                    active[a][p] += 1.0;
                    active[a][neg] -= 1.0;
                }
            }
        }
    }

    let kept = counts.hard + counts.semihard;
    let (loss, scale) = if kept == 0 {
        (0.0, 0.0)
    } else {
        (sum / kept as f64, 1.0 / kept as f64)
    };
    for row in &mut active {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(BatchAllOutcome {
        loss,
        counts,
        distance_grad: active,
    })
}

pub fn batch_hard_loss<T: AsRef<[f64]>, L: PartialEq>(
    embeddings: &[T],
    labels: &[L],
    margin: f64,
    metric: DistanceMetric,
) -> Result<BatchHardOutcome> {
    check_embeddings(embeddings, labels)?;
    let dist = pairwise_distances(embeddings, metric)?;
    batch_hard_from_distances(&dist, labels, margin)
}

pub fn batch_hard_from_distances<L: PartialEq>(
    dist: &[Vec<f64>],
    labels: &[L],
    margin: f64,
) -> Result<BatchHardOutcome> {
    let n = labels.len();
    if distinct_classes(labels) < 2 {
        return Err(Error::DegenerateBatch("batch-hard needs at least two classes".into()));
    }
    if let Some(i) = class_sizes(labels).iter().position(|&s| s < 2) {
        return Err(Error::DegenerateBatch(format!(
            "sample {i} has no positive in the batch"
        )));
    }

    let mut per_anchor = Vec::with_capacity(n);
    let mut selected = Vec::with_capacity(n);
    let mut counts = CategoryCounts::default();
    let mut grad = vec![vec![0.0; n]; n];
    let mut sum = 0.0;
    let scale = 1.0 / n as f64;
    for a in 0..n {
        let mut pos: Option<usize> = None;
        let mut neg: Option<usize> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            if labels[j] == labels[a] {
                if pos.is_none_or(|p| dist[a][j] > dist[a][p]) {
                    pos = Some(j);
                }
            } else if neg.is_none_or(|q| dist[a][j] < dist[a][q]) {
                neg = Some(j);
            }
        }
        let (p, q) = (pos.expect("checked class size"), neg.expect("checked classes"));
        let (d_ap, d_an) = (dist[a][p], dist[a][q]);
        let l = triplet_loss(d_ap, d_an, margin);
        sum += l;
        if l > 0.0 {
            grad[a][p] += scale;
            grad[a][q] -= scale;
        }
        counts.add(classify_triplet(d_ap, d_an, margin));
        per_anchor.push((d_ap, d_an));
        selected.push((p, q));
    }
    Ok(BatchHardOutcome {
        loss: sum * scale,
        per_anchor,
        selected,
        counts,
        distance_grad: grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mining {
    BatchAll,
    BatchHard,
}

impl Mining {
    pub fn name(self) -> &'static str {
        match self {
            Mining::BatchAll => "batch-all",
            Mining::BatchHard => "batch-hard",
        }
    }
}

impl fmt::Display for Mining {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which mining rule is in force for each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MiningStrategy {
    BatchAll,
    BatchHard,
    /// Batch-all for epochs `1..=switch_epoch`, batch-hard afterwards.
    Hybrid { switch_epoch: usize },
}

impl MiningStrategy {
    /// Rule for a 1-based epoch number.
    pub fn at_epoch(self, epoch: usize) -> Mining {
        match self {
            MiningStrategy::BatchAll => Mining::BatchAll,
            MiningStrategy::BatchHard => Mining::BatchHard,
            MiningStrategy::Hybrid { switch_epoch } => {
                if epoch <= switch_epoch {
                    Mining::BatchAll
                } else {
                    Mining::BatchHard
                }
            }
        }
    }

    pub fn validate(self, epochs: usize) -> Result<()> {
        if let MiningStrategy::Hybrid { switch_epoch } = self {
            if switch_epoch == 0 || (epochs > 0 && switch_epoch > epochs) {
                return Err(Error::InvalidConfig(format!(
                    "hybrid switch epoch {switch_epoch} must be in 1..={epochs}"
                )));
            }
        }
        Ok(())
    }
}

impl FromStr for MiningStrategy {
    type Err = Error;

    /// Parses `batch-all`, `batch-hard` or `hybrid` (switch epoch 1; set it
    /// explicitly afterwards).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch-all" => Ok(MiningStrategy::BatchAll),
            "batch-hard" => Ok(MiningStrategy::BatchHard),
            "hybrid" => Ok(MiningStrategy::Hybrid { switch_epoch: 1 }),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

/// `g` sample positions of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub entity_id: String,
    /// Indices into the sample list given to [`sample_batches`].
    pub members: Vec<usize>,
}

/// `b` groups from distinct classes; effective batch size `B = g * b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub groups: Vec<Group>,
}

impl BatchPlan {
    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample indices and per-sample group labels, group by group.
    pub fn flatten(&self) -> (Vec<usize>, Vec<usize>) {
        let mut idx = Vec::with_capacity(self.len());
        let mut labels = Vec::with_capacity(self.len());
        for (gi, g) in self.groups.iter().enumerate() {
            idx.extend_from_slice(&g.members);
            labels.extend(std::iter::repeat_n(gi, g.members.len()));
        }
        (idx, labels)
    }
}

/// One epoch of contrastive-group batches.
///
/// Classes (by `entity_id`, in order of first appearance) with at least two
/// samples are eligible. They are permuted and cut into `⌊eligible / b⌋`
/// batches. Each class contributes `g` members: drawn without replacement
/// when it has at least `g` samples, otherwise all of its samples followed by
/// draws with replacement. The RNG stream is derived from `(seed, epoch)`.
pub fn sample_batches(
    samples: &[MentionRecord],
    g: usize,
    b: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<BatchPlan>> {
    if g < 2 || b < 2 {
        return Err(Error::InvalidConfig(format!(
            "group size ({g}) and groups per batch ({b}) must both be at least 2"
        )));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        members
            .entry(s.entity_id.as_str())
            .or_insert_with(|| {
                order.push(s.entity_id.as_str());
                Vec::new()
            })
            .push(i);
    }
    let mut eligible: Vec<&str> = order.into_iter().filter(|id| members[id].len() >= 2).collect();
    if eligible.len() < b {
        return Err(Error::InsufficientClasses {
            needed: b,
            found: eligible.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    eligible.shuffle(&mut rng);

    let mut plans = Vec::with_capacity(eligible.len() / b);
    for chunk in eligible.chunks_exact(b) {
        let groups = chunk
            .iter()
            .map(|&id| {
                let pool = &members[id];
                let picked = if pool.len() >= g {
                    pool.choose_multiple(&mut rng, g).copied().collect()
                } else {
                    let mut m = pool.clone();
                    while m.len() < g {
                        m.push(pool[rng.random_range(0..pool.len())]);
                    }
                    m
                };
                Group {
                    entity_id: id.to_string(),
                    members: picked,
                }
            })
            .collect();
        plans.push(BatchPlan { groups });
    }
    Ok(plans)
}

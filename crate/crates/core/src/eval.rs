//! Retrieval accuracy, ROC against out-of-KB mentions, and inference timing.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::MentionRecord;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::index::{EmbeddingIndex, Hit};

/// Number of predictions kept per mention in [`EvalReport::records`].
pub const RECORD_DEPTH: usize = 5;
pub const DEFAULT_KS: [usize; 3] = [1, 3, 5];
pub const DEFAULT_THRESHOLDS: usize = 201;
/// Queries encoded per encoder call.
pub const ENCODE_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionResult {
    pub surface: String,
    pub gold: String,
    pub predictions: Vec<Prediction>,
}

impl MentionResult {
    /// 1-based rank of the gold entity, if retrieved.
    pub fn gold_rank(&self) -> Option<usize> {
        self.predictions.iter().position(|p| p.id == self.gold).map(|r| r + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub top_k: BTreeMap<usize, f64>,
    pub n_test: usize,
    pub records: Vec<MentionResult>,
}

impl EvalReport {
    pub fn accuracy(&self, k: usize) -> f64 {
        self.top_k[&k]
    }

    /// Summary line followed by one line per mention.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            n_test: usize,
            top_k: &'a BTreeMap<usize, f64>,
        }
        let mut out = serde_json::to_string(&Summary {
            n_test: self.n_test,
            top_k: &self.top_k,
        })
        .expect("summary serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_jsonl())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Encodes `surfaces` in chunks and retrieves `depth` entities for each.
fn retrieve<E: Encoder + ?Sized>(
    index: &EmbeddingIndex,
    encoder: &E,
    surfaces: &[String],
    depth: usize,
) -> Result<Vec<Vec<Hit>>> {
    let mut out = Vec::with_capacity(surfaces.len());
    for chunk in surfaces.chunks(ENCODE_CHUNK) {
        for v in encoder.encode_batch(chunk)? {
            out.push(index.search(&v, depth)?);
        }
    }
    Ok(out)
}

/// Top-k accuracy of `test` for each `k` in `ks`.
pub fn topk_accuracy<E: Encoder + ?Sized>(
    index: &EmbeddingIndex,
    encoder: &E,
    test: &[MentionRecord],
    ks: &[usize],
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("no test mentions".into()));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidConfig("k values must be positive".into()));
    }
    let depth = ks.iter().copied().max().unwrap().max(RECORD_DEPTH);
    let surfaces: Vec<String> = test.iter().map(|m| m.surface.clone()).collect();
    let hits = retrieve(index, encoder, &surfaces, depth)?;

    let mut hits_at: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut records = Vec::with_capacity(test.len());
    for (m, h) in test.iter().zip(hits) {
        let rank = h.iter().position(|x| x.entity_id == m.entity_id);
        for (&k, n) in hits_at.iter_mut() {
            if rank.is_some_and(|r| r < k) {
                *n += 1;
            }
        }
        records.push(MentionResult {
            surface: m.surface.clone(),
            gold: m.entity_id.clone(),
            predictions: h
                .into_iter()
                .take(RECORD_DEPTH)
                .map(|x| Prediction {
                    id: x.entity_id,
                    distance: x.distance,
                })
                .collect(),
        });
    }
    let n = test.len() as f64;
    Ok(EvalReport {
        top_k: hits_at.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
        n_test: test.len(),
        records,
    })
}

/// What counts as a true positive at a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TprMode {
    /// Accepted and the top-1 entity is the gold one.
    #[default]
    TopOneCorrect,
    /// Accepted, regardless of which entity was retrieved.
    AcceptedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocReport {
    pub fn to_jsonl(&self) -> String {
        let mut out = format!("{{\"auc\":{}}}\n", serde_json::to_string(&self.auc).unwrap());
        for p in &self.points {
            out.push_str(&serde_json::to_string(p).expect("point serializes"));
            out.push('\n');
        }
        out
    }

    /// Whitespace-separated `fpr tpr` columns for plotting tools.
    pub fn to_table(&self) -> String {
        let mut out = String::from("# fpr tpr\n");
        for p in &self.points {
            out.push_str(&format!("{} {}\n", p.fpr, p.tpr));
        }
        out
    }

    pub fn write(&self, jsonl: &Path, table: &Path) -> Result<()> {
        write_text(jsonl, &self.to_jsonl())?;
        write_text(table, &self.to_table())
    }
}

/// A positive mention's nearest-entity distance and whether that entity is gold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPositive {
    pub score: f64,
    pub correct: bool,
}

/// ROC from precomputed scores (lower score = more confident match).
///
/// Thresholds are `n_thresholds` evenly spaced values from the smallest to
/// the largest observed score. A mention is accepted iff `score <= t`. The
/// AUC is the trapezoid area over the points sorted by FPR, starting from
/// the origin (the curve below the smallest score). It is computed from
/// integer counts so that a perfect curve has an area of exactly 1.
pub fn roc_from_scores(
    positives: &[ScoredPositive],
    negatives: &[f64],
    n_thresholds: usize,
    mode: TprMode,
) -> Result<RocReport> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptyInput("ROC needs positives and negatives".into()));
    }
    if n_thresholds < 2 {
        return Err(Error::InvalidConfig("need at least 2 thresholds".into()));
    }
    let all = positives.iter().map(|p| p.score).chain(negatives.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s), b.max(s)));

    let mut pos: Vec<(f64, bool)> = positives
        .iter()
        .map(|p| (p.score, mode == TprMode::AcceptedOnly || p.correct))
        .collect();
    pos.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut neg = negatives.to_vec();
    neg.sort_by(f64::total_cmp);

    let (np, nn) = (pos.len() as u64, neg.len() as u64);
    let mut counts: Vec<(u64, u64)> = Vec::with_capacity(n_thresholds);
    let mut points = Vec::with_capacity(n_thresholds);
    let (mut ip, mut tp, mut ineg) = (0usize, 0u64, 0usize);
    for i in 0..n_thresholds {
        let t = if i + 1 == n_thresholds {
            hi
        } else {
            lo + (hi - lo) * (i as f64 / (n_thresholds - 1) as f64)
        };
        while ip < pos.len() && pos[ip].0 <= t {
            tp += u64::from(pos[ip].1);
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] <= t {
            ineg += 1;
        }
        let fp = ineg as u64;
        counts.push((fp, tp));
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / nn as f64,
            tpr: tp as f64 / np as f64,
        });
    }

    let mut sorted = counts.clone();
    sorted.sort();
    let mut area2: u128 = 0; // twice the area, in units of 1/(nn*np)
    let mut prev = (0u64, 0u64);
    for &(fp, tp) in &sorted {
        area2 += u128::from(fp - prev.0) * u128::from(tp + prev.1);
        prev = (fp, tp);
    }
    let auc = area2 as f64 / (2.0 * nn as f64 * np as f64);
    Ok(RocReport { points, auc })
}

/// Scores one surface by its distance to the nearest indexed entity.
///
/// A query that retrieves nothing (zero vector under cosine) scores the
/// metric's maximal distance and is never correct.
fn score<E: Encoder + ?Sized>(
    index: &EmbeddingIndex,
    encoder: &E,
    surfaces: &[String],
) -> Result<Vec<Option<Hit>>> {
    Ok(retrieve(index, encoder, surfaces, 1)?
        .into_iter()
        .map(|h| h.into_iter().next())
        .collect())
}

pub fn roc_curve<E: Encoder + ?Sized>(
    index: &EmbeddingIndex,
    encoder: &E,
    positives: &[MentionRecord],
    negatives: &[String],
    n_thresholds: usize,
    mode: TprMode,
) -> Result<RocReport> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptyInput("ROC needs positives and negatives".into()));
    }
    let max = index.metric().max_distance();
    let pos_surfaces: Vec<String> = positives.iter().map(|m| m.surface.clone()).collect();
    let pos: Vec<ScoredPositive> = score(index, encoder, &pos_surfaces)?
        .into_iter()
        .zip(positives)
        .map(|(h, m)| match h {
            Some(h) => ScoredPositive {
                score: h.distance,
                correct: h.entity_id == m.entity_id,
            },
            None => ScoredPositive {
                score: max,
                correct: false,
            },
        })
        .collect();
    let neg: Vec<f64> = score(index, encoder, negatives)?
        .into_iter()
        .map(|h| h.map_or(max, |h| h.distance))
        .collect();
    roc_from_scores(&pos, &neg, n_thresholds, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub median_secs: f64,
    pub runs_secs: Vec<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times `repeats` full passes of encoding plus retrieval over `test`,
/// after one untimed warm-up pass.
pub fn benchmark_inference<E: Encoder + ?Sized>(
    index: &EmbeddingIndex,
    encoder: &E,
    test: &[MentionRecord],
    repeats: usize,
) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be >= 1".into()));
    }
    let surfaces: Vec<String> = test.iter().map(|m| m.surface.clone()).collect();
    retrieve(index, encoder, &surfaces, 1)?;
    let mut runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let hits = retrieve(index, encoder, &surfaces, 1)?;
        runs.push(start.elapsed().as_secs_f64());
        std::hint::black_box(hits);
    }
    Ok(BenchReport {
        median_secs: median(&runs),
        runs_secs: runs,
    })
}

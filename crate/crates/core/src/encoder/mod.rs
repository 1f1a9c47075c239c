//! Text encoders.
//!
//! The built-in encoder maps hashed character n-gram features `f` through a
//! single linear layer and `tanh`: `E(x) = tanh(Wᵀ f + c)`. Its loss
//! gradients are computed in closed form by [`loss_and_gradients`].
//! [`provider`] wraps a remote embedding service behind the same
//! [`Encoder`] trait.

mod features;
mod metric;
pub mod provider;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::container::{Decoder, Encoder as BinEncoder, Magic};
use crate::error::{Error, Result};
use crate::mining::{self, CategoryCounts, Mining};

pub use features::{char_ngrams, featurize, SparseVector};
pub use metric::DistanceMetric;
pub(crate) use metric::cosine_from_parts as metric_cosine;

/// A finite, fixed-dimension embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("embedding has dimension 0".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("embedding has non-finite values".into()));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Anything that turns a batch of texts into embeddings, preserving order.
pub trait Encoder {
    fn encode_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

impl<E: Encoder + ?Sized> Encoder for &E {
    fn encode_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        (**self).encode_batch(texts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub feature_dim: usize,
    pub ngram_range: (usize, usize),
    pub out_dim: usize,
    /// Standard deviation of the initial weights.
    pub init_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            feature_dim: 16_384,
            ngram_range: (2, 4),
            out_dim: 128,
            init_scale: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.ngram_range;
        if self.feature_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim and out_dim must be positive".into()));
        }
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!("bad n-gram range ({lo}, {hi})")));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::InvalidConfig("init_scale must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Weights of the built-in encoder. `weights` is row-major
/// `feature_dim x out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub feature_dim: usize,
    pub ngram_range: (usize, usize),
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(EncoderParams {
            feature_dim: cfg.feature_dim,
            ngram_range: cfg.ngram_range,
            out_dim: cfg.out_dim,
            weights: vec![0.0; cfg.feature_dim * cfg.out_dim],
            bias: vec![0.0; cfg.out_dim],
        })
    }

    /// Gaussian weights with standard deviation `cfg.init_scale`, zero bias.
    pub fn random(cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        let normal = Normal::new(0.0, cfg.init_scale)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut p.weights {
            *w = normal.sample(&mut rng);
        }
        Ok(p)
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            feature_dim: self.feature_dim,
            ngram_range: self.ngram_range,
            out_dim: self.out_dim,
            init_scale: 0.0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn featurize(&self, text: &str) -> Result<SparseVector> {
        featurize(text, self.feature_dim, self.ngram_range)
    }

    /// `tanh(Wᵀ f + c)` in full precision.
    pub fn forward(&self, f: &SparseVector) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (k, x) in f.iter() {
            let row = &self.weights[k * self.out_dim..(k + 1) * self.out_dim];
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += x * w;
            }
        }
        z.iter_mut().for_each(|v| *v = v.tanh());
        z
    }

    pub fn encode(&self, text: &str) -> Result<EmbeddingVector> {
        let f = self.featurize(text)?;
        let e = self.forward(&f);
        Ok(EmbeddingVector(e.into_iter().map(|v| v as f32).collect()))
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

impl Encoder for EncoderParams {
    fn encode_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                self.encode(t).map_err(|e| match e {
                    Error::EmptyText { .. } => Error::EmptyText { index: i },
                    other => other,
                })
            })
            .collect()
    }
}

/// Gradient of the loss with the same layout as [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &EncoderParams) -> Self {
        Gradients {
            weights: vec![0.0; p.weights.len()],
            bias: vec![0.0; p.bias.len()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|&g| g == 0.0)
    }
}

/// Which triplet loss to evaluate on a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub mining: Mining,
    pub margin: f64,
    pub metric: DistanceMetric,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: Gradients,
    pub counts: CategoryCounts,
}

/// Mining loss of a batch of texts and its exact gradient.
pub fn loss_and_gradients<L: PartialEq>(
    params: &EncoderParams,
    texts: &[String],
    labels: &[L],
    cfg: &LossConfig,
) -> Result<LossOutput> {
    let feats = texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            params.featurize(t).map_err(|e| match e {
                Error::EmptyText { .. } => Error::EmptyText { index: i },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&SparseVector> = feats.iter().collect();
    loss_and_gradients_features(params, &refs, labels, cfg)
}

/// As [`loss_and_gradients`] for pre-computed features.
///
/// Back-propagation: the mining loss yields `∂L/∂d(i,j)`; the metric turns
/// that into `∂L/∂e_i`; `tanh' = 1 - e²` gives `∂L/∂z_i`; and
/// `∂L/∂W[k,:] = Σ_i f_ik ∂L/∂z_i`, `∂L/∂c = Σ_i ∂L/∂z_i`.
pub fn loss_and_gradients_features<L: PartialEq>(
    params: &EncoderParams,
    feats: &[&SparseVector],
    labels: &[L],
    cfg: &LossConfig,
) -> Result<LossOutput> {
    if feats.len() != labels.len() {
        return Err(Error::DegenerateBatch(format!(
            "{} samples but {} labels",
            feats.len(),
            labels.len()
        )));
    }
    let emb: Vec<Vec<f64>> = feats.iter().map(|f| params.forward(f)).collect();
    let dist = mining::pairwise_distances(&emb, cfg.metric)?;
    let (loss, counts, dgrad) = match cfg.mining {
        Mining::BatchAll => {
            let o = mining::batch_all_from_distances(&dist, labels, cfg.margin)?;
            (o.loss, o.counts, o.distance_grad)
        }
        Mining::BatchHard => {
            let o = mining::batch_hard_from_distances(&dist, labels, cfg.margin)?;
            (o.loss, o.counts, o.distance_grad)
        }
    };

    let n = emb.len();
    let dim = params.out_dim;
    let mut de = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for j in 0..n {
            let w = dgrad[i][j];
            if w == 0.0 {
                continue;
            }
            let (gi, gj) = if i < j {
                let (a, b) = de.split_at_mut(j);
                (&mut a[i], &mut b[0])
            } else {
                let (a, b) = de.split_at_mut(i);
                (&mut b[0], &mut a[j])
            };
            cfg.metric
                .accumulate_gradient(&emb[i], &emb[j], dist[i][j], w, gi, gj);
        }
    }

    let mut grads = Gradients::zeros_like(params);
    for i in 0..n {
        let dz: Vec<f64> = de[i]
            .iter()
            .zip(&emb[i])
            .map(|(g, e)| g * (1.0 - e * e))
            .collect();
        if dz.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (b, d) in grads.bias.iter_mut().zip(&dz) {
            *b += d;
        }
        for (k, x) in feats[i].iter() {
            let row = &mut grads.weights[k * dim..(k + 1) * dim];
            for (r, d) in row.iter_mut().zip(&dz) {
                *r += x * d;
            }
        }
    }
    Ok(LossOutput { loss, grads, counts })
}

const MODEL_MAGIC: &Magic = b"ENTNORM:MODL";
const MODEL_VERSION: u32 = 1;
pub(crate) const TYPE_HASHED_NGRAM: u32 = 1;
pub(crate) const TYPE_TFIDF: u32 = 2;

pub(crate) fn model_encoder(type_tag: u32) -> BinEncoder {
    let mut e = BinEncoder::new(MODEL_MAGIC, MODEL_VERSION);
    e.u32(type_tag);
    e
}

pub(crate) fn open_model(bytes: &[u8], type_tag: u32) -> Result<Decoder<'_>> {
    let mut d = Decoder::open(bytes, MODEL_MAGIC, MODEL_VERSION)?;
    let found = d.u32()?;
    if found != type_tag {
        return Err(Error::Corrupt(format!(
            "model type {found}, expected {type_tag}"
        )));
    }
    Ok(d)
}

/// Writes encoder parameters plus a free-form config header.
///
/// Parameters are stored as little-endian `f64` so a reload is bit-exact.
pub fn save_checkpoint(path: &Path, params: &EncoderParams, header: &str) -> Result<()> {
    let mut e = model_encoder(TYPE_HASHED_NGRAM);
    e.str(header);
    e.u32(params.feature_dim as u32);
    e.u32(params.ngram_range.0 as u32);
    e.u32(params.ngram_range.1 as u32);
    e.u32(params.out_dim as u32);
    for &w in params.weights.iter().chain(&params.bias) {
        e.f64(w);
    }
    e.write_to(path)
}

/// Reads a checkpoint written by [`save_checkpoint`]; returns the params and header.
pub fn load_checkpoint(path: &Path) -> Result<(EncoderParams, String)> {
    let bytes = Decoder::read_file(path)?;
    let mut d = open_model(&bytes, TYPE_HASHED_NGRAM)?;
    let header = d.str()?;
    let feature_dim = d.u32()? as usize;
    let lo = d.u32()? as usize;
    let hi = d.u32()? as usize;
    let out_dim = d.u32()? as usize;
    let cfg = EncoderConfig {
        feature_dim,
        ngram_range: (lo, hi),
        out_dim,
        init_scale: 0.0,
    };
    cfg.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    let n = feature_dim
        .checked_mul(out_dim)
        .ok_or_else(|| Error::Corrupt("parameter count overflow".into()))?;
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        weights.push(d.f64()?);
    }
    let mut bias = Vec::with_capacity(out_dim);
    for _ in 0..out_dim {
        bias.push(d.f64()?);
    }
    d.finish()?;
    Ok((
        EncoderParams {
            feature_dim,
            ngram_range: (lo, hi),
            out_dim,
            weights,
            bias,
        },
        header,
    ))
}

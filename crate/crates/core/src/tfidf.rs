//! TF-IDF nearest-neighbor baseline.
//!
//! Terms are lowercased word unigrams (prefixed `w:`) together with padded
//! character n-grams (prefixed `c:`). Weights are raw term counts times
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, L2-normalized.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::Decoder;
use crate::corpus::{canonicalize, Corpus};
use crate::encoder::{char_ngrams, model_encoder, open_model, EmbeddingVector, Encoder, TYPE_TFIDF};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfConfig {
    pub ngram_range: (usize, usize),
    pub lowercase: bool,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig {
            ngram_range: (2, 4),
            lowercase: true,
        }
    }
}

impl TfidfConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.ngram_range;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!("bad n-gram range ({lo}, {hi})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    config: TfidfConfig,
    /// Sorted terms; a term's column is its position.
    terms: Vec<String>,
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
}

/// Term occurrences of `text`, repeated once per occurrence.
pub fn terms_of(text: &str, cfg: &TfidfConfig) -> Vec<String> {
    let mut text = canonicalize(text);
    if cfg.lowercase {
        text = text.to_lowercase();
    }
    if text.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<String> = text.split(' ').map(|w| format!("w:{w}")).collect();
    out.extend(char_ngrams(&text, cfg.ngram_range).into_iter().map(|g| format!("c:{g}")));
    out
}

/// Fits vocabulary and idf weights; every text is one document.
pub fn fit_tfidf(documents: &[String], cfg: &TfidfConfig) -> Result<TfidfModel> {
    cfg.validate()?;
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    let mut n = 0u64;
    for doc in documents {
        let unique: BTreeSet<String> = terms_of(doc, cfg).into_iter().collect();
        if unique.is_empty() {
            continue;
        }
        n += 1;
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput("no non-empty documents to fit".into()));
    }
    let idf = df
        .values()
        .map(|&d| ((1 + n) as f64 / (1 + d) as f64).ln() + 1.0)
        .collect();
    let terms: Vec<String> = df.into_keys().collect();
    let vocabulary = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(TfidfModel {
        config: *cfg,
        terms,
        vocabulary,
        idf,
    })
}

/// Fits on the corpus' train surfaces, canonical names and KB mentions.
pub fn fit_corpus(corpus: &Corpus, cfg: &TfidfConfig) -> Result<TfidfModel> {
    let docs: Vec<String> = corpus
        .training_samples(true)
        .into_iter()
        .map(|m| m.surface)
        .collect();
    fit_tfidf(&docs, cfg)
}

impl TfidfModel {
    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn config(&self) -> &TfidfConfig {
        &self.config
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocabulary.get(term).map(|&i| self.idf[i])
    }

    /// Sparse weights of `text` as sorted `(column, weight)` pairs.
    pub fn weights(&self, text: &str) -> Vec<(usize, f64)> {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for t in terms_of(text, &self.config) {
            if let Some(&col) = self.vocabulary.get(&t) {
                *tf.entry(col).or_default() += 1.0;
            }
        }
        let mut w: Vec<(usize, f64)> = tf.into_iter().map(|(c, n)| (c, n * self.idf[c])).collect();
        let norm = w.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, x) in &mut w {
                *x /= norm;
            }
        }
        w
    }

    /// Dense encoding of `text` and whether it is the all-OOV zero vector.
    pub fn encode(&self, text: &str) -> (EmbeddingVector, bool) {
        let w = self.weights(text);
        let zero = w.is_empty();
        let mut dense = vec![0f32; self.dim()];
        for (c, x) in w {
            dense[c] = x as f32;
        }
        (EmbeddingVector::new(dense).expect("vocabulary is never empty"), zero)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut e = model_encoder(TYPE_TFIDF);
        e.u32(self.config.ngram_range.0 as u32);
        e.u32(self.config.ngram_range.1 as u32);
        e.u8(self.config.lowercase as u8);
        e.u64(self.terms.len() as u64);
        for (t, &w) in self.terms.iter().zip(&self.idf) {
            e.str(t);
            e.f64(w);
        }
        e.write_to(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = Decoder::read_file(path)?;
        let mut d = open_model(&bytes, TYPE_TFIDF)?;
        let config = TfidfConfig {
            ngram_range: (d.u32()? as usize, d.u32()? as usize),
            lowercase: match d.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Corrupt(format!("bad lowercase flag {b}"))),
            },
        };
        config.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
        let n = d.u64()? as usize;
        if n == 0 {
            return Err(Error::Corrupt("empty vocabulary".into()));
        }
        let mut terms = Vec::new();
        let mut idf = Vec::new();
        for _ in 0..n {
            let t = d.str()?;
            let w = d.f64()?;
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Corrupt(format!("bad idf {w} for {t:?}")));
            }
            if terms.last().is_some_and(|prev: &String| *prev >= t) {
                return Err(Error::Corrupt("vocabulary not strictly sorted".into()));
            }
            terms.push(t);
            idf.push(w);
        }
        d.finish()?;
        let vocabulary = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(TfidfModel {
            config,
            terms,
            vocabulary,
            idf,
        })
    }
}

impl Encoder for TfidfModel {
    fn encode_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.encode(t).0).collect())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::encoder::DistanceMetric;

    fn docs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn idf_by_hand() {
        let m = fit_tfidf(&docs(&["a b", "a c"]), &TfidfConfig::default()).unwrap();
        assert_eq!(m.idf("w:a"), Some(1.0));
        assert_eq!(m.idf("w:b"), Some((3.0f64 / 2.0).ln() + 1.0));
        assert_eq!(m.idf("w:c"), m.idf("w:b"));
        assert_eq!(m.idf("w:d"), None);
        // "^a" starts both documents
        assert_eq!(m.idf("c:^a"), Some(1.0));
    }

    #[test]
    fn vocabulary_is_sorted_and_refit_is_identical() {
        let d = docs(&["Apache Tomcat", "tomcat 9", "IBM MQ"]);
        let a = fit_tfidf(&d, &TfidfConfig::default()).unwrap();
        assert!(a.terms().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, fit_tfidf(&d, &TfidfConfig::default()).unwrap());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(fit_tfidf(&[], &TfidfConfig::default()).is_err());
        assert!(fit_tfidf(&docs(&["  ", ""]), &TfidfConfig::default()).is_err());
    }

    #[test]
    fn training_document_has_unit_norm_and_zero_self_distance() {
        let d = docs(&["Apache Tomcat", "tomcat 9", "IBM MQ"]);
        let m = fit_tfidf(&d, &TfidfConfig::default()).unwrap();
        for t in &d {
            let (v, zero) = m.encode(t);
            assert!(!zero);
            let n: f64 = v.as_slice().iter().map(|&x| (x as f64).powi(2)).sum();
            assert!((n - 1.0).abs() < 1e-6);
            assert_eq!(DistanceMetric::Cosine.distance(v.as_slice(), v.as_slice()).unwrap(), 0.0);
        }
    }

    #[test]
    fn all_oov_text_is_flagged() {
        let m = fit_tfidf(&docs(&["abc"]), &TfidfConfig::default()).unwrap();
        let (v, zero) = m.encode("xyz");
        assert!(zero && v.is_zero());
        assert_eq!(v.dim(), m.dim());
        let (_, zero) = m.encode("");
        assert!(zero);
    }

    #[test]
    fn lowercase_switch() {
        let d = docs(&["Tomcat"]);
        let lower = fit_tfidf(&d, &TfidfConfig::default()).unwrap();
        assert!(!lower.encode("TOMCAT").1);
        assert!(lower.terms().iter().all(|t| t.to_lowercase() == *t));
        let cased = fit_tfidf(
            &d,
            &TfidfConfig {
                lowercase: false,
                ..TfidfConfig::default()
            },
        )
        .unwrap();
        assert!(cased.encode("ZZZZ").1);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tfidf.bin");
        let m = fit_tfidf(&docs(&["Apache Tomcat", "tomcat 9"]), &TfidfConfig::default()).unwrap();
        m.save(&path).unwrap();
        let back = TfidfModel::load(&path).unwrap();
        assert_eq!(m, back);
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        std::fs::write(&path, &bytes).unwrap();
        assert!(TfidfModel::load(&path).is_err());
    }

    #[test]
    fn checkpoint_loader_rejects_tfidf_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tfidf.bin");
        fit_tfidf(&docs(&["x y"]), &TfidfConfig::default()).unwrap().save(&path).unwrap();
        assert!(matches!(crate::encoder::load_checkpoint(&path), Err(Error::Corrupt(_))));
    }

    proptest! {
        #[test]
        fn norms_are_one_or_flagged(
            d in prop::collection::vec("[a-e ]{1,8}", 1..6),
            q in "[a-h ]{0,8}",
        ) {
            if let Ok(m) = fit_tfidf(&d, &TfidfConfig::default()) {
                prop_assert!(m.idf.iter().all(|&w| w.is_finite() && w >= 1.0));
                let (v, zero) = m.encode(&q);
                let n: f64 = v.as_slice().iter().map(|&x| (x as f64).powi(2)).sum();
                if zero {
                    prop_assert_eq!(n, 0.0);
                } else {
                    prop_assert!((n - 1.0).abs() < 1e-5);
                }
            }
        }
    }
}

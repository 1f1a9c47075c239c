//! Hashed character n-gram features.
//!
//! The canonicalized text is padded with `^` on the left and `$` on the
//! right, every character n-gram with length in the configured range is
//! counted, n-grams are hashed into buckets with
//! [`feature_bucket`](crate::hash::feature_bucket) and the count vector is
//! L2-normalized.

use std::collections::BTreeMap;

use crate::corpus::canonicalize;
use crate::error::{Error, Result};
use crate::hash::feature_bucket;

pub const BOS: char = '^';
pub const EOS: char = '$';

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// All character n-grams of the padded text, in order of appearance.
///
/// When the padded text is shorter than every requested length the whole
/// padded string is the single n-gram.
pub fn char_ngrams(text: &str, ngram_range: (usize, usize)) -> Vec<String> {
    let padded: Vec<char> = std::iter::once(BOS)
        .chain(text.chars())
        .chain(std::iter::once(EOS))
        .collect();
    let (lo, hi) = ngram_range;
    let mut out = Vec::new();
    for n in lo..=hi {
        if n > padded.len() {
            break;
        }
        out.extend(padded.windows(n).map(|w| w.iter().collect::<String>()));
    }
    if out.is_empty() {
        out.push(padded.iter().collect());
    }
    out
}

/// L2-normalized hashed n-gram counts of `text`.
pub fn featurize(text: &str, feature_dim: usize, ngram_range: (usize, usize)) -> Result<SparseVector> {
    let text = canonicalize(text);
    if text.is_empty() {
        return Err(Error::EmptyText { index: 0 });
    }
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for gram in char_ngrams(&text, ngram_range) {
        *counts.entry(feature_bucket(&gram, feature_dim) as u32).or_default() += 1.0;
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    let (indices, values) = counts.into_iter().map(|(i, c)| (i, c / norm)).unzip();
    Ok(SparseVector { indices, values })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;

    #[test]
    fn bigrams_of_ab() {
        assert_eq!(char_ngrams("ab", (2, 2)), ["^a", "ab", "b$"]);
        let f = featurize("ab", 1024, (2, 2)).unwrap();
        assert!(f.nnz() <= 3 && f.nnz() >= 1);
        assert!((f.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn android_bucket_count_matches_hand_enumeration() {
        // "^Android$" has 8 bigrams, 7 trigrams, 6 four-grams, all distinct.
        let grams = [
            "^A", "An", "nd", "dr", "ro", "oi", "id", "d$", "^An", "And", "ndr", "dro", "roi",
            "oid", "id$", "^And", "Andr", "ndro", "droi", "roid", "oid$",
        ];
        assert_eq!(char_ngrams("Android", (2, 4)).len(), grams.len());
        let buckets: HashSet<usize> = grams.iter().map(|g| feature_bucket(g, 4096)).collect();
        let f = featurize("Android", 4096, (2, 4)).unwrap();
        assert_eq!(f.nnz(), buckets.len());
        let got: HashSet<usize> = f.iter().map(|(i, _)| i).collect();
        assert_eq!(got, buckets);
    }

    #[test]
    fn repeated_grams_are_counted() {
        // "^aaa$" bigrams: ^a, aa, aa, a$
        let f = featurize("aaa", 1 << 20, (2, 2)).unwrap();
        let dense: Vec<f64> = f.values.clone();
        let mut sorted = dense.clone();
        sorted.sort_by(f64::total_cmp);
        let expected = [1.0, 1.0, 2.0].map(|c| c / 6f64.sqrt());
        for (a, b) in sorted.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn whitespace_is_canonicalized_and_empty_rejected() {
        assert_eq!(
            featurize("  IBM   MQ ", 512, (2, 3)).unwrap(),
            featurize("IBM MQ", 512, (2, 3)).unwrap()
        );
        assert!(matches!(featurize(" \t", 512, (2, 3)), Err(Error::EmptyText { .. })));
    }

    #[test]
    fn short_text_falls_back_to_whole_string() {
        assert_eq!(char_ngrams("a", (4, 5)), ["^a$"]);
        let f = featurize("a", 64, (4, 5)).unwrap();
        assert_eq!(f.nnz(), 1);
    }

    proptest! {
        #[test]
        fn unit_norm(text in "[a-zA-Z0-9 ._-]{1,30}", lo in 1usize..4, extra in 0usize..3) {
            prop_assume!(!text.trim().is_empty());
            let f = featurize(&text, 257, (lo, lo + extra)).unwrap();
            prop_assert!((f.norm() - 1.0).abs() < 1e-12);
            prop_assert!(f.indices.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(f.values.iter().all(|&v| v > 0.0));
        }
    }
}

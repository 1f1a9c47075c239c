//! Precomputed entity embeddings and exact nearest-neighbor lookup.
//!
//! File layout (little-endian): 12-byte magic `ENTNORM:INDX`, `u32`
//! version, `u8` metric tag, `u8` mode tag, `u32` dim, `u32` row count, one
//! length-prefixed UTF-8 entity id per row, `rows x dim` `f32` values, and a
//! `u64` FNV-1a digest of all preceding bytes.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::container::{Decoder, Encoder as BinEncoder, Magic};
use crate::corpus::Corpus;
use crate::encoder::{DistanceMetric, EmbeddingVector, Encoder};
use crate::error::{Error, Result};
use crate::hash::Fnv64;

const INDEX_MAGIC: &Magic = b"ENTNORM:INDX";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMode {
    /// One row per entity: its canonical name.
    #[default]
    Canonical,
    /// Canonical names followed by every train mention.
    Extended,
}

impl IndexMode {
    fn tag(self) -> u8 {
        match self {
            IndexMode::Canonical => 0,
            IndexMode::Extended => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(IndexMode::Canonical),
            1 => Some(IndexMode::Extended),
            _ => None,
        }
    }
}

impl fmt::Display for IndexMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexMode::Canonical => "canonical",
            IndexMode::Extended => "extended",
        })
    }
}

impl FromStr for IndexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(IndexMode::Canonical),
            "extended" => Ok(IndexMode::Extended),
            other => Err(Error::InvalidConfig(format!("unknown index mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub entity_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    entity_ids: Vec<String>,
    vectors: Vec<f32>,
    dim: usize,
    metric: DistanceMetric,
    mode: IndexMode,
    digest: u64,
    /// Per-row squared norm, accumulated like [`DistanceMetric::distance`].
    sq_norms: Vec<f64>,
    n_entities: usize,
}

impl EmbeddingIndex {
    /// Builds an index from one embedding per row.
    pub fn from_rows(
        entity_ids: Vec<String>,
        rows: Vec<EmbeddingVector>,
        metric: DistanceMetric,
        mode: IndexMode,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("index has no rows".into()));
        }
        if rows.len() != entity_ids.len() {
            return Err(Error::InvalidConfig(format!(
                "{} ids for {} rows",
                entity_ids.len(),
                rows.len()
            )));
        }
        let dim = rows[0].dim();
        let mut vectors = Vec::with_capacity(dim * rows.len());
        for r in rows {
            if r.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.dim(),
                });
            }
            vectors.extend(r.into_inner());
        }
        Ok(Self::assemble(entity_ids, vectors, dim, metric, mode))
    }

    fn assemble(entity_ids: Vec<String>, vectors: Vec<f32>, dim: usize, metric: DistanceMetric, mode: IndexMode) -> Self {
        let digest = content_digest(&entity_ids, &vectors);
        let sq_norms = vectors
            .chunks_exact(dim)
            .map(|r| r.iter().map(|&x| f64::from(x) * f64::from(x)).sum())
            .collect();
        let mut seen = std::collections::HashSet::new();
        let n_entities = entity_ids.iter().filter(|id| seen.insert(id.as_str())).count();
        EmbeddingIndex {
            entity_ids,
            vectors,
            dim,
            metric,
            mode,
            digest,
            sq_norms,
            n_entities,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn mode(&self) -> IndexMode {
        self.mode
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn len(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entity_ids.is_empty()
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn entity_ids(&self) -> &[String] {
        &self.entity_ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn row_distance(&self, i: usize, q: &[f32], q_nz: &[usize], q_sq: f64) -> Result<f64> {
        match self.metric {
            DistanceMetric::Cosine => {
                let nr = self.sq_norms[i];
                if nr == 0.0 {
                    return Ok(DistanceMetric::Cosine.max_distance());
                }
                // skipping zero query components leaves the dot product unchanged
                let row = self.row(i);
                let mut dot = 0.0f64;
                for &k in q_nz {
                    dot += f64::from(q[k]) * f64::from(row[k]);
                }
                crate::encoder::metric_cosine(dot, q_sq, nr)
            }
            m => m.distance(q, self.row(i)),
        }
    }

    /// Top `k` entities by ascending distance.
    ///
    /// An entity's distance is the minimum over its rows; ties are broken by
    /// the row where that minimum first occurs. Errors on a dimension
    /// mismatch and on a zero query under the cosine metric.
    pub fn query(&self, q: &EmbeddingVector, k: usize) -> Result<Vec<Hit>> {
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.dim(),
            });
        }
        let qs = q.as_slice();
        let mut q_nz = Vec::with_capacity(qs.len());
        let mut q_sq = 0.0f64;
        for (i, &x) in qs.iter().enumerate() {
            q_sq += f64::from(x) * f64::from(x);
            if x != 0.0 {
                q_nz.push(i);
            }
        }
        if self.metric == DistanceMetric::Cosine && q_sq == 0.0 {
            return Err(Error::ZeroVector);
        }

        // (distance, first row) per entity, in order of first appearance
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(self.n_entities);
        let mut slot: HashMap<&str, usize> = HashMap::with_capacity(self.n_entities);
        for i in 0..self.len() {
            let d = self.row_distance(i, qs, &q_nz, q_sq)?;
            match slot.get(self.entity_ids[i].as_str()) {
                Some(&s) => {
                    if d < best[s].0 {
                        best[s] = (d, i);
                    }
                }
                None => {
                    slot.insert(self.entity_ids[i].as_str(), best.len());
                    best.push((d, i));
                }
            }
        }
        best.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(best
            .into_iter()
            .take(k)
            .map(|(d, row)| Hit {
                entity_id: self.entity_ids[row].clone(),
                distance: d,
            })
            .collect())
    }

    /// Like [`query`](Self::query), but a zero query under the cosine metric
    /// is at maximal distance from everything and retrieves nothing.
    pub fn search(&self, q: &EmbeddingVector, k: usize) -> Result<Vec<Hit>> {
        if self.metric == DistanceMetric::Cosine && q.is_zero() {
            if q.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: q.dim(),
                });
            }
            return Ok(Vec::new());
        }
        self.query(q, k)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut e = BinEncoder::new(INDEX_MAGIC, INDEX_VERSION);
        e.u8(self.metric.tag());
        e.u8(self.mode.tag());
        e.u32(self.dim as u32);
        e.u32(self.len() as u32);
        for id in &self.entity_ids {
            e.str(id);
        }
        for &v in &self.vectors {
            e.f32(v);
        }
        e.write_to(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = Decoder::read_file(path)?;
        let mut d = Decoder::open(&bytes, INDEX_MAGIC, INDEX_VERSION)?;
        let metric = DistanceMetric::from_tag(d.u8()?)
            .ok_or_else(|| Error::Corrupt("unknown metric tag".into()))?;
        let mode =
            IndexMode::from_tag(d.u8()?).ok_or_else(|| Error::Corrupt("unknown mode tag".into()))?;
        let dim = d.u32()? as usize;
        let rows = d.u32()? as usize;
        if dim == 0 || rows == 0 {
            return Err(Error::Corrupt("empty index".into()));
        }
        let mut ids = Vec::with_capacity(rows);
        for _ in 0..rows {
            ids.push(d.str()?);
        }
        let n = rows
            .checked_mul(dim)
            .ok_or_else(|| Error::Corrupt("size overflow".into()))?;
        let mut vectors = Vec::with_capacity(n);
        for _ in 0..n {
            let v = d.f32()?;
            if !v.is_finite() {
                return Err(Error::Corrupt("non-finite value".into()));
            }
            vectors.push(v);
        }
        d.finish()?;
        Ok(Self::assemble(ids, vectors, dim, metric, mode))
    }
}

fn content_digest(ids: &[String], vectors: &[f32]) -> u64 {
    let mut h = Fnv64::new();
    for id in ids {
        h.update(&(id.len() as u32).to_le_bytes());
        h.update(id.as_bytes());
    }
    for v in vectors {
        h.update(&v.to_le_bytes());
    }
    h.finish()
}

/// Surfaces indexed for `mode`, with their entity ids, in corpus order.
pub fn indexed_surfaces(corpus: &Corpus, mode: IndexMode) -> (Vec<String>, Vec<String>) {
    let mut ids = Vec::new();
    let mut texts = Vec::new();
    for e in corpus.entities() {
        ids.push(e.id.clone());
        texts.push(e.canonical_name.clone());
    }
    if mode == IndexMode::Extended {
        for m in corpus.train() {
            ids.push(m.entity_id.clone());
            texts.push(m.surface.clone());
        }
    }
    (ids, texts)
}

/// Encodes the indexed surfaces of `corpus` and builds the index.
pub fn build_index<E: Encoder + ?Sized>(
    encoder: &E,
    corpus: &Corpus,
    mode: IndexMode,
    metric: DistanceMetric,
) -> Result<EmbeddingIndex> {
    if corpus.entities().is_empty() {
        return Err(Error::EmptyInput("corpus has no entities".into()));
    }
    let (ids, texts) = indexed_surfaces(corpus, mode);
    let rows = encoder.encode_batch(&texts)?;
    EmbeddingIndex::from_rows(ids, rows, metric, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Entity, MentionRecord};
    use crate::encoder::{EncoderConfig, EncoderParams};

    fn ev(v: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn abc() -> EmbeddingIndex {
        EmbeddingIndex::from_rows(
            vec!["A".into(), "B".into(), "C".into()],
            vec![ev(&[0.0]), ev(&[1.0]), ev(&[2.0])],
            DistanceMetric::Euclidean,
            IndexMode::Canonical,
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_example() {
        let hits = abc().query(&ev(&[0.9]), 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].entity_id, "B");
        assert!((hits[0].distance - 0.1).abs() < 1e-6);
        assert_eq!(hits[1].entity_id, "A");
        assert!((hits[1].distance - 0.9).abs() < 1e-6);
    }

    #[test]
    fn k_larger_than_entities() {
        let hits = abc().query(&ev(&[5.0]), 10).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.entity_id.as_str()).collect();
        assert_eq!(ids, ["C", "B", "A"]);
    }

    #[test]
    fn ties_break_by_row_order() {
        let idx = EmbeddingIndex::from_rows(
            vec!["X".into(), "Y".into(), "Z".into()],
            vec![ev(&[1.0]), ev(&[-1.0]), ev(&[1.0])],
            DistanceMetric::Euclidean,
            IndexMode::Canonical,
        )
        .unwrap();
        let ids: Vec<_> = idx.query(&ev(&[0.0]), 3).unwrap().into_iter().map(|h| h.entity_id).collect();
        assert_eq!(ids, ["X", "Y", "Z"]);
    }

    #[test]
    fn extended_mode_deduplicates_entities() {
        let idx = EmbeddingIndex::from_rows(
            vec!["A".into(), "B".into(), "A".into(), "B".into()],
            vec![ev(&[0.0]), ev(&[5.0]), ev(&[4.0]), ev(&[10.0])],
            DistanceMetric::Euclidean,
            IndexMode::Extended,
        )
        .unwrap();
        let hits = idx.query(&ev(&[4.2]), 5).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].entity_id, "A");
        assert!((hits[0].distance - 0.2).abs() < 1e-6);
        assert_eq!(idx.n_entities(), 2);
    }

    #[test]
    fn query_errors() {
        let idx = abc();
        assert!(matches!(
            idx.query(&ev(&[1.0, 2.0]), 1),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
        let cos = EmbeddingIndex::from_rows(
            vec!["A".into()],
            vec![ev(&[1.0, 0.0])],
            DistanceMetric::Cosine,
            IndexMode::Canonical,
        )
        .unwrap();
        assert!(matches!(cos.query(&ev(&[0.0, 0.0]), 1), Err(Error::ZeroVector)));
        assert!(cos.search(&ev(&[0.0, 0.0]), 1).unwrap().is_empty());
    }

    #[test]
    fn cosine_self_query_is_zero() {
        let corpus = Corpus::new(
            vec![Entity::new("E1", "WebSphere"), Entity::new("E2", "Tomcat")],
            vec![MentionRecord::new("WAS", "E1")],
            vec![],
        )
        .unwrap();
        let p = EncoderParams::random(
            &EncoderConfig {
                feature_dim: 512,
                out_dim: 8,
                ..EncoderConfig::default()
            },
            4,
        )
        .unwrap();
        let idx = build_index(&p, &corpus, IndexMode::Canonical, DistanceMetric::Cosine).unwrap();
        assert_eq!(idx.len(), 2);
        let hits = idx.query(&p.encode("Tomcat").unwrap(), 1).unwrap();
        assert_eq!(hits[0].entity_id, "E2");
        assert_eq!(hits[0].distance, 0.0);

        let ext = build_index(&p, &corpus, IndexMode::Extended, DistanceMetric::Cosine).unwrap();
        assert_eq!(ext.len(), 3);
        let hits = ext.query(&p.encode("WAS").unwrap(), 1).unwrap();
        assert_eq!((hits[0].entity_id.as_str(), hits[0].distance), ("E1", 0.0));
    }

    #[test]
    fn empty_entity_set_rejected() {
        let corpus = Corpus::new(vec![], vec![], vec![]).unwrap();
        let p = EncoderParams::random(
            &EncoderConfig {
                feature_dim: 64,
                out_dim: 4,
                ..EncoderConfig::default()
            },
            0,
        )
        .unwrap();
        assert!(build_index(&p, &corpus, IndexMode::Canonical, DistanceMetric::Cosine).is_err());
    }

    #[test]
    fn save_load_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.bin");
        let idx = abc();
        idx.save(&path).unwrap();
        let back = EmbeddingIndex::load(&path).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.digest(), idx.digest());

        let bytes = std::fs::read(&path).unwrap();
        // last row value sits just before the digest
        let mut flipped = bytes.clone();
        let at = bytes.len() - 8 - 2;
        flipped[at] ^= 0x10;
        std::fs::write(&path, &flipped).unwrap();
        assert!(matches!(EmbeddingIndex::load(&path), Err(Error::Corrupt(_))));

        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(EmbeddingIndex::load(&path), Err(Error::Corrupt(_))));
    }
}

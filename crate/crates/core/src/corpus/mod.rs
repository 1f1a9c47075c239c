//! Knowledge-base entities, labeled mentions and the train/test split.
//!
//! Files are line-delimited JSON. KB records look like
//! `{"id": "E1", "name": "IBM MQ", "mentions": ["MQSeries"]}` and split
//! records like `{"surface": "ibm mq 9", "id": "E1"}`. All text is
//! canonicalized on construction, so every comparison downstream is an
//! exact string comparison.

mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{synthesize_corpus, Perturbation, SynthesisConfig};

/// Trims the ends and collapses internal whitespace runs to a single space.
/// Case is preserved.
pub fn canonicalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    #[serde(rename = "name")]
    pub canonical_name: String,
    #[serde(rename = "mentions", default)]
    pub kb_mentions: Vec<String>,
}

impl Entity {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Entity {
            id: id.into(),
            canonical_name: name.into(),
            kb_mentions: Vec::new(),
        }
    }

    pub fn with_mentions<I, S>(mut self, mentions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.kb_mentions = mentions.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MentionRecord {
    pub surface: String,
    #[serde(rename = "id")]
    pub entity_id: String,
}

impl MentionRecord {
    pub fn new(surface: impl Into<String>, entity_id: impl Into<String>) -> Self {
        MentionRecord {
            surface: surface.into(),
            entity_id: entity_id.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One violated corpus invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    EmptyName { id: String },
    DuplicateEntityId { id: String },
    EmptySurface { split: Split, index: usize },
    DanglingEntity { split: Split, index: usize, record: MentionRecord },
    /// A test surface that also appears in train or among KB mentions.
    SplitOverlap { surface: String },
    /// One surface labeled with more than one entity inside a single split.
    ConflictingLabels { split: Split, surface: String, ids: Vec<String> },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::EmptyName { id } => write!(f, "entity {id:?} has an empty name"),
            Finding::DuplicateEntityId { id } => write!(f, "entity id {id:?} is not unique"),
            Finding::EmptySurface { split, index } => {
                write!(f, "{split} record {index} has an empty surface")
            }
            Finding::DanglingEntity { split, index, record } => write!(
                f,
                "{split} record {index} ({:?}) refers to unknown entity {:?}",
                record.surface, record.entity_id
            ),
            Finding::SplitOverlap { surface } => {
                write!(f, "test surface {surface:?} also occurs in train/KB")
            }
            Finding::ConflictingLabels { split, surface, ids } => write!(
                f,
                "{split} surface {surface:?} is labeled with several entities: {}",
                ids.join(", ")
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    /// Converts the first class of finding into the matching error.
    fn into_result(self) -> Result<()> {
        if let Some(Finding::DanglingEntity { record, .. }) = self
            .findings
            .iter()
            .find(|f| matches!(f, Finding::DanglingEntity { .. }))
        {
            return Err(Error::DanglingEntity {
                surface: record.surface.clone(),
                entity_id: record.entity_id.clone(),
            });
        }
        let overlaps: Vec<String> = self
            .findings
            .iter()
            .filter_map(|f| match f {
                Finding::SplitOverlap { surface } => Some(surface.clone()),
                _ => None,
            })
            .collect();
        if !overlaps.is_empty() {
            return Err(Error::SplitOverlap(overlaps));
        }
        match self.findings.first() {
            Some(f) => Err(Error::InvalidCorpus(f.to_string())),
            None => Ok(()),
        }
    }
}

/// Entities plus train and test mentions. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    entities: Vec<Entity>,
    train: Vec<MentionRecord>,
    test: Vec<MentionRecord>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Canonicalizes all text and rejects corpora that fail validation.
    pub fn new(
        entities: Vec<Entity>,
        train: Vec<MentionRecord>,
        test: Vec<MentionRecord>,
    ) -> Result<Self> {
        let corpus = Self::new_unchecked(entities, train, test);
        validate_corpus(&corpus).into_result()?;
        Ok(corpus)
    }

    /// Builds without validating; used to inspect broken data with
    /// [`validate_corpus`].
    pub fn new_unchecked(
        mut entities: Vec<Entity>,
        mut train: Vec<MentionRecord>,
        mut test: Vec<MentionRecord>,
    ) -> Self {
        for e in &mut entities {
            e.canonical_name = canonicalize(&e.canonical_name);
            for m in &mut e.kb_mentions {
                *m = canonicalize(m);
            }
        }
        for m in train.iter_mut().chain(test.iter_mut()) {
            m.surface = canonicalize(&m.surface);
        }
        let mut by_id = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            by_id.entry(e.id.clone()).or_insert(i);
        }
        Corpus {
            entities,
            train,
            test,
            by_id,
        }
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn train(&self) -> &[MentionRecord] {
        &self.train
    }

    pub fn test(&self) -> &[MentionRecord] {
        &self.test
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.by_id.get(id).map(|&i| &self.entities[i])
    }

    /// Position of an entity in KB order.
    pub fn entity_index(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Labeled samples used for training: KB mentions and train mentions,
    /// preceded per entity by its canonical name when `include_names` is set.
    pub fn training_samples(&self, include_names: bool) -> Vec<MentionRecord> {
        let mut out = Vec::new();
        for e in &self.entities {
            if include_names {
                out.push(MentionRecord::new(e.canonical_name.clone(), e.id.clone()));
            }
            for m in &e.kb_mentions {
                out.push(MentionRecord::new(m.clone(), e.id.clone()));
            }
        }
        out.extend(self.train.iter().cloned());
        out
    }

    /// Same entities, different splits. The result is validated.
    pub fn with_splits(&self, train: Vec<MentionRecord>, test: Vec<MentionRecord>) -> Result<Self> {
        Corpus::new(self.entities.clone(), train, test)
    }
}

/// Checks every corpus invariant and reports all violations found.
pub fn validate_corpus(c: &Corpus) -> ValidationReport {
    let mut findings = Vec::new();

    let mut seen_ids = HashSet::new();
    for e in &c.entities {
        if !seen_ids.insert(e.id.as_str()) {
            findings.push(Finding::DuplicateEntityId { id: e.id.clone() });
        }
        if canonicalize(&e.canonical_name).is_empty() {
            findings.push(Finding::EmptyName { id: e.id.clone() });
        }
    }

    for (split, records) in [(Split::Train, &c.train), (Split::Test, &c.test)] {
        let mut labels: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (index, r) in records.iter().enumerate() {
            if r.surface.trim().is_empty() {
                findings.push(Finding::EmptySurface { split, index });
            }
            if !c.by_id.contains_key(&r.entity_id) {
                findings.push(Finding::DanglingEntity {
                    split,
                    index,
                    record: r.clone(),
                });
            }
            labels
                .entry(r.surface.as_str())
                .or_default()
                .insert(r.entity_id.as_str());
        }
        for (surface, ids) in labels {
            if ids.len() > 1 {
                findings.push(Finding::ConflictingLabels {
                    split,
                    surface: surface.to_string(),
                    ids: ids.into_iter().map(String::from).collect(),
                });
            }
        }
    }

    let seen: HashSet<&str> = c
        .train
        .iter()
        .map(|m| m.surface.as_str())
        .chain(
            c.entities
                .iter()
                .flat_map(|e| e.kb_mentions.iter().map(String::as_str)),
        )
        .collect();
    let mut reported = HashSet::new();
    for m in &c.test {
        if seen.contains(m.surface.as_str()) && reported.insert(m.surface.as_str()) {
            findings.push(Finding::SplitOverlap {
                surface: m.surface.clone(),
            });
        }
    }

    ValidationReport { findings }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Loads and validates a corpus from KB, train and test files.
pub fn load_corpus(kb_path: &Path, train_path: &Path, test_path: &Path) -> Result<Corpus> {
    let entities: Vec<Entity> = read_jsonl(kb_path)?;
    let train: Vec<MentionRecord> = read_jsonl(train_path)?;
    let test: Vec<MentionRecord> = read_jsonl(test_path)?;
    Corpus::new(entities, train, test)
}

pub fn save_corpus(c: &Corpus, kb_path: &Path, train_path: &Path, test_path: &Path) -> Result<()> {
    write_jsonl(kb_path, &c.entities)?;
    write_jsonl(train_path, &c.train)?;
    write_jsonl(test_path, &c.test)?;
    Ok(())
}

/// Reads one surface per line, skipping blank lines.
pub fn read_surfaces(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?;
    Ok(text
        .lines()
        .map(canonicalize)
        .filter(|s| !s.is_empty())
        .collect())
}

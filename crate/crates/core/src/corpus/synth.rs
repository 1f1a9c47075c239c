//! Deterministic synthetic entity/mention corpora.
//!
//! Entity names are pronounceable pseudo-words, often followed by a product
//! word shared across entities. Mentions are built from a name by a random
//! chain of perturbations, so surface overlap with the name is partial and
//! noisy. With case-flip enabled every mention is finally restyled in all
//! caps or inverted case, so it shares almost no character n-grams with the
//! title-cased name. Every surface is globally unique, which keeps the split
//! disjoint and labels unambiguous.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Entity, MentionRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    CaseFlip,
    TokenDrop,
    TokenSwap,
    SuffixAppend,
    CharacterTypo,
}

impl Perturbation {
    pub const ALL: [Perturbation; 5] = [
        Perturbation::CaseFlip,
        Perturbation::TokenDrop,
        Perturbation::TokenSwap,
        Perturbation::SuffixAppend,
        Perturbation::CharacterTypo,
    ];

    /// Whether repeated application can keep producing new strings.
    fn is_generative(self) -> bool {
        matches!(
            self,
            Perturbation::CaseFlip | Perturbation::SuffixAppend | Perturbation::CharacterTypo
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub n_entities: usize,
    pub mentions_per_entity: usize,
    pub perturbations: Vec<Perturbation>,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            n_entities: 30,
            mentions_per_entity: 10,
            perturbations: Perturbation::ALL.to_vec(),
            seed: 7,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_entities == 0 || self.mentions_per_entity == 0 {
            return Err(Error::InvalidConfig(
                "n_entities and mentions_per_entity must be positive".into(),
            ));
        }
        if self.perturbations.is_empty() {
            return Err(Error::InvalidConfig("no perturbation enabled".into()));
        }
        if !self.perturbations.iter().any(|p| p.is_generative()) {
            return Err(Error::InvalidConfig(
                "token-drop/token-swap alone cannot produce enough distinct mentions; \
                 enable case-flip, suffix-append or character-typo"
                    .into(),
            ));
        }
        Ok(())
    }
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cr", "dr",
    "fl", "gr", "kl", "pl", "st", "tr", "vr", "sh", "th", "qu",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "io", "ea", "y"];
const CODAS: &[&str] = &["", "", "", "n", "r", "x", "s", "l", "m", "k", "nd", "rt"];

const PRODUCT_WORDS: &[&str] = &[
    "Server", "Data", "Cloud", "Studio", "Gateway", "Manager", "Engine", "Runtime", "Suite",
    "Platform", "Connect", "Framework", "Monitor", "Broker", "Store",
];

const SUFFIXES: &[&str] = &[
    "v2", "v3", "8.5", "9.0", "11g", "2019", "2021", "x64", "for Linux", "for Windows", "EE",
    "LTS", "Enterprise", "Standard Edition", "(legacy)", "client", "SDK", "Pro", "Community",
    "on z/OS", "Express", "release", "Core", "Lite",
];

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
        w.push_str(CODAS.choose(rng).unwrap());
    }
    let mut chars = w.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => w,
    }
}

fn entity_name(rng: &mut ChaCha8Rng) -> String {
    let mut tokens = vec![pseudo_word(rng)];
    let roll: f64 = rng.random();
    if roll < 0.35 {
        tokens.push(pseudo_word(rng));
    }
    if rng.random_bool(0.7) {
        tokens.push(PRODUCT_WORDS.choose(rng).unwrap().to_string());
    }
    tokens.join(" ")
}

fn flip_case(c: char) -> String {
    if c.is_uppercase() {
        c.to_lowercase().collect()
    } else {
        c.to_uppercase().collect()
    }
}

/// All caps or inverted case, chosen at random.
fn restyle_case(text: &str, rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(0.5) {
        text.to_uppercase()
    } else {
        text.chars().map(flip_case).collect()
    }
}

fn apply(op: Perturbation, text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut tokens: Vec<String> = text.split(' ').map(String::from).collect();
    match op {
        Perturbation::CaseFlip => match rng.random_range(0..3) {
            0 => text.to_lowercase(),
            1 => text.to_uppercase(),
            _ => {
                let chars: Vec<char> = text.chars().collect();
                let candidates: Vec<usize> = (0..chars.len())
                    .filter(|&i| chars[i].is_alphabetic())
                    .collect();
                match candidates.choose(rng) {
                    Some(&i) => chars
                        .iter()
                        .enumerate()
                        .map(|(j, &c)| if j == i { flip_case(c) } else { c.to_string() })
                        .collect(),
                    None => text.to_string(),
                }
            }
        },
        Perturbation::TokenDrop => {
            if tokens.len() >= 2 {
                let i = rng.random_range(0..tokens.len());
                tokens.remove(i);
            }
            tokens.join(" ")
        }
        Perturbation::TokenSwap => {
            if tokens.len() >= 2 {
                let i = rng.random_range(0..tokens.len() - 1);
                tokens.swap(i, i + 1);
            }
            tokens.join(" ")
        }
        Perturbation::SuffixAppend => {
            tokens.push(SUFFIXES.choose(rng).unwrap().to_string());
            tokens.join(" ")
        }
        Perturbation::CharacterTypo => {
            let eligible: Vec<usize> = (0..tokens.len())
                .filter(|&i| tokens[i].chars().count() >= 3)
                .collect();
            let Some(&t) = eligible.choose(rng) else {
                return text.to_string();
            };
            let mut chars: Vec<char> = tokens[t].chars().collect();
            let pos = rng.random_range(1..chars.len());
            let letter = (b'a' + rng.random_range(0..26u8)) as char;
            match rng.random_range(0..4) {
                0 => chars[pos] = letter,
                1 => {
                    chars.remove(pos);
                }
                2 => chars.insert(pos, letter),
                _ => chars.swap(pos - 1, pos),
            }
            tokens[t] = chars.into_iter().collect();
            tokens.join(" ")
        }
    }
}

/// Builds a corpus that is a pure function of `cfg`.
///
/// Each entity receives exactly `mentions_per_entity` distinct mentions;
/// `floor(2m/5)` of them go to test and the rest to train.
pub fn synthesize_corpus(cfg: &SynthesisConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ops = cfg.perturbations.clone();
    ops.sort();
    ops.dedup();
    let generative: Vec<Perturbation> = ops.iter().copied().filter(|p| p.is_generative()).collect();

    let restyle = ops.contains(&Perturbation::CaseFlip);

    let mut used: HashSet<String> = HashSet::new();
    let mut entities = Vec::with_capacity(cfg.n_entities);
    for i in 0..cfg.n_entities {
        let name = loop {
            let n = entity_name(&mut rng);
            if used.insert(n.clone()) {
                break n;
            }
        };
        entities.push(Entity::new(format!("E{:04}", i + 1), name));
    }

    let n_test = 2 * cfg.mentions_per_entity / 5;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for e in &entities {
        let mut mentions = Vec::with_capacity(cfg.mentions_per_entity);
        let mut attempts = 0usize;
        while mentions.len() < cfg.mentions_per_entity {
            attempts += 1;
            let steps = rng.random_range(1..=3) + attempts / 50;
            let mut s = e.canonical_name.clone();
            for _ in 0..steps {
                let op = *ops.choose(&mut rng).unwrap();
                s = apply(op, &s, &mut rng);
            }
            if attempts % 20 == 0 {
                // guarantee progress when the structural ops keep colliding
                let op = *generative.choose(&mut rng).unwrap();
                s = apply(op, &s, &mut rng);
            }
            if restyle {
                s = restyle_case(&s, &mut rng);
            }
            let s = super::canonicalize(&s);
            if !s.is_empty() && used.insert(s.clone()) {
                mentions.push(s);
            }
        }
        mentions.shuffle(&mut rng);
        let (te, tr) = mentions.split_at(n_test);
        train.extend(tr.iter().map(|s| MentionRecord::new(s.clone(), e.id.clone())));
        test.extend(te.iter().map(|s| MentionRecord::new(s.clone(), e.id.clone())));
    }

    Corpus::new(entities, train, test)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::corpus::validate_corpus;

    fn cfg(n: usize, m: usize, seed: u64) -> SynthesisConfig {
        SynthesisConfig {
            n_entities: n,
            mentions_per_entity: m,
            seed,
            ..SynthesisConfig::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = synthesize_corpus(&cfg(30, 10, 7)).unwrap();
        let b = synthesize_corpus(&cfg(30, 10, 7)).unwrap();
        assert_eq!(a, b);
        let c = synthesize_corpus(&cfg(30, 10, 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_entity_count_bookkeeping() {
        let c = synthesize_corpus(&cfg(1, 3, 1)).unwrap();
        assert_eq!(c.entities().len(), 1);
        assert_eq!(c.train().len() + c.test().len(), 3);
        assert_eq!(c.test().len(), 1);
    }

    #[test]
    fn no_overlap_by_exhaustive_intersection() {
        let c = synthesize_corpus(&cfg(30, 10, 7)).unwrap();
        let seen: HashSet<&str> = c
            .train()
            .iter()
            .map(|m| m.surface.as_str())
            .chain(c.entities().iter().flat_map(|e| e.kb_mentions.iter().map(String::as_str)))
            .collect();
        let overlap = c.test().iter().filter(|m| seen.contains(m.surface.as_str())).count();
        assert_eq!(overlap, 0);
        assert!(validate_corpus(&c).is_empty());
        assert_eq!(c.train().len(), 180);
        assert_eq!(c.test().len(), 120);
    }

    #[test]
    fn every_train_class_has_two_samples() {
        for m in 3..8 {
            let c = synthesize_corpus(&cfg(12, m, 3)).unwrap();
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for r in c.training_samples(true) {
                *counts.entry(c.entity(&r.entity_id).unwrap().id.as_str()).or_default() += 1;
            }
            assert_eq!(counts.len(), 12);
            assert!(counts.values().all(|&n| n >= 2), "m={m}");
            let train_only: HashMap<&str, usize> =
                c.train().iter().fold(HashMap::new(), |mut acc, r| {
                    *acc.entry(r.entity_id.as_str()).or_default() += 1;
                    acc
                });
            assert!(train_only.values().all(|&n| n >= 2), "m={m}");
        }
    }

    #[test]
    fn single_op_configs_work() {
        for op in [Perturbation::CaseFlip, Perturbation::SuffixAppend, Perturbation::CharacterTypo] {
            let c = synthesize_corpus(&SynthesisConfig {
                perturbations: vec![op],
                ..cfg(5, 6, 11)
            })
            .unwrap();
            assert_eq!(c.train().len() + c.test().len(), 30);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(synthesize_corpus(&SynthesisConfig {
            perturbations: vec![],
            ..cfg(2, 2, 0)
        })
        .is_err());
        assert!(synthesize_corpus(&SynthesisConfig {
            perturbations: vec![Perturbation::TokenDrop, Perturbation::TokenSwap],
            ..cfg(2, 2, 0)
        })
        .is_err());
        assert!(synthesize_corpus(&cfg(0, 2, 0)).is_err());
    }
}

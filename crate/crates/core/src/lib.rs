//! Entity normalization by metric learning.
//!
//! Noisy mentions are embedded by a trainable encoder and matched to the
//! nearest canonical entity of a knowledge base. Training uses triplet loss
//! over contrastive groups with batch-all, batch-hard or hybrid mining.

pub mod container;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hash;
pub mod index;
pub mod mining;
pub mod tfidf;
pub mod trainer;

pub use corpus::{load_corpus, Corpus, Entity, MentionRecord};
pub use encoder::{DistanceMetric, EmbeddingVector, Encoder, EncoderConfig, EncoderParams};
pub use error::{Error, Result};
pub use index::{build_index, EmbeddingIndex, Hit, IndexMode};
pub use mining::MiningStrategy;
pub use trainer::{train, TrainConfig, TrainHistory};

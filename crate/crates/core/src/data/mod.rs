//! Corpus ingestion and everything between annotated sentences and padded
//! id batches.

mod batching;
mod corpus;
mod embeddings;
mod folds;
mod pairs;
mod schema;
pub mod synthetic;
mod vocab;

pub use batching::{batchify, encode_samples, Batch, Encoded, EncodedSample};
pub use corpus::{parse_corpus, parse_corpus_str, AnnotatedSentence, Concept, Corpus, Relation};
pub use embeddings::{apply_pretrained, load_word2vec};
pub use folds::make_folds;
pub use pairs::{
    blind_and_position, blind_sentence, enumerate_corpus, enumerate_pairs, BlindMode,
    RelationSample,
};
pub use schema::{PairRule, PairSchema};
pub use vocab::{build_vocab, ClassInfo, Vocab, UNK};

use serde::{Deserialize, Serialize};

/// Settings that turn a corpus into encoded samples. Stored with every
/// checkpoint so evaluation repeats the training-time preprocessing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocessing {
    /// Signed token distances are clipped to `[-clip, clip]`.
    pub clip: i64,
    pub blind: BlindMode,
    pub min_count: usize,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Self {
            clip: 50,
            blind: BlindMode::All,
            min_count: 1,
        }
    }
}

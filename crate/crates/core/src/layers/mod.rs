//! Forward and backward passes for every block of the classifier.
//!
//! Each forward returns its output together with a cache; the matching
//! backward consumes that cache, accumulates parameter gradients into a
//! caller-owned buffer of the same type as the parameters, and returns the
//! gradient with respect to its input. Per-step sequences are matrices with
//! one row per step.

mod batch;
mod classifier;
mod conv;
mod embed;
mod gru;
mod pool;

pub use batch::{EncodedSequence, SequenceBatch, PAD};
pub use classifier::{classifier_backward, classifier_forward, ClassifierOutput};
pub use conv::{conv_backward, conv_forward, ConvCache, ConvParams};
pub use embed::{embed_backward, embed_forward, EmbeddingTables};
pub use gru::{
    bigru_backward, bigru_forward, gru_step, gru_step_backward, BiGruCache, GruParams, GruStepCache,
};
pub use pool::{
    attentive_pool, attentive_pool_backward, max_pool, max_pool_backward, AttentionCache,
    MaxPoolCache,
};

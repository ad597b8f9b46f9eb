use crate::error::{Error, Result};
use crate::layers::{EncodedSequence, SequenceBatch};

use super::pairs::RelationSample;
use super::vocab::Vocab;

/// A sample mapped to ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSample {
    pub seq: EncodedSequence,
    pub label: usize,
    pub distance: usize,
    pub id: String,
}

#[derive(Debug, Clone, Default)]
pub struct Encoded {
    pub samples: Vec<EncodedSample>,
    /// Samples dropped for being shorter than the convolution window.
    pub skipped: usize,
}

/// Maps samples to ids, dropping those with fewer than `window` tokens.
pub fn encode_samples(samples: &[RelationSample], vocab: &Vocab, window: usize) -> Result<Encoded> {
    let mut out = Encoded::default();
    for s in samples {
        let label = vocab.class_index(&s.label).ok_or_else(|| {
            Error::Config(format!(
                "sample {}: class {} is not in the vocabulary",
                s.id, s.label
            ))
        })?;
        if s.blinded_tokens.len() < window {
            out.skipped += 1;
            continue;
        }
        let pos = |p: &[i64]| p.iter().map(|&d| vocab.position_id(d)).collect();
        out.samples.push(EncodedSample {
            seq: EncodedSequence {
                tokens: vocab.encode_tokens(&s.blinded_tokens),
                pos1: pos(&s.pos1),
                pos2: pos(&s.pos2),
            },
            label,
            distance: s.distance(),
            id: s.id.clone(),
        });
    }
    Ok(out)
}

/// A padded batch plus gold labels and the source indices of its rows.
#[derive(Debug, Clone)]
pub struct Batch {
    pub seqs: SequenceBatch,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Groups `order` (indices into `samples`) into consecutive batches, each
/// padded to its own longest sequence.
pub fn batchify(
    samples: &[EncodedSample],
    order: &[usize],
    batch_size: usize,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let seqs: Vec<EncodedSequence> =
                chunk.iter().map(|&i| samples[i].seq.clone()).collect();
            Ok(Batch {
                seqs: SequenceBatch::from_sequences(&seqs)?,
                labels: chunk.iter().map(|&i| samples[i].label).collect(),
                indices: chunk.to_vec(),
            })
        })
        .collect()
}

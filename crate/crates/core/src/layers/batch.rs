use crate::error::{Error, Result};

/// Reserved id for padding, shared by the word and position vocabularies.
pub const PAD: usize = 0;

/// One encoded relation sample: word ids and the two position-feature ids per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSequence {
    pub tokens: Vec<usize>,
    pub pos1: Vec<usize>,
    pub pos2: Vec<usize>,
}

impl EncodedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A padded mini-batch. Row `i` holds `lengths[i]` real steps followed by PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceBatch {
    pub token_ids: Vec<Vec<usize>>,
    pub pos1_ids: Vec<Vec<usize>>,
    pub pos2_ids: Vec<Vec<usize>>,
    pub mask: Vec<Vec<u8>>,
    pub lengths: Vec<usize>,
}

impl SequenceBatch {
    pub fn from_sequences(seqs: &[EncodedSequence]) -> Result<Self> {
        let width = seqs.iter().map(EncodedSequence::len).max().unwrap_or(0);
        Self::padded_to(seqs, width)
    }

    /// Pads every sequence to exactly `width` steps.
    pub fn padded_to(seqs: &[EncodedSequence], width: usize) -> Result<Self> {
        let mut batch = SequenceBatch {
            token_ids: Vec::with_capacity(seqs.len()),
            pos1_ids: Vec::with_capacity(seqs.len()),
            pos2_ids: Vec::with_capacity(seqs.len()),
            mask: Vec::with_capacity(seqs.len()),
            lengths: Vec::with_capacity(seqs.len()),
        };
        for (i, s) in seqs.iter().enumerate() {
            let n = s.len();
            if s.pos1.len() != n || s.pos2.len() != n {
                return Err(Error::dim(format!(
                    "sequence {i}: {n} tokens but {}/{} position ids",
                    s.pos1.len(),
                    s.pos2.len()
                )));
            }
            if n > width {
                return Err(Error::dim(format!(
                    "sequence {i} longer ({n}) than batch width {width}"
                )));
            }
            let pad = |ids: &[usize]| {
                let mut v = ids.to_vec();
                v.resize(width, PAD);
                v
            };
            batch.token_ids.push(pad(&s.tokens));
            batch.pos1_ids.push(pad(&s.pos1));
            batch.pos2_ids.push(pad(&s.pos2));
            batch
                .mask
                .push((0..width).map(|t| u8::from(t < n)).collect());
            batch.lengths.push(n);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn width(&self) -> usize {
        self.token_ids.first().map_or(0, Vec::len)
    }

    /// The valid (unpadded) part of sample `i`.
    pub fn sample(&self, i: usize) -> (&[usize], &[usize], &[usize]) {
        let n = self.lengths[i];
        (
            &self.token_ids[i][..n],
            &self.pos1_ids[i][..n],
            &self.pos2_ids[i][..n],
        )
    }

    /// Same samples with `extra` more PAD steps on every row.
    pub fn with_extra_padding(&self, extra: usize) -> Self {
        let grow = |rows: &Vec<Vec<usize>>| {
            rows.iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.resize(r.len() + extra, PAD);
                    r
                })
                .collect()
        };
        SequenceBatch {
            token_ids: grow(&self.token_ids),
            pos1_ids: grow(&self.pos1_ids),
            pos2_ids: grow(&self.pos2_ids),
            mask: self
                .mask
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.resize(r.len() + extra, 0);
                    r
                })
                .collect(),
            lengths: self.lengths.clone(),
        }
    }
}

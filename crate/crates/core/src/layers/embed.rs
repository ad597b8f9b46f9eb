use crate::error::{Error, Result};
use crate::tensor::{glorot_init, Matrix, Rng};

use super::batch::{SequenceBatch, PAD};

/// Word and position lookup tables, one row per vocabulary entry.
///
/// Row [`PAD`] of each table is held at zero: it is never updated and is
/// excluded from regularization.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    pub word: Matrix,
    pub pos: Matrix,
}

impl EmbeddingTables {
    pub fn init(
        vocab: usize,
        positions: usize,
        d_w: usize,
        d_p: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut word = glorot_init(vocab, d_w, rng)?;
        let mut pos = glorot_init(positions, d_p, rng)?;
        word.row_mut(PAD).fill(0.0);
        pos.row_mut(PAD).fill(0.0);
        Ok(Self { word, pos })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            word: Matrix::zeros(self.word.rows(), self.word.cols()),
            pos: Matrix::zeros(self.pos.rows(), self.pos.cols()),
        }
    }

    pub fn word_dim(&self) -> usize {
        self.word.cols()
    }

    pub fn pos_dim(&self) -> usize {
        self.pos.cols()
    }

    /// Per-token input size: word dimension plus two position dimensions.
    pub fn token_dim(&self) -> usize {
        self.word_dim() + 2 * self.pos_dim()
    }

    /// Embeds every row of `batch` over its full padded width.
    pub fn embed_batch(&self, batch: &SequenceBatch) -> Result<Vec<Matrix>> {
        (0..batch.len())
            .map(|i| {
                embed_forward(
                    self,
                    &batch.token_ids[i],
                    &batch.pos1_ids[i],
                    &batch.pos2_ids[i],
                )
            })
            .collect()
    }

    fn check_ids(&self, tokens: &[usize], pos1: &[usize], pos2: &[usize]) -> Result<()> {
        if tokens.len() != pos1.len() || tokens.len() != pos2.len() {
            return Err(Error::dim(
                "token and position id sequences differ in length",
            ));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.word.rows()) {
            return Err(Error::Index(format!(
                "word id {t} outside table of {}",
                self.word.rows()
            )));
        }
        if let Some(&p) = pos1.iter().chain(pos2).find(|&&p| p >= self.pos.rows()) {
            return Err(Error::Index(format!(
                "position id {p} outside table of {}",
                self.pos.rows()
            )));
        }
        Ok(())
    }
}

/// Builds the `n × (d_w + 2 d_p)` input matrix: row `t` is
/// `[word(t); pos(pos1[t]); pos(pos2[t])]`.
pub fn embed_forward(
    tables: &EmbeddingTables,
    tokens: &[usize],
    pos1: &[usize],
    pos2: &[usize],
) -> Result<Matrix> {
    tables.check_ids(tokens, pos1, pos2)?;
    let (dw, dp) = (tables.word_dim(), tables.pos_dim());
    let mut out = Matrix::zeros(tokens.len(), dw + 2 * dp);
    for t in 0..tokens.len() {
        let row = out.row_mut(t);
        row[..dw].copy_from_slice(tables.word.row(tokens[t]));
        row[dw..dw + dp].copy_from_slice(tables.pos.row(pos1[t]));
        row[dw + dp..].copy_from_slice(tables.pos.row(pos2[t]));
    }
    Ok(out)
}

/// Scatters `upstream` (same shape as the forward output) into the table
/// gradients. PAD rows receive nothing.
pub fn embed_backward(
    grads: &mut EmbeddingTables,
    tokens: &[usize],
    pos1: &[usize],
    pos2: &[usize],
    upstream: &Matrix,
) -> Result<()> {
    grads.check_ids(tokens, pos1, pos2)?;
    let (dw, dp) = (grads.word_dim(), grads.pos_dim());
    if upstream.shape() != (tokens.len(), dw + 2 * dp) {
        return Err(Error::dim(format!(
            "embedding upstream {:?}, expected {:?}",
            upstream.shape(),
            (tokens.len(), dw + 2 * dp)
        )));
    }
    let add = |dst: &mut [f64], src: &[f64]| dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
    for t in 0..tokens.len() {
        let g = upstream.row(t);
        if tokens[t] != PAD {
            add(grads.word.row_mut(tokens[t]), &g[..dw]);
        }
        if pos1[t] != PAD {
            add(grads.pos.row_mut(pos1[t]), &g[dw..dw + dp]);
        }
        if pos2[t] != PAD {
            add(grads.pos.row_mut(pos2[t]), &g[dw + dp..]);
        }
    }
    Ok(())
}

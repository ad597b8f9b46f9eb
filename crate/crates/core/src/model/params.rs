use crate::error::{Error, Result};
use crate::layers::{ConvParams, EmbeddingTables, GruParams, PAD};
use crate::tensor::{glorot_init, Matrix, Rng, Vector};

use super::config::{ModelConfig, Pooling};

/// How a parameter is treated by regularization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Regularized weight matrix or weight vector.
    Weight,
    /// Lookup table; regularized, PAD row frozen at zero.
    Embedding,
    /// Bias; not regularized.
    Bias,
}

/// Every trainable tensor of one architecture. The same type is used for
/// gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embed: EmbeddingTables,
    pub conv: ConvParams,
    pub gru_fwd: Option<GruParams>,
    pub gru_bwd: Option<GruParams>,
    pub attention: Option<Vector>,
    pub classifier: Matrix,
}

/// A view of one named tensor.
pub struct ParamRef<'a> {
    pub name: String,
    pub kind: ParamKind,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

pub struct ParamMut<'a> {
    pub name: String,
    pub kind: ParamKind,
    pub shape: (usize, usize),
    pub data: &'a mut [f64],
}

impl Params {
    /// Randomly initialized parameters: Glorot-uniform matrices, zero biases,
    /// zero PAD rows.
    pub fn init(cfg: &ModelConfig, vocab_size: usize, positions: usize) -> Result<Self> {
        if vocab_size <= PAD + 1 || positions <= PAD + 1 {
            return Err(Error::dim(
                "vocabularies must hold at least one entry beyond PAD",
            ));
        }
        let mut rng = Rng::derive(cfg.seed, 0);
        let embed = EmbeddingTables::init(vocab_size, positions, cfg.d_w, cfg.d_p, &mut rng)?;
        let conv = ConvParams::init(cfg.d_c, cfg.token_dim(), cfg.k, &mut rng)?;
        let (gru_fwd, gru_bwd) = if cfg.use_gru {
            (
                Some(GruParams::init(cfg.d_h, cfg.d_c, &mut rng)?),
                Some(GruParams::init(cfg.d_h, cfg.d_c, &mut rng)?),
            )
        } else {
            (None, None)
        };
        let attention = match cfg.pooling {
            Pooling::Attentive => Some(Vector::from(
                glorot_init(cfg.pooled_dim(), 1, &mut rng)?.into_data(),
            )),
            Pooling::Max => None,
        };
        let classifier = glorot_init(cfg.num_classes(), cfg.pooled_dim(), &mut rng)?;
        Ok(Self {
            embed,
            conv,
            gru_fwd,
            gru_bwd,
            attention,
            classifier,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            embed: self.embed.zeros_like(),
            conv: self.conv.zeros_like(),
            gru_fwd: self.gru_fwd.as_ref().map(GruParams::zeros_like),
            gru_bwd: self.gru_bwd.as_ref().map(GruParams::zeros_like),
            attention: self.attention.as_ref().map(|v| Vector::zeros(v.len())),
            classifier: Matrix::zeros(self.classifier.rows(), self.classifier.cols()),
        }
    }

    /// Named tensors in a fixed order.
    pub fn entries(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        let mut push = |name: String, kind, shape, data| {
            out.push(ParamRef {
                name,
                kind,
                shape,
                data,
            })
        };
        let e = &self.embed;
        push(
            "embed.word".into(),
            ParamKind::Embedding,
            e.word.shape(),
            e.word.data(),
        );
        push(
            "embed.pos".into(),
            ParamKind::Embedding,
            e.pos.shape(),
            e.pos.data(),
        );
        let c = &self.conv;
        push(
            "conv.weight".into(),
            ParamKind::Weight,
            c.weight.shape(),
            c.weight.data(),
        );
        push(
            "conv.bias".into(),
            ParamKind::Bias,
            (c.bias.len(), 1),
            c.bias.data(),
        );
        for (prefix, g) in [("gru_fwd", &self.gru_fwd), ("gru_bwd", &self.gru_bwd)] {
            if let Some(g) = g {
                for (n, m) in [
                    ("w_r", &g.w_r),
                    ("w_z", &g.w_z),
                    ("w_h", &g.w_h),
                    ("u_r", &g.u_r),
                    ("u_z", &g.u_z),
                    ("u_h", &g.u_h),
                ] {
                    push(
                        format!("{prefix}.{n}"),
                        ParamKind::Weight,
                        m.shape(),
                        m.data(),
                    );
                }
                for (n, b) in [("b_r", &g.b_r), ("b_z", &g.b_z), ("b_h", &g.b_h)] {
                    push(
                        format!("{prefix}.{n}"),
                        ParamKind::Bias,
                        (b.len(), 1),
                        b.data(),
                    );
                }
            }
        }
        if let Some(v) = &self.attention {
            push(
                "attention.v".into(),
                ParamKind::Weight,
                (v.len(), 1),
                v.data(),
            );
        }
        push(
            "classifier.weight".into(),
            ParamKind::Weight,
            self.classifier.shape(),
            self.classifier.data(),
        );
        out
    }

    pub fn entries_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        let mut push = |name: String, kind, shape, data| {
            out.push(ParamMut {
                name,
                kind,
                shape,
                data,
            })
        };
        let Params {
            embed,
            conv,
            gru_fwd,
            gru_bwd,
            attention,
            classifier,
        } = self;
        push(
            "embed.word".into(),
            ParamKind::Embedding,
            embed.word.shape(),
            embed.word.data_mut(),
        );
        push(
            "embed.pos".into(),
            ParamKind::Embedding,
            embed.pos.shape(),
            embed.pos.data_mut(),
        );
        push(
            "conv.weight".into(),
            ParamKind::Weight,
            conv.weight.shape(),
            conv.weight.data_mut(),
        );
        push(
            "conv.bias".into(),
            ParamKind::Bias,
            (conv.bias.len(), 1),
            conv.bias.data_mut(),
        );
        for (prefix, g) in [("gru_fwd", gru_fwd), ("gru_bwd", gru_bwd)] {
            if let Some(g) = g {
                let GruParams {
                    w_r,
                    w_z,
                    w_h,
                    u_r,
                    u_z,
                    u_h,
                    b_r,
                    b_z,
                    b_h,
                } = g;
                for (n, m) in [
                    ("w_r", w_r),
                    ("w_z", w_z),
                    ("w_h", w_h),
                    ("u_r", u_r),
                    ("u_z", u_z),
                    ("u_h", u_h),
                ] {
                    push(
                        format!("{prefix}.{n}"),
                        ParamKind::Weight,
                        m.shape(),
                        m.data_mut(),
                    );
                }
                for (n, b) in [("b_r", b_r), ("b_z", b_z), ("b_h", b_h)] {
                    push(
                        format!("{prefix}.{n}"),
                        ParamKind::Bias,
                        (b.len(), 1),
                        b.data_mut(),
                    );
                }
            }
        }
        if let Some(v) = attention {
            push(
                "attention.v".into(),
                ParamKind::Weight,
                (v.len(), 1),
                v.data_mut(),
            );
        }
        push(
            "classifier.weight".into(),
            ParamKind::Weight,
            classifier.shape(),
            classifier.data_mut(),
        );
        out
    }

    pub fn names(&self) -> Vec<String> {
        self.entries().into_iter().map(|e| e.name).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries().iter().map(|e| e.data.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for e in self.entries() {
            out.extend_from_slice(e.data);
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::dim(format!(
                "flat parameter vector has {} values, expected {}",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut offset = 0;
        for e in self.entries_mut() {
            let n = e.data.len();
            e.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `‖θ‖²` over weights and embedding tables (biases excluded).
    pub fn l2_norm_sq(&self) -> f64 {
        self.entries()
            .iter()
            .filter(|e| e.kind != ParamKind::Bias)
            .map(|e| e.data.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    /// `self += 2β·values` on every regularized tensor.
    pub fn add_l2_grad(&mut self, values: &Params, beta: f64) {
        if beta == 0.0 {
            return;
        }
        for (g, v) in self.entries_mut().into_iter().zip(values.entries()) {
            if g.kind == ParamKind::Bias {
                continue;
            }
            for (gi, vi) in g.data.iter_mut().zip(v.data) {
                *gi += 2.0 * beta * vi;
            }
        }
    }

    /// Zeroes the PAD rows of both lookup tables.
    pub fn clear_pad_rows(&mut self) {
        self.embed.word.row_mut(PAD).fill(0.0);
        self.embed.pos.row_mut(PAD).fill(0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.entries()
            .iter()
            .all(|e| e.data.iter().all(|x| x.is_finite()))
    }

    /// Shapes must agree entry by entry.
    pub fn same_layout(&self, other: &Params) -> bool {
        let a = self.entries();
        let b = other.entries();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(x, y)| x.name == y.name && x.shape == y.shape)
    }
}

/// Trainable parameters with their gradient buffers. `version` increases on
/// every in-place update so that stale forward traces can be detected.
#[derive(Debug, Clone)]
pub struct ParamSet {
    pub values: Params,
    pub grads: Params,
    version: u64,
}

impl ParamSet {
    pub fn new(values: Params) -> Self {
        let grads = values.zeros_like();
        Self {
            values,
            grads,
            version: 0,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable access to the values; bumps the version.
    pub fn values_mut(&mut self) -> &mut Params {
        self.version += 1;
        &mut self.values
    }

    /// Values for update together with the current gradients; bumps the
    /// version.
    pub fn update_view(&mut self) -> (&mut Params, &Params) {
        self.version += 1;
        (&mut self.values, &self.grads)
    }

    pub fn zero_grads(&mut self) {
        for e in self.grads.entries_mut() {
            e.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

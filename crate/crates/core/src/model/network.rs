use crate::error::{Error, Result};
use crate::exec;
use crate::layers::{
    attentive_pool, attentive_pool_backward, bigru_backward, bigru_forward, classifier_backward,
    classifier_forward, conv_backward, conv_forward, embed_backward, embed_forward, max_pool,
    max_pool_backward, AttentionCache, BiGruCache, ConvCache, ConvParams, GruParams, MaxPoolCache,
    SequenceBatch,
};
use crate::tensor::{argmax, log_sum_exp, Matrix, Rng, Vector};

use super::config::{ModelConfig, Pooling};
use super::params::{ParamSet, Params};

/// Whether dropout is active. Training passes carry the seed from which
/// per-sample dropout masks are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone)]
enum PoolCache {
    Max(MaxPoolCache),
    Attentive(AttentionCache),
}

/// Everything the backward pass needs for one sample.
#[derive(Debug, Clone)]
pub struct SampleTrace {
    tokens: Vec<usize>,
    pos1: Vec<usize>,
    pos2: Vec<usize>,
    conv: ConvCache,
    gru: Option<BiGruCache>,
    /// Input of the pooling layer, one row per step.
    encoded: Matrix,
    pool: PoolCache,
    pooled: Vec<f64>,
    dropout_mask: Option<Vec<f64>>,
    /// Classifier input (pooled representation after dropout).
    features: Vec<f64>,
    pub logits: Vector,
    pub probs: Vector,
    pub gold: Option<usize>,
    pub nll: f64,
}

impl SampleTrace {
    /// The sentence representation before dropout.
    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }

    pub fn dropout_mask(&self) -> Option<&[f64]> {
        self.dropout_mask.as_deref()
    }

    /// Attention weights over valid steps (attentive pooling only).
    pub fn attention(&self) -> Option<&Vector> {
        match &self.pool {
            PoolCache::Attentive(c) => Some(&c.alpha),
            PoolCache::Max(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub samples: Vec<SampleTrace>,
    /// Mean negative log-likelihood over the batch.
    pub data_loss: f64,
    /// `β‖θ‖²`.
    pub l2_penalty: f64,
    pub loss: f64,
    version: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probs: Vector,
}

/// A configured architecture together with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
}

struct SampleGrad {
    conv: ConvParams,
    gru_fwd: Option<GruParams>,
    gru_bwd: Option<GruParams>,
    attention: Option<Vector>,
    classifier: Matrix,
    d_tokens: Matrix,
}

impl Model {
    pub fn new(config: ModelConfig, vocab_size: usize, positions: usize) -> Result<Self> {
        config.validate()?;
        let values = Params::init(&config, vocab_size, positions)?;
        Ok(Self {
            config,
            params: ParamSet::new(values),
        })
    }

    pub fn from_params(config: ModelConfig, values: Params) -> Result<Self> {
        config.validate()?;
        let expected = Params::init(&config, values.embed.word.rows(), values.embed.pos.rows())?;
        if !expected.same_layout(&values) {
            return Err(Error::dim(
                "parameter shapes do not match the model configuration",
            ));
        }
        Ok(Self {
            config,
            params: ParamSet::new(values),
        })
    }

    pub fn pooled_dim(&self) -> usize {
        self.config.pooled_dim()
    }

    /// Runs the full pipeline on every sample of `batch`. `gold` holds one
    /// label index per sample.
    pub fn forward(
        &self,
        batch: &SequenceBatch,
        gold: &[usize],
        mode: Mode,
    ) -> Result<ForwardTrace> {
        if batch.is_empty() {
            return Err(Error::Input("forward on an empty batch".into()));
        }
        if gold.len() != batch.len() {
            return Err(Error::dim(format!(
                "{} labels for {} samples",
                gold.len(),
                batch.len()
            )));
        }
        let classes = self.config.num_classes();
        if let Some(&y) = gold.iter().find(|&&y| y >= classes) {
            return Err(Error::Index(format!("label {y} outside {classes} classes")));
        }
        let idx: Vec<usize> = (0..batch.len()).collect();
        let samples = exec::map(&idx, |&i| {
            self.sample_forward(batch, i, Some(gold[i]), mode)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let data_loss = samples.iter().map(|s| s.nll).sum::<f64>() / samples.len() as f64;
        let l2_penalty = self.config.l2_beta * self.params.values.l2_norm_sq();
        let loss = data_loss + l2_penalty;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss}")));
        }
        Ok(ForwardTrace {
            samples,
            data_loss,
            l2_penalty,
            loss,
            version: self.params.version(),
        })
    }

    /// Loss only, with dropout off.
    pub fn loss(&self, batch: &SequenceBatch, gold: &[usize]) -> Result<f64> {
        Ok(self.forward(batch, gold, Mode::Eval)?.loss)
    }

    fn sample_forward(
        &self,
        batch: &SequenceBatch,
        i: usize,
        gold: Option<usize>,
        mode: Mode,
    ) -> Result<SampleTrace> {
        let p = &self.params.values;
        let (tokens, pos1, pos2) = batch.sample(i);
        let x = embed_forward(&p.embed, tokens, pos1, pos2)?;
        let (conv_out, conv) = conv_forward(&x, &p.conv)?;
        let (encoded, gru) = match (&p.gru_fwd, &p.gru_bwd) {
            (Some(f), Some(b)) => {
                let (h, cache) = bigru_forward(&conv_out, f, b)?;
                (h, Some(cache))
            }
            _ => (conv_out, None),
        };
        let valid = encoded.rows();
        let (pooled, pool) = match self.config.pooling {
            Pooling::Max => {
                let (rs, c) = max_pool(&encoded, valid)?;
                (rs.into_data(), PoolCache::Max(c))
            }
            Pooling::Attentive => {
                let v = p.attention.as_ref().ok_or_else(|| {
                    Error::State("attentive pooling without attention vector".into())
                })?;
                let (rs, c) = attentive_pool(&encoded, v, valid)?;
                (rs.into_data(), PoolCache::Attentive(c))
            }
        };
        let dropout_mask = match mode {
            Mode::Train { dropout_seed } if self.config.dropout_p > 0.0 => {
                let drop = self.config.dropout_p;
                let keep_scale = 1.0 / (1.0 - drop);
                let mut rng = Rng::derive(dropout_seed, i as u64);
                Some(
                    (0..pooled.len())
                        .map(|_| {
                            if rng.next_f64() < drop {
                                0.0
                            } else {
                                keep_scale
                            }
                        })
                        .collect::<Vec<_>>(),
                )
            }
            _ => None,
        };
        let features = match &dropout_mask {
            Some(m) => pooled.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => pooled.clone(),
        };
        let out = classifier_forward(&features, &p.classifier)?;
        let nll = gold.map_or(0.0, |y| {
            log_sum_exp(out.logits.data()) - out.logits.data()[y]
        });
        Ok(SampleTrace {
            tokens: tokens.to_vec(),
            pos1: pos1.to_vec(),
            pos2: pos2.to_vec(),
            conv,
            gru,
            encoded,
            pool,
            pooled,
            dropout_mask,
            features,
            logits: out.logits,
            probs: out.probs,
            gold,
            nll,
        })
    }

    /// Fills `params.grads` with the exact gradient of `trace.loss`.
    pub fn backward(&mut self, trace: &ForwardTrace) -> Result<()> {
        if trace.version != self.params.version() {
            return Err(Error::State(format!(
                "trace computed at parameter version {}, parameters are at {}",
                trace.version,
                self.params.version()
            )));
        }
        let m = trace.samples.len() as f64;
        let per_sample = exec::map(&trace.samples, |s| self.sample_backward(s, m))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        self.params.zero_grads();
        let grads = &mut self.params.grads;
        for (s, g) in trace.samples.iter().zip(&per_sample) {
            grads.conv.weight.add_assign(&g.conv.weight)?;
            grads.conv.bias.add_assign(g.conv.bias.data())?;
            for (dst, src) in [
                (&mut grads.gru_fwd, &g.gru_fwd),
                (&mut grads.gru_bwd, &g.gru_bwd),
            ] {
                if let (Some(dst), Some(src)) = (dst.as_mut(), src.as_ref()) {
                    add_gru(dst, src)?;
                }
            }
            if let (Some(dst), Some(src)) = (grads.attention.as_mut(), g.attention.as_ref()) {
                dst.add_assign(src.data())?;
            }
            grads.classifier.add_assign(&g.classifier)?;
            embed_backward(&mut grads.embed, &s.tokens, &s.pos1, &s.pos2, &g.d_tokens)?;
        }
        grads.add_l2_grad(&self.params.values, self.config.l2_beta);
        grads.clear_pad_rows();
        Ok(())
    }

    fn sample_backward(&self, s: &SampleTrace, m: f64) -> Result<SampleGrad> {
        let p = &self.params.values;
        let y = s
            .gold
            .ok_or_else(|| Error::State("backward through a trace without labels".into()))?;
        let mut d_logits: Vec<f64> = s.probs.data().iter().map(|q| q / m).collect();
        d_logits[y] -= 1.0 / m;
        let mut classifier = Matrix::zeros(p.classifier.rows(), p.classifier.cols());
        let mut d_rs = classifier_backward(&s.features, &p.classifier, &d_logits, &mut classifier)?;
        if let Some(mask) = &s.dropout_mask {
            d_rs.iter_mut().zip(mask).for_each(|(d, k)| *d *= k);
        }
        let mut attention = p.attention.as_ref().map(|v| Vector::zeros(v.len()));
        let d_encoded = match &s.pool {
            PoolCache::Max(c) => max_pool_backward(c, &d_rs)?,
            PoolCache::Attentive(c) => {
                let v = p.attention.as_ref().expect("checked in forward");
                attentive_pool_backward(
                    &s.encoded,
                    v,
                    c,
                    &d_rs,
                    attention.as_mut().expect("present with v"),
                )?
            }
        };
        let mut gru_fwd = p.gru_fwd.as_ref().map(GruParams::zeros_like);
        let mut gru_bwd = p.gru_bwd.as_ref().map(GruParams::zeros_like);
        let d_conv = match (
            &s.gru,
            &p.gru_fwd,
            &p.gru_bwd,
            gru_fwd.as_mut(),
            gru_bwd.as_mut(),
        ) {
            (Some(cache), Some(f), Some(b), Some(gf), Some(gb)) => {
                bigru_backward(cache, f, b, &d_encoded, gf, gb)?
            }
            (None, ..) => d_encoded,
            _ => return Err(Error::State("GRU cache and parameters disagree".into())),
        };
        let mut conv = p.conv.zeros_like();
        let d_tokens = conv_backward(&s.conv, &p.conv, &d_conv, &mut conv)?;
        Ok(SampleGrad {
            conv,
            gru_fwd,
            gru_bwd,
            attention,
            classifier,
            d_tokens,
        })
    }

    /// Forward + backward in one call; returns the loss.
    pub fn loss_and_grad(
        &mut self,
        batch: &SequenceBatch,
        gold: &[usize],
        mode: Mode,
    ) -> Result<f64> {
        let trace = self.forward(batch, gold, mode)?;
        self.backward(&trace)?;
        Ok(trace.loss)
    }

    /// Most probable class per sample (lowest index on ties), dropout off.
    pub fn predict(&self, batch: &SequenceBatch) -> Result<Vec<Prediction>> {
        let idx: Vec<usize> = (0..batch.len()).collect();
        exec::map(&idx, |&i| {
            self.sample_forward(batch, i, None, Mode::Eval)
                .map(|s| Prediction {
                    label: argmax(s.probs.data()),
                    probs: s.probs,
                })
        })
        .into_iter()
        .collect()
    }
}

fn add_gru(dst: &mut GruParams, src: &GruParams) -> Result<()> {
    for (d, s) in [
        (&mut dst.w_r, &src.w_r),
        (&mut dst.w_z, &src.w_z),
        (&mut dst.w_h, &src.w_h),
        (&mut dst.u_r, &src.u_r),
        (&mut dst.u_z, &src.u_z),
        (&mut dst.u_h, &src.u_h),
    ] {
        d.add_assign(s)?;
    }
    for (d, s) in [
        (&mut dst.b_r, &src.b_r),
        (&mut dst.b_z, &src.b_z),
        (&mut dst.b_h, &src.b_h),
    ] {
        d.add_assign(s.data())?;
    }
    Ok(())
}

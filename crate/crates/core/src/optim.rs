//! Adam updates, epoch iteration and early stopping.

use serde::{Deserialize, Serialize};

use crate::data::{batchify, EncodedSample};
use crate::error::{Error, Result};
use crate::model::{Mode, Model, ParamSet, Params};
use crate::tensor::Rng;

/// Adam hyperparameters and moment buffers, one scalar per parameter scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

impl AdamState {
    pub fn new(params: &Params, cfg: AdamConfig) -> Self {
        Self::with_len(params.num_scalars(), cfg)
    }

    pub fn with_len(n: usize, cfg: AdamConfig) -> Self {
        Self {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            step_count: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// One bias-corrected update of `theta` against `grad`.
    pub fn step_slices(&mut self, theta: &mut [&mut [f64]], grad: &[&[f64]]) -> Result<()> {
        let n: usize = theta.iter().map(|t| t.len()).sum();
        let shapes_match = theta.len() == grad.len()
            && theta.iter().zip(grad).all(|(t, g)| t.len() == g.len())
            && n == self.m.len();
        if !shapes_match {
            return Err(Error::dim(format!(
                "Adam state holds {} scalars, parameters {n}",
                self.m.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut i = 0;
        for (th, g) in theta.iter_mut().zip(grad) {
            for (x, &gi) in th.iter_mut().zip(g.iter()) {
                let m = &mut self.m[i];
                let v = &mut self.v[i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                *x -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                i += 1;
            }
        }
        Ok(())
    }
}

/// Applies one Adam step using the gradients stored in `params`.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) -> Result<()> {
    let (values, grads) = params.update_view();
    let mut theta: Vec<&mut [f64]> = values.entries_mut().into_iter().map(|e| e.data).collect();
    let grad: Vec<&[f64]> = grads.entries().into_iter().map(|e| e.data).collect();
    state.step_slices(&mut theta, &grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 32,
            patience: 10,
            shuffle_seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size and max_epochs must be at least 1".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

const DROPOUT_STREAM: u64 = u64::MAX;

/// Sample order for `epoch` (0-based): a seeded permutation.
pub fn epoch_order(n: usize, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::derive(shuffle_seed, epoch as u64).shuffle(&mut order);
    order
}

/// One pass over `samples` in shuffled mini-batches. Returns the mean batch
/// loss (data term plus L2).
pub fn train_epoch(
    model: &mut Model,
    samples: &[EncodedSample],
    state: &mut AdamState,
    schedule: &TrainSchedule,
    epoch: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let order = epoch_order(samples.len(), schedule.shuffle_seed, epoch);
    let dropout_base = Rng::derive(schedule.shuffle_seed, DROPOUT_STREAM).next_u64();
    let batches = batchify(samples, &order, schedule.batch_size)?;
    let mut total = 0.0;
    for b in &batches {
        let dropout_seed = Rng::derive(dropout_base, state.step_count).next_u64();
        total += model.loss_and_grad(&b.seqs, &b.labels, Mode::Train { dropout_seed })?;
        adam_step(&mut model.params, state)?;
    }
    Ok(total / batches.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub stop: bool,
    /// 1-based epoch of the best score, earliest on ties.
    pub best_epoch: usize,
}

/// Stops once the best score is `patience` or more epochs old.
pub fn early_stop(scores: &[f64], patience: usize) -> Result<StopDecision> {
    if scores.is_empty() {
        return Err(Error::Input(
            "early stopping needs at least one score".into(),
        ));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(StopDecision {
        stop: scores.len() - 1 - best >= patience,
        best_epoch: best + 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Scores a model on held-out data; higher is better.
pub type DevScore<'a> = &'a mut dyn FnMut(&Model) -> Result<f64>;

/// Trains for up to `max_epochs`. With a dev scorer, stops early and keeps
/// the parameters of the best-scoring epoch; otherwise keeps the last ones.
pub fn fit(
    model: &mut Model,
    train: &[EncodedSample],
    adam: AdamConfig,
    schedule: &TrainSchedule,
    mut dev_score: Option<DevScore<'_>>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitResult> {
    schedule.validate()?;
    adam.validate()?;
    let mut state = AdamState::new(&model.params.values, adam);
    let mut history = Vec::new();
    let mut scores = Vec::new();
    let mut best: Option<Params> = None;
    let mut stopped_early = false;
    for epoch in 0..schedule.max_epochs {
        let train_loss = train_epoch(model, train, &mut state, schedule, epoch)?;
        let score = match dev_score.as_mut() {
            Some(f) => Some(f(model)?),
            None => None,
        };
        let rec = EpochRecord {
            epoch: epoch + 1,
            train_loss,
            dev_score: score,
        };
        on_epoch(&rec);
        history.push(rec);
        if let Some(s) = score {
            scores.push(s);
            let d = early_stop(&scores, schedule.patience.max(1))?;
            if d.best_epoch == scores.len() {
                best = Some(model.params.values.clone());
            }
            if d.stop && schedule.patience > 0 {
                stopped_early = true;
                break;
            }
        }
    }
    let best_epoch = if scores.is_empty() {
        history.len()
    } else {
        early_stop(&scores, 1)?.best_epoch
    };
    if let Some(p) = best {
        *model.params.values_mut() = p;
    }
    Ok(FitResult {
        history,
        best_epoch,
        stopped_early,
    })
}

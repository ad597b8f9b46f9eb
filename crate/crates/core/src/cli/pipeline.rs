//! Corpus-to-checkpoint and checkpoint-to-records steps shared by the
//! commands.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    apply_pretrained, batchify, build_vocab, encode_samples, enumerate_corpus, load_word2vec,
    make_folds, parse_corpus, EncodedSample, PairSchema, Preprocessing, RelationSample, Vocab,
};
use crate::error::{Error, Result};
use crate::eval::{micro_f1, PredictionRecord};
use crate::model::{Checkpoint, Model, Prediction};
use crate::optim::{fit, DevScore, EpochRecord, FitResult};
use crate::tensor::Rng;

use super::config::RunConfig;

const PREDICT_BATCH: usize = 256;

pub fn load_schema(path: Option<&Path>) -> Result<PairSchema> {
    match path {
        Some(p) => PairSchema::load(p),
        None => Ok(PairSchema::i2b2()),
    }
}

/// Parses a corpus and enumerates its relation samples.
pub fn load_samples(
    path: &Path,
    schema: &PairSchema,
    pre: &Preprocessing,
    lenient: bool,
) -> Result<Vec<RelationSample>> {
    let corpus = parse_corpus(path, lenient)?;
    enumerate_corpus(&corpus.sentences, schema, pre.blind, pre.clip)
}

/// Stratified hold-out of roughly `fraction` of the samples.
pub fn split_dev(
    samples: Vec<RelationSample>,
    schema: &PairSchema,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<RelationSample>, Vec<RelationSample>)> {
    if fraction <= 0.0 {
        return Ok((samples, Vec::new()));
    }
    let names = schema.class_names();
    let labels: Vec<usize> = samples
        .iter()
        .map(|s| {
            names
                .iter()
                .position(|n| *n == s.label)
                .unwrap_or(names.len())
        })
        .collect();
    let folds = ((1.0 / fraction).round() as usize).max(2);
    let assign = make_folds(&labels, folds, seed)?;
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for (s, f) in samples.into_iter().zip(assign) {
        if f == 0 {
            dev.push(s);
        } else {
            train.push(s);
        }
    }
    Ok((train, dev))
}

/// Counts reported after training. Contains nothing run-dependent beyond
/// the configuration, so repeated runs write identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_samples: usize,
    pub dev_samples: usize,
    pub skipped_train: usize,
    pub skipped_dev: usize,
    pub vocab_size: usize,
    pub pretrained_rows: Option<usize>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub final_train_loss: f64,
    pub best_dev_micro_f1: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub fit: FitResult,
    pub summary: TrainSummary,
}

impl TrainOutcome {
    pub fn log_tsv(&self) -> String {
        log_tsv(&self.fit.history)
    }
}

pub fn log_tsv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch\ttrain_loss\tdev_micro_f1\n");
    for r in history {
        let dev = r
            .dev_score
            .map_or_else(|| "NA".to_string(), |s| s.to_string());
        let _ = writeln!(out, "{}\t{}\t{}", r.epoch, r.train_loss, dev);
    }
    out
}

/// Micro-F1 of `model` on already encoded samples.
pub fn score_encoded(model: &Model, vocab: &Vocab, samples: &[EncodedSample]) -> Result<f64> {
    let preds = predict_encoded(model, samples)?;
    let records: Vec<PredictionRecord> = samples
        .iter()
        .zip(&preds)
        .map(|(s, p)| to_record(vocab, s, p))
        .collect();
    let positive: Vec<String> = vocab
        .classes()
        .iter()
        .filter(|c| c.positive)
        .map(|c| c.name.clone())
        .collect();
    Ok(micro_f1(&records, &positive)?.f1)
}

fn to_record(vocab: &Vocab, s: &EncodedSample, p: &Prediction) -> PredictionRecord {
    PredictionRecord {
        sample_id: s.id.clone(),
        gold: vocab.classes()[s.label].name.clone(),
        pred: vocab.classes()[p.label].name.clone(),
        distance: s.distance,
    }
}

pub fn predict_encoded(model: &Model, samples: &[EncodedSample]) -> Result<Vec<Prediction>> {
    let order: Vec<usize> = (0..samples.len()).collect();
    let mut out = Vec::with_capacity(samples.len());
    for b in batchify(samples, &order, PREDICT_BATCH)? {
        out.extend(model.predict(&b.seqs)?);
    }
    Ok(out)
}

/// Trains on `train`, early-stopping on `dev` when it is non-empty.
pub fn train_model(
    cfg: &RunConfig,
    schema: &PairSchema,
    train: &[RelationSample],
    dev: &[RelationSample],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let pre = cfg.data.preprocessing();
    let vocab = build_vocab(train, pre.min_count, pre.clip, schema)?;
    let mut model_cfg = cfg.model.clone();
    if model_cfg.class_names.is_empty() {
        model_cfg.class_names = vocab.class_names();
    } else if model_cfg.class_names != vocab.class_names() {
        return Err(Error::Config(format!(
            "model.class_names {:?} disagree with the schema classes {:?}",
            model_cfg.class_names,
            vocab.class_names()
        )));
    }
    model_cfg.validate()?;
    let enc_train = encode_samples(train, &vocab, model_cfg.k)?;
    let enc_dev = encode_samples(dev, &vocab, model_cfg.k)?;
    if enc_train.samples.is_empty() {
        return Err(Error::Input(
            "no training sample is long enough for the convolution window".into(),
        ));
    }
    let mut model = Model::new(model_cfg, vocab.num_tokens(), vocab.num_positions())?;
    let pretrained_rows = match &cfg.data.embeddings {
        Some(path) => {
            let vectors = load_word2vec(path)?;
            let values = model.params.values_mut();
            let n = apply_pretrained(&mut values.embed.word, &vocab, &vectors)?;
            log::info!("filled {n} word vectors from {}", path.display());
            Some(n)
        }
        None => None,
    };
    let mut scorer = |m: &Model| score_encoded(m, &vocab, &enc_dev.samples);
    let dev_score: Option<DevScore> = if enc_dev.samples.is_empty() {
        None
    } else {
        Some(&mut scorer)
    };
    let result = fit(
        &mut model,
        &enc_train.samples,
        cfg.adam,
        &cfg.train,
        dev_score,
        |r| on_epoch(r),
    )?;
    let summary = TrainSummary {
        train_samples: enc_train.samples.len(),
        dev_samples: enc_dev.samples.len(),
        skipped_train: enc_train.skipped,
        skipped_dev: enc_dev.skipped,
        vocab_size: vocab.num_tokens(),
        pretrained_rows,
        epochs_run: result.history.len(),
        best_epoch: result.best_epoch,
        stopped_early: result.stopped_early,
        final_train_loss: result.history.last().map_or(f64::NAN, |r| r.train_loss),
        best_dev_micro_f1: result.history[result.best_epoch - 1].dev_score,
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            schema: schema.clone(),
            vocab,
            preprocessing: pre,
        },
        fit: result,
        summary,
    })
}

/// Predictions for every sample long enough to encode; also returns the
/// number skipped.
pub fn predict_samples(
    ck: &Checkpoint,
    samples: &[RelationSample],
) -> Result<(Vec<PredictionRecord>, Vec<Prediction>, usize)> {
    let enc = encode_samples(samples, &ck.vocab, ck.model.config.k)?;
    let preds = predict_encoded(&ck.model, &enc.samples)?;
    let records = enc
        .samples
        .iter()
        .zip(&preds)
        .map(|(s, p)| to_record(&ck.vocab, s, p))
        .collect();
    Ok((records, preds, enc.skipped))
}

/// Seed for the held-out split, distinct from the shuffling stream.
pub fn dev_split_seed(cfg: &RunConfig) -> u64 {
    Rng::derive(cfg.train.shuffle_seed, 3).next_u64()
}

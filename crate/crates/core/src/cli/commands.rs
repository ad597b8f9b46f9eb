use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{make_folds, synthetic, PairSchema, RelationSample};
use crate::error::{Error, Result};
use crate::eval::{build_report, micro_f1, write_predictions, CiConfig, EvalReport};
use crate::exec;
use crate::model::{run_gradcheck, Checkpoint, GradcheckConfig, GradcheckReport};
use crate::tensor::Rng;

use super::config::RunConfig;
use super::pipeline::{
    dev_split_seed, load_samples, load_schema, predict_samples, split_dev, train_model,
    TrainOutcome,
};
use super::{Common, SynthKind};

fn load_run_config(common: &Common) -> Result<RunConfig> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.resolve(common.seed, common.out.clone())
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("{key} is not set in the configuration")))
}

/// Writes `model.ckpt`, `train_log.tsv`, `summary.json` and `config.json`
/// under the output directory.
pub fn cmd_train(common: &Common) -> Result<TrainOutcome> {
    let cfg = load_run_config(common)?;
    let schema = load_schema(cfg.data.schema.as_deref())?;
    let pre = cfg.data.preprocessing();
    let train_path = require(&cfg.data.train, "data.train")?;
    let mut train = load_samples(train_path, &schema, &pre, cfg.data.lenient)?;
    let dev = match &cfg.data.dev {
        Some(p) => load_samples(p, &schema, &pre, cfg.data.lenient)?,
        None => {
            let (t, d) = split_dev(train, &schema, cfg.data.dev_fraction, dev_split_seed(&cfg))?;
            train = t;
            d
        }
    };
    create_out(&cfg.out)?;
    let outcome = train_model(&cfg, &schema, &train, &dev, |r| {
        log::info!(
            "epoch {} loss {:.6} dev {}",
            r.epoch,
            r.train_loss,
            r.dev_score.map_or("NA".into(), |s| format!("{s:.2}"))
        );
    })?;
    outcome.checkpoint.save(&cfg.out.join("model.ckpt"))?;
    write(cfg.out.join("train_log.tsv"), outcome.log_tsv())?;
    write(
        cfg.out.join("summary.json"),
        serde_json::to_string_pretty(&outcome.summary).expect("summary serializes"),
    )?;
    write(
        cfg.out.join("config.json"),
        serde_json::to_string_pretty(&cfg).expect("config serializes"),
    )?;
    println!(
        "trained {} epochs (best {}), {} samples, {} skipped; wrote {}",
        outcome.summary.epochs_run,
        outcome.summary.best_epoch,
        outcome.summary.train_samples,
        outcome.summary.skipped_train,
        cfg.out.display()
    );
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub fold: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub micro_f1: f64,
}

/// Trains one model per fold and scores it on the held-out fold. Writes
/// `cv.tsv` and `cv.json`.
pub fn cmd_cv(common: &Common, folds: usize) -> Result<Vec<CvRow>> {
    let cfg = load_run_config(common)?;
    let schema = load_schema(cfg.data.schema.as_deref())?;
    let pre = cfg.data.preprocessing();
    let samples = load_samples(
        require(&cfg.data.train, "data.train")?,
        &schema,
        &pre,
        cfg.data.lenient,
    )?;
    let names = schema.class_names();
    let labels: Vec<usize> = samples
        .iter()
        .map(|s| {
            names
                .iter()
                .position(|n| *n == s.label)
                .expect("enumerated labels come from the schema")
        })
        .collect();
    let assign = make_folds(
        &labels,
        folds,
        Rng::derive(cfg.train.shuffle_seed, 4).next_u64(),
    )?;
    let rows = exec::map_range(folds, |f| cv_fold(&cfg, &schema, &samples, &assign, f))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mean = rows.iter().map(|r| r.micro_f1).sum::<f64>() / rows.len() as f64;
    let mut tsv = String::from("fold\ttrain_samples\ttest_samples\tmicro_f1\n");
    for r in &rows {
        let _ = writeln!(
            tsv,
            "{}\t{}\t{}\t{}",
            r.fold, r.train_samples, r.test_samples, r.micro_f1
        );
        println!("fold {}  micro-F1 {:.1}", r.fold, r.micro_f1);
    }
    let _ = writeln!(tsv, "mean\t\t\t{mean}");
    println!("mean    micro-F1 {mean:.1}");
    create_out(&cfg.out)?;
    write(cfg.out.join("cv.tsv"), tsv)?;
    let json = serde_json::json!({ "folds": rows, "mean_micro_f1": mean });
    write(
        cfg.out.join("cv.json"),
        serde_json::to_string_pretty(&json).expect("serializes"),
    )?;
    Ok(rows)
}

fn cv_fold(
    cfg: &RunConfig,
    schema: &PairSchema,
    samples: &[RelationSample],
    assign: &[usize],
    fold: usize,
) -> Result<CvRow> {
    let mut cfg = cfg.clone();
    cfg.model.seed = Rng::derive(cfg.model.seed, fold as u64).next_u64();
    cfg.train.shuffle_seed = Rng::derive(cfg.train.shuffle_seed, fold as u64).next_u64();
    let (held, rest): (Vec<_>, Vec<_>) = samples.iter().zip(assign).partition(|(_, &f)| f == fold);
    let held: Vec<RelationSample> = held.into_iter().map(|(s, _)| s.clone()).collect();
    let rest: Vec<RelationSample> = rest.into_iter().map(|(s, _)| s.clone()).collect();
    let (train, dev) = split_dev(rest, schema, cfg.data.dev_fraction, dev_split_seed(&cfg))?;
    let outcome = train_model(&cfg, schema, &train, &dev, |_| {})?;
    let (records, _, _) = predict_samples(&outcome.checkpoint, &held)?;
    Ok(CvRow {
        fold: fold + 1,
        train_samples: outcome.summary.train_samples,
        test_samples: records.len(),
        micro_f1: micro_f1(&records, &schema.positive_classes())?.f1,
    })
}

/// Writes `predictions.tsv`, `report.json`, `report.txt` and
/// `distance_curve.tsv`.
pub fn cmd_eval(
    common: &Common,
    checkpoint: &Path,
    corpus: Option<&Path>,
    schema: Option<&Path>,
    ci: bool,
) -> Result<EvalReport> {
    let cfg = load_run_config(common)?;
    let ck = Checkpoint::load(checkpoint)?;
    if let Some(p) = schema {
        let given = PairSchema::load(p)?;
        if given.class_names() != ck.schema.class_names() {
            return Err(Error::Config(format!(
                "schema {} defines classes {:?}, checkpoint was trained on {:?}",
                p.display(),
                given.class_names(),
                ck.schema.class_names()
            )));
        }
    }
    let corpus = match corpus {
        Some(p) => p,
        None => require(&cfg.data.test, "data.test (or --corpus)")?,
    };
    let samples = load_samples(corpus, &ck.schema, &ck.preprocessing, cfg.data.lenient).map_err(
        |e| match e {
            Error::Data(m) => Error::Config(format!(
                "corpus does not match the checkpoint's classes: {m}"
            )),
            other => other,
        },
    )?;
    let (records, _, skipped) = predict_samples(&ck, &samples)?;
    let mut opts = cfg.eval;
    if ci && opts.ci.is_none() {
        opts.ci = Some(CiConfig {
            seed: cfg.seed.unwrap_or(0),
            ..CiConfig::default()
        });
    }
    if !ci {
        opts.ci = None;
    }
    let report = build_report(&records, ck.vocab.classes(), &opts)?;
    create_out(&cfg.out)?;
    write_predictions(&cfg.out.join("predictions.tsv"), &records)?;
    write(cfg.out.join("report.json"), report.to_json())?;
    write(cfg.out.join("report.txt"), report.to_table())?;
    write(cfg.out.join("distance_curve.tsv"), report.curve_tsv())?;
    if skipped > 0 {
        log::warn!("{skipped} samples shorter than the convolution window were not scored");
    }
    print!("{}", report.to_table());
    Ok(report)
}

/// Writes `predictions.tsv` with the predicted class and every class
/// probability.
pub fn cmd_predict(common: &Common, checkpoint: &Path, corpus: &Path) -> Result<usize> {
    let cfg = load_run_config(common)?;
    let ck = Checkpoint::load(checkpoint)?;
    let samples = load_samples(corpus, &ck.schema, &ck.preprocessing, cfg.data.lenient)?;
    let (records, preds, skipped) = predict_samples(&ck, &samples)?;
    let names = ck.vocab.class_names();
    let mut tsv = String::from("sample_id\tpred\tdistance");
    for n in &names {
        let _ = write!(tsv, "\tp_{n}");
    }
    tsv.push('\n');
    for (r, p) in records.iter().zip(&preds) {
        let _ = write!(tsv, "{}\t{}\t{}", r.sample_id, r.pred, r.distance);
        for x in p.probs.data() {
            let _ = write!(tsv, "\t{x}");
        }
        tsv.push('\n');
    }
    create_out(&cfg.out)?;
    write(cfg.out.join("predictions.tsv"), tsv)?;
    if skipped > 0 {
        log::warn!("{skipped} samples shorter than the convolution window were not labelled");
    }
    println!(
        "labelled {} concept pairs; wrote {}",
        records.len(),
        cfg.out.join("predictions.tsv").display()
    );
    Ok(records.len())
}

/// Prints the per-block table; writes `gradcheck.json` when `--out` is given.
pub fn cmd_gradcheck(common: &Common, corrupt: Option<String>) -> Result<GradcheckReport> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<GradcheckConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => GradcheckConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if corrupt.is_some() {
        cfg.corrupt = corrupt;
    }
    let report = run_gradcheck(&cfg)?;
    print!("{}", report.to_table());
    if let Some(out) = &common.out {
        create_out(out)?;
        write(
            out.join("gradcheck.json"),
            serde_json::to_string_pretty(&report).expect("serializes"),
        )?;
    }
    if report.passed() {
        println!("all blocks below {:e}", report.threshold);
    } else {
        eprintln!("gradient check failed: {}", report.failures().join(", "));
    }
    Ok(report)
}

/// Writes `corpus.jsonl` and `schema.json`.
pub fn cmd_synth(common: &Common, kind: SynthKind, count: usize) -> Result<PathBuf> {
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let seed = common.seed.unwrap_or(0);
    let (sentences, schema) = match kind {
        SynthKind::Overfit => (
            synthetic::overfit_corpus(count, seed),
            synthetic::overfit_schema(),
        ),
        SynthKind::Clinical => (synthetic::clinical_corpus(count, seed), PairSchema::i2b2()),
    };
    create_out(&out)?;
    let corpus = out.join("corpus.jsonl");
    write(corpus.clone(), synthetic::to_jsonl(&sentences))?;
    write(
        out.join("schema.json"),
        serde_json::to_string_pretty(&schema).expect("serializes"),
    )?;
    println!(
        "wrote {} sentences to {}",
        sentences.len(),
        corpus.display()
    );
    Ok(corpus)
}

use cbgru::eval::{bootstrap_ci, micro_f1, CiConfig, PredictionRecord};
use cbgru::layers::{EncodedSequence, SequenceBatch};
use cbgru::model::{Mode, Model, ModelConfig};
use cbgru::tensor::Rng;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const VOCAB: usize = 2000;
const POSITIONS: usize = 102;

fn batch(size: usize, rng: &mut Rng) -> (SequenceBatch, Vec<usize>) {
    let seqs: Vec<EncodedSequence> = (0..size)
        .map(|_| {
            let n = 15 + rng.below(25);
            EncodedSequence {
                tokens: (0..n).map(|_| 1 + rng.below(VOCAB - 1)).collect(),
                pos1: (0..n).map(|_| 1 + rng.below(POSITIONS - 1)).collect(),
                pos2: (0..n).map(|_| 1 + rng.below(POSITIONS - 1)).collect(),
            }
        })
        .collect();
    let gold = (0..size).map(|_| rng.below(11)).collect();
    (SequenceBatch::from_sequences(&seqs).unwrap(), gold)
}

fn records(n: usize, rng: &mut Rng) -> Vec<PredictionRecord> {
    let labels = ["TrAP", "TrIP", "TeRP", "PIP", "NTrP", "NTeP", "NPP"];
    (0..n)
        .map(|i| {
            let gold = labels[rng.below(labels.len())];
            let pred = if rng.next_f64() < 0.7 {
                gold
            } else {
                labels[rng.below(labels.len())]
            };
            PredictionRecord {
                sample_id: format!("r{i}"),
                gold: gold.into(),
                pred: pred.into(),
                distance: 1 + rng.below(30),
            }
        })
        .collect()
}

/// Runs `f` inside a pool of `threads` workers; 0 means the global pool.
fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    if threads == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(f)
    }
}

fn forward_backward(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let (b, gold) = batch(32, &mut rng);
    let cfg = ModelConfig {
        class_names: (0..11).map(|i| format!("c{i}")).collect(),
        ..ModelConfig::default()
    };
    let mut group = c.benchmark_group("forward_backward_batch32");
    group.sample_size(20);
    for (label, threads) in [("one_thread", 1), ("all_threads", 0)] {
        let mut model = Model::new(cfg.clone(), VOCAB, POSITIONS).unwrap();
        group.bench_function(BenchmarkId::from_parameter(label), |bench| {
            bench.iter(|| {
                in_pool(threads, || {
                    model
                        .loss_and_grad(&b, &gold, Mode::Train { dropout_seed: 3 })
                        .unwrap()
                })
            })
        });
    }
    group.finish();
}

fn bootstrap(c: &mut Criterion) {
    let mut rng = Rng::new(2);
    let recs = records(2000, &mut rng);
    let positive = ["TrAP", "TrIP", "TeRP", "PIP"];
    let cfg = CiConfig::default();
    let mut group = c.benchmark_group("bootstrap_1000x2000");
    group.sample_size(10);
    for (label, threads) in [("one_thread", 1), ("all_threads", 0)] {
        group.bench_function(BenchmarkId::from_parameter(label), |bench| {
            bench.iter(|| {
                in_pool(threads, || {
                    bootstrap_ci(
                        &recs,
                        |s| Ok(micro_f1(s.iter().copied(), &positive)?.f1),
                        &cfg,
                    )
                    .unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, forward_backward, bootstrap);
criterion_main!(benches);

//! The rayon backend must agree bit for bit with a single-threaded run.

use cbgru::data::{
    build_vocab, encode_samples, enumerate_corpus, synthetic, BlindMode, PairSchema,
};
use cbgru::eval::{bootstrap_many, CiConfig};
use cbgru::layers::{EncodedSequence, SequenceBatch};
use cbgru::model::{Mode, Model, ModelConfig, Pooling};

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn gradients(pooling: Pooling) -> (f64, Vec<f64>) {
    let schema = PairSchema::i2b2();
    let samples = enumerate_corpus(
        &synthetic::clinical_corpus(40, 2),
        &schema,
        BlindMode::All,
        50,
    )
    .unwrap();
    let vocab = build_vocab(&samples, 1, 50, &schema).unwrap();
    let cfg = ModelConfig {
        d_w: 8,
        d_p: 3,
        d_c: 10,
        d_h: 6,
        pooling,
        class_names: vocab.class_names(),
        seed: 3,
        ..ModelConfig::default()
    };
    let enc = encode_samples(&samples, &vocab, cfg.k).unwrap();
    let seqs: Vec<EncodedSequence> = enc.samples.iter().map(|s| s.seq.clone()).collect();
    let gold: Vec<usize> = enc.samples.iter().map(|s| s.label).collect();
    let batch = SequenceBatch::from_sequences(&seqs).unwrap();
    let mut model = Model::new(cfg, vocab.num_tokens(), vocab.num_positions()).unwrap();
    let loss = model
        .loss_and_grad(&batch, &gold, Mode::Train { dropout_seed: 11 })
        .unwrap();
    (loss, model.params.grads.flatten())
}

#[test]
fn gradients_match_across_thread_counts() {
    for pooling in [Pooling::Max, Pooling::Attentive] {
        let (l1, g1) = in_pool(1, || gradients(pooling));
        let (l4, g4) = in_pool(4, || gradients(pooling));
        assert_eq!(l1.to_bits(), l4.to_bits());
        assert!(g1.iter().zip(&g4).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn bootstrap_matches_across_thread_counts() {
    let items: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64).collect();
    let cfg = CiConfig {
        replicates: 300,
        level: 0.9,
        seed: 4,
    };
    let run = || {
        bootstrap_many(
            &items,
            |s| {
                Ok(vec![
                    s.iter().copied().sum::<f64>() / s.len() as f64,
                    s.iter().fold(0.0, |m, &&x| f64::max(m, x)),
                ])
            },
            &cfg,
        )
        .unwrap()
    };
    assert_eq!(in_pool(1, run), in_pool(3, run));
}

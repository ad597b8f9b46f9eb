use cbgru::cli::pipeline::split_dev;
use cbgru::data::{
    build_vocab, encode_samples, enumerate_corpus, enumerate_pairs, make_folds, synthetic,
    AnnotatedSentence, BlindMode, Concept, PairSchema, Relation, UNK,
};
use proptest::prelude::*;

fn concept(id: &str, start: usize, end: usize, ty: &str) -> Concept {
    Concept {
        id: id.into(),
        start,
        end,
        concept_type: ty.into(),
    }
}

/// Random sentence with non-overlapping spans of clinical types.
fn sentence_strategy() -> impl Strategy<Value = AnnotatedSentence> {
    (
        prop::collection::vec((0usize..3, 1usize..3, 0usize..4), 0..6),
        0usize..5,
    )
        .prop_map(|(spans, tail)| {
            let types = ["problem", "treatment", "test"];
            let mut tokens = Vec::new();
            let mut concepts = Vec::new();
            for (i, (ty, len, gap)) in spans.into_iter().enumerate() {
                tokens.extend((0..gap).map(|g| format!("w{g}")));
                let start = tokens.len();
                tokens.extend((0..len).map(|l| format!("c{l}")));
                concepts.push(concept(&format!("c{i}"), start, start + len - 1, types[ty]));
            }
            tokens.extend((0..tail).map(|g| format!("t{g}")));
            if tokens.is_empty() {
                tokens.push("x".into());
            }
            AnnotatedSentence {
                id: Some("s".into()),
                tokens,
                concepts,
                relations: Vec::new(),
            }
        })
}

proptest! {
    #[test]
    fn pair_count_matches_brute_force(s in sentence_strategy()) {
        let schema = PairSchema::i2b2();
        let samples = enumerate_pairs(&s, &schema, BlindMode::All, 50).unwrap();
        let mut expected = 0;
        for i in 0..s.concepts.len() {
            for j in i + 1..s.concepts.len() {
                if schema.rule_for(&s.concepts[i].concept_type, &s.concepts[j].concept_type).is_some() {
                    expected += 1;
                }
            }
        }
        prop_assert_eq!(samples.len(), expected);
    }

    #[test]
    fn positions_step_by_one_until_clipped(s in sentence_strategy(), clip in 1i64..8) {
        let samples = enumerate_pairs(&s, &PairSchema::i2b2(), BlindMode::All, clip).unwrap();
        for r in &samples {
            prop_assert_eq!(r.pos1.len(), r.blinded_tokens.len());
            prop_assert_eq!(r.pos1[r.c1_index], 0);
            prop_assert_eq!(r.pos2[r.c2_index], 0);
            for p in [&r.pos1, &r.pos2] {
                for w in p.windows(2) {
                    let step = w[1] - w[0];
                    prop_assert!(step == 1 || (step == 0 && w[0].abs() == clip));
                    prop_assert!(w[1].abs() <= clip);
                }
            }
            prop_assert!(r.c1_index < r.c2_index);
        }
    }
}

#[test]
fn annotated_pair_keeps_label_and_blinds_types() {
    let s = AnnotatedSentence {
        id: Some("x".into()),
        tokens: "the aspirin improved his chest pain today"
            .split(' ')
            .map(String::from)
            .collect(),
        concepts: vec![
            concept("a", 1, 1, "treatment"),
            concept("b", 4, 5, "problem"),
        ],
        relations: vec![Relation {
            a: "b".into(),
            b: "a".into(),
            label: "TrIP".into(),
        }],
    };
    let samples = enumerate_pairs(&s, &PairSchema::i2b2(), BlindMode::All, 50).unwrap();
    assert_eq!(samples.len(), 1);
    let r = &samples[0];
    assert_eq!(r.label, "TrIP");
    assert_eq!(
        r.blinded_tokens,
        ["the", "TREATMENT", "improved", "his", "PROBLEM", "today"]
    );
    assert_eq!((r.c1_index, r.c2_index, r.distance()), (1, 4, 3));
    assert_eq!(r.pos1, [-1, 0, 1, 2, 3, 4]);
    assert_eq!(r.pos2, [-4, -3, -2, -1, 0, 1]);
}

#[test]
fn relation_with_wrong_label_is_rejected() {
    let s = AnnotatedSentence {
        id: Some("x".into()),
        tokens: vec!["a".into(), "b".into()],
        concepts: vec![concept("a", 0, 0, "test"), concept("b", 1, 1, "problem")],
        relations: vec![Relation {
            a: "a".into(),
            b: "b".into(),
            label: "TrIP".into(),
        }],
    };
    assert!(enumerate_pairs(&s, &PairSchema::i2b2(), BlindMode::All, 50).is_err());
}

#[test]
fn vocabulary_comes_from_training_split_only() {
    let schema = PairSchema::i2b2();
    let mut corpus = synthetic::clinical_corpus(60, 3);
    let mut odd = corpus[0].clone();
    odd.id = Some("held_out".into());
    odd.tokens[0] = "zzyzx".into();
    corpus.push(odd);
    let samples = enumerate_corpus(&corpus, &schema, BlindMode::All, 50).unwrap();
    let (train, held): (Vec<_>, Vec<_>) = samples
        .into_iter()
        .partition(|s| !s.id.starts_with("held_out"));
    assert!(!held.is_empty());
    let vocab = build_vocab(&train, 1, 50, &schema).unwrap();
    assert_eq!(vocab.token_id("zzyzx"), UNK);
    let enc = encode_samples(&held, &vocab, 1).unwrap();
    assert_eq!(enc.samples[0].seq.tokens[0], UNK);
}

#[test]
fn dev_split_is_stratified_and_disjoint() {
    let schema = PairSchema::i2b2();
    let samples = enumerate_corpus(
        &synthetic::clinical_corpus(200, 4),
        &schema,
        BlindMode::All,
        50,
    )
    .unwrap();
    let n = samples.len();
    let (train, dev) = split_dev(samples.clone(), &schema, 0.1, 9).unwrap();
    assert_eq!(train.len() + dev.len(), n);
    let dev_ids: std::collections::HashSet<_> = dev.iter().map(|s| &s.id).collect();
    assert!(train.iter().all(|s| !dev_ids.contains(&s.id)));
    assert!((dev.len() as f64 / n as f64 - 0.1).abs() < 0.03);
    let (train2, _) = split_dev(samples, &schema, 0.1, 9).unwrap();
    assert_eq!(train, train2);
}

#[test]
fn folds_balance_each_class() {
    let labels: Vec<usize> = (0..103).map(|i| i % 4).collect();
    let folds = make_folds(&labels, 5, 1).unwrap();
    for c in 0..4 {
        let mut counts = [0usize; 5];
        for (l, f) in labels.iter().zip(&folds) {
            if *l == c {
                counts[*f] += 1;
            }
        }
        assert!(
            counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1,
            "class {c}: {counts:?}"
        );
    }
    let sizes: Vec<usize> = (0..5)
        .map(|f| folds.iter().filter(|&&x| x == f).count())
        .collect();
    assert!(
        sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1,
        "{sizes:?}"
    );
}

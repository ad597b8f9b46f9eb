//! Generated corpora for smoke tests and the overfit check.

use crate::tensor::Rng;

use super::corpus::{AnnotatedSentence, Concept, Relation};
use super::schema::{PairRule, PairSchema};

/// Schema for [`overfit_corpus`]: one `alpha`–`beta` pair type with three
/// positive classes and a negative.
pub fn overfit_schema() -> PairSchema {
    PairSchema {
        pairs: vec![PairRule {
            category: "AB".into(),
            types: ["alpha".into(), "beta".into()],
            positive: vec!["R1".into(), "R2".into(), "R3".into()],
            negative: "NAB".into(),
        }],
    }
}

const OVERFIT_KEYWORDS: [&str; 4] = ["kw_one", "kw_two", "kw_three", "kw_none"];
const OVERFIT_FILLER: usize = 42;

/// Two-concept sentences whose class is given by a keyword placed between
/// the concepts. Balanced over the four classes; the vocabulary stays
/// under 50 types after blinding.
pub fn overfit_corpus(samples: usize, seed: u64) -> Vec<AnnotatedSentence> {
    let schema = overfit_schema();
    let classes = schema.class_names();
    let mut rng = Rng::new(seed);
    (0..samples)
        .map(|i| {
            let class = i % classes.len();
            let filler = |rng: &mut Rng, min: usize, span: usize| -> Vec<String> {
                let n = min + rng.below(span);
                (0..n)
                    .map(|_| format!("w{}", rng.below(OVERFIT_FILLER)))
                    .collect()
            };
            let mut tokens = filler(&mut rng, 1, 3);
            let a = tokens.len();
            tokens.push(format!("a{}", rng.below(3)));
            tokens.extend(filler(&mut rng, 0, 2));
            tokens.push(OVERFIT_KEYWORDS[class].to_string());
            tokens.extend(filler(&mut rng, 0, 2));
            let b = tokens.len();
            tokens.push(format!("b{}", rng.below(3)));
            tokens.extend(filler(&mut rng, 1, 3));
            let relations = if schema.is_positive(&classes[class]) {
                vec![Relation {
                    a: "c1".into(),
                    b: "c2".into(),
                    label: classes[class].clone(),
                }]
            } else {
                Vec::new()
            };
            AnnotatedSentence {
                id: Some(format!("o{i}")),
                tokens,
                concepts: vec![
                    Concept {
                        id: "c1".into(),
                        start: a,
                        end: a,
                        concept_type: "alpha".into(),
                    },
                    Concept {
                        id: "c2".into(),
                        start: b,
                        end: b,
                        concept_type: "beta".into(),
                    },
                ],
                relations,
            }
        })
        .collect()
}

const TREATMENTS: [&[&str]; 4] = [&["steroids"], &["aspirin"], &["iv", "fluids"], &["lasix"]];
const TESTS: [&[&str]; 3] = [&["ct", "scan"], &["chest", "x-ray"], &["ekg"]];
const PROBLEMS: [&[&str]; 5] = [
    &["this", "swelling"],
    &["pain"],
    &["fever"],
    &["a", "rash"],
    &["edema"],
];
const FILLER: [&str; 12] = [
    "the", "patient", "was", "on", "and", "with", "at", "hospital", "noted", "today", "she", "he",
];

fn cue(label: &str) -> &'static str {
    match label {
        "TrIP" => "improved",
        "TrWP" => "worsened",
        "TrCP" => "caused",
        "TrAP" => "for",
        "TrNAP" => "withheld",
        "TeRP" => "revealed",
        "TeCP" => "to_assess",
        "PIP" => "suggesting",
        _ => "unrelated_to",
    }
}

/// Clinical-style sentences over the i2b2 schema. Each has a related or
/// unrelated target pair and sometimes a third problem concept.
pub fn clinical_corpus(sentences: usize, seed: u64) -> Vec<AnnotatedSentence> {
    let schema = PairSchema::i2b2();
    let mut rng = Rng::new(seed);
    (0..sentences)
        .map(|i| {
            let rule = &schema.pairs[rng.below(schema.pairs.len())];
            let label = if rng.below(3) == 0 {
                None
            } else {
                Some(rule.positive[rng.below(rule.positive.len())].clone())
            };
            let lexicon = |ty: &str| -> &'static [&'static [&'static str]] {
                match ty {
                    "treatment" => &TREATMENTS,
                    "test" => &TESTS,
                    _ => &PROBLEMS,
                }
            };
            let mut tokens: Vec<String> = Vec::new();
            let mut concepts = Vec::new();
            let push_filler = |tokens: &mut Vec<String>, rng: &mut Rng, min: usize, span: usize| {
                for _ in 0..min + rng.below(span) {
                    tokens.push(FILLER[rng.below(FILLER.len())].to_string());
                }
            };
            let mut push_concept = |tokens: &mut Vec<String>, rng: &mut Rng, ty: &str, id: &str| {
                let words = lexicon(ty)[rng.below(lexicon(ty).len())];
                let start = tokens.len();
                tokens.extend(words.iter().map(|w| w.to_string()));
                concepts.push(Concept {
                    id: id.into(),
                    start,
                    end: tokens.len() - 1,
                    concept_type: ty.into(),
                });
            };
            push_filler(&mut tokens, &mut rng, 1, 3);
            push_concept(&mut tokens, &mut rng, &rule.types[0], "c1");
            push_filler(&mut tokens, &mut rng, 0, 3);
            tokens.push(cue(label.as_deref().unwrap_or("")).to_string());
            push_filler(&mut tokens, &mut rng, 0, 6);
            push_concept(&mut tokens, &mut rng, &rule.types[1], "c2");
            if rng.below(3) == 0 {
                push_filler(&mut tokens, &mut rng, 2, 4);
                push_concept(&mut tokens, &mut rng, "problem", "c3");
            }
            push_filler(&mut tokens, &mut rng, 1, 2);
            AnnotatedSentence {
                id: Some(format!("n{i}")),
                tokens,
                concepts,
                relations: label
                    .map(|label| Relation {
                        a: "c1".into(),
                        b: "c2".into(),
                        label,
                    })
                    .into_iter()
                    .collect(),
            }
        })
        .collect()
}

/// Serializes sentences as corpus JSONL.
pub fn to_jsonl(sentences: &[AnnotatedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&serde_json::to_string(s).expect("sentence serializes"));
        out.push('\n');
    }
    out
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::corpus::{AnnotatedSentence, Concept};
use super::schema::PairSchema;

/// Which concepts are collapsed into their type token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlindMode {
    /// Every annotated concept.
    #[default]
    All,
    /// Only the two concepts of the pair being classified.
    Targets,
}

/// One classification instance after blinding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSample {
    pub id: String,
    pub blinded_tokens: Vec<String>,
    pub c1_index: usize,
    pub c2_index: usize,
    pub label: String,
    pub pos1: Vec<i64>,
    pub pos2: Vec<i64>,
}

impl RelationSample {
    /// Token distance between the two concepts.
    pub fn distance(&self) -> usize {
        self.c2_index.abs_diff(self.c1_index)
    }
}

pub(crate) fn type_token(concept_type: &str) -> String {
    concept_type.to_uppercase()
}

/// Collapses each selected concept span to a single token naming its type.
/// `keep` selects concepts by index; spans of kept concepts are remapped too.
pub fn blind_sentence(s: &AnnotatedSentence, select: impl Fn(usize) -> bool) -> AnnotatedSentence {
    let mut order: Vec<usize> = (0..s.concepts.len()).collect();
    order.sort_by_key(|&i| s.concepts[i].start);
    let mut tokens = Vec::with_capacity(s.tokens.len());
    let mut concepts: Vec<Option<Concept>> = vec![None; s.concepts.len()];
    let mut next = order.iter().peekable();
    let mut t = 0;
    while t < s.tokens.len() {
        if let Some(&&ci) = next.peek() {
            let c = &s.concepts[ci];
            if c.start == t {
                next.next();
                let start = tokens.len();
                if select(ci) {
                    tokens.push(type_token(&c.concept_type));
                    concepts[ci] = Some(Concept {
                        start,
                        end: start,
                        ..c.clone()
                    });
                } else {
                    tokens.extend_from_slice(&s.tokens[c.start..=c.end]);
                    concepts[ci] = Some(Concept {
                        start,
                        end: start + (c.end - c.start),
                        ..c.clone()
                    });
                }
                t = c.end + 1;
                continue;
            }
        }
        tokens.push(s.tokens[t].clone());
        t += 1;
    }
    AnnotatedSentence {
        id: s.id.clone(),
        tokens,
        concepts: concepts
            .into_iter()
            .map(|c| c.expect("every concept visited"))
            .collect(),
        relations: s.relations.clone(),
    }
}

/// Builds the sample for concepts `first` and `second` (indices into
/// `s.concepts`); `c1` is whichever span comes first in the sentence.
pub fn blind_and_position(
    s: &AnnotatedSentence,
    first: usize,
    second: usize,
    label: &str,
    mode: BlindMode,
    clip: i64,
) -> RelationSample {
    let (a, b) = if s.concepts[first].start <= s.concepts[second].start {
        (first, second)
    } else {
        (second, first)
    };
    let blinded = blind_sentence(s, |i| mode == BlindMode::All || i == a || i == b);
    let c1 = blinded.concepts[a].start;
    let c2 = blinded.concepts[b].start;
    let rel = |t: usize, c: usize| (t as i64 - c as i64).clamp(-clip, clip);
    let n = blinded.tokens.len();
    RelationSample {
        id: format!(
            "{}:{}-{}",
            s.id.as_deref().unwrap_or("s"),
            s.concepts[a].id,
            s.concepts[b].id
        ),
        pos1: (0..n).map(|t| rel(t, c1)).collect(),
        pos2: (0..n).map(|t| rel(t, c2)).collect(),
        blinded_tokens: blinded.tokens,
        c1_index: c1,
        c2_index: c2,
        label: label.to_string(),
    }
}

/// One sample per unordered concept pair whose types the schema covers.
/// Unannotated pairs get the rule's negative label.
pub fn enumerate_pairs(
    s: &AnnotatedSentence,
    schema: &PairSchema,
    mode: BlindMode,
    clip: i64,
) -> Result<Vec<RelationSample>> {
    let index: HashMap<&str, usize> = s
        .concepts
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let mut annotated: HashMap<(usize, usize), &str> = HashMap::new();
    let sid = s.id.as_deref().unwrap_or("<unnamed>");
    for r in &s.relations {
        let (Some(&a), Some(&b)) = (index.get(r.a.as_str()), index.get(r.b.as_str())) else {
            return Err(Error::Data(format!(
                "sentence {sid}: relation {} has unknown endpoints",
                r.label
            )));
        };
        let key = (a.min(b), a.max(b));
        if annotated.insert(key, r.label.as_str()).is_some() {
            return Err(Error::Data(format!(
                "sentence {sid}: concepts {} and {} carry two relations",
                r.a, r.b
            )));
        }
        let (ta, tb) = (&s.concepts[a].concept_type, &s.concepts[b].concept_type);
        match schema.rule_for(ta, tb) {
            Some(rule) if rule.positive.contains(&r.label) => {}
            Some(rule) => {
                return Err(Error::Data(format!(
                    "sentence {sid}: label {} is not a {} relation",
                    r.label, rule.category
                )))
            }
            None => {
                return Err(Error::Data(format!(
                    "sentence {sid}: relation {} between {ta} and {tb}, which the schema does not cover",
                    r.label
                )))
            }
        }
    }
    let mut out = Vec::new();
    for i in 0..s.concepts.len() {
        for j in i + 1..s.concepts.len() {
            let Some(rule) =
                schema.rule_for(&s.concepts[i].concept_type, &s.concepts[j].concept_type)
            else {
                continue;
            };
            let label = annotated
                .get(&(i, j))
                .copied()
                .unwrap_or(rule.negative.as_str());
            out.push(blind_and_position(s, i, j, label, mode, clip));
        }
    }
    Ok(out)
}

/// `enumerate_pairs` over a whole corpus. Sentences without an id are named
/// by their position.
pub fn enumerate_corpus(
    sentences: &[AnnotatedSentence],
    schema: &PairSchema,
    mode: BlindMode,
    clip: i64,
) -> Result<Vec<RelationSample>> {
    let mut out = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        if s.id.is_none() {
            let mut named = s.clone();
            named.id = Some(format!("s{i}"));
            out.extend(enumerate_pairs(&named, schema, mode, clip)?);
        } else {
            out.extend(enumerate_pairs(s, schema, mode, clip)?);
        }
    }
    Ok(out)
}

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Concept {
    pub id: String,
    /// First token of the span.
    pub start: usize,
    /// Last token of the span (inclusive).
    pub end: usize,
    #[serde(rename = "type")]
    pub concept_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relation {
    pub a: String,
    pub b: String,
    pub label: String,
}

/// One corpus line: tokens, concept spans and the relations between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedSentence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub concepts: Vec<Concept>,
    #[serde(default)]
    pub relations: Vec<Relation>,
}

impl AnnotatedSentence {
    pub fn concept(&self, id: &str) -> Option<&Concept> {
        self.concepts.iter().find(|c| c.id == id)
    }

    /// Checks spans, id uniqueness, overlap and relation endpoints.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        let mut ids = HashSet::new();
        for c in &self.concepts {
            if c.start > c.end || c.end >= n {
                return Err(format!(
                    "concept {} span [{}, {}] out of range for {n} tokens",
                    c.id, c.start, c.end
                ));
            }
            if !ids.insert(c.id.as_str()) {
                return Err(format!("duplicate concept id {}", c.id));
            }
        }
        let mut spans: Vec<&Concept> = self.concepts.iter().collect();
        spans.sort_by_key(|c| (c.start, c.end));
        for w in spans.windows(2) {
            if w[1].start <= w[0].end {
                return Err(format!("concepts {} and {} overlap", w[0].id, w[1].id));
            }
        }
        for r in &self.relations {
            for end in [&r.a, &r.b] {
                if !ids.contains(end.as_str()) {
                    return Err(format!(
                        "relation {} references unknown concept id {end}",
                        r.label
                    ));
                }
            }
            if r.a == r.b {
                return Err(format!(
                    "relation {} links concept {} to itself",
                    r.label, r.a
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub sentences: Vec<AnnotatedSentence>,
    /// Lines skipped in lenient mode, with reasons.
    pub warnings: Vec<String>,
}

/// Parses JSONL text. With `lenient`, malformed or invalid lines are skipped
/// and reported in `warnings`; otherwise the first one is an error.
pub fn parse_corpus_str(text: &str, source: &str, lenient: bool) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{source}:{}", i + 1);
        let parsed = serde_json::from_str::<AnnotatedSentence>(line)
            .map_err(|e| e.to_string())
            .and_then(|s| s.validate().map(|_| s));
        match parsed {
            Ok(s) => corpus.sentences.push(s),
            Err(message) if lenient => {
                log::warn!("{location}: skipped: {message}");
                corpus.warnings.push(format!("{location}: {message}"));
            }
            Err(message) => return Err(Error::Parse { location, message }),
        }
    }
    Ok(corpus)
}

pub fn parse_corpus(path: &Path, lenient: bool) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_str(&text, &path.display().to_string(), lenient)
}

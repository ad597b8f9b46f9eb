use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which relation classes a concept-type pair can carry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRule {
    pub category: String,
    /// Unordered pair of concept types.
    pub types: [String; 2],
    pub positive: Vec<String>,
    /// Label given to pairs without an annotated relation.
    pub negative: String,
}

impl PairRule {
    fn matches(&self, a: &str, b: &str) -> bool {
        (self.types[0] == a && self.types[1] == b) || (self.types[0] == b && self.types[1] == a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSchema {
    pub pairs: Vec<PairRule>,
}

impl PairSchema {
    /// Treatment–problem, test–problem and problem–problem relations with
    /// eight positive classes.
    pub fn i2b2() -> Self {
        let rule = |category: &str, a: &str, b: &str, positive: &[&str], negative: &str| PairRule {
            category: category.into(),
            types: [a.into(), b.into()],
            positive: positive.iter().map(|s| s.to_string()).collect(),
            negative: negative.into(),
        };
        Self {
            pairs: vec![
                rule(
                    "TrP",
                    "treatment",
                    "problem",
                    &["TrIP", "TrWP", "TrCP", "TrAP", "TrNAP"],
                    "NTrP",
                ),
                rule("TeP", "test", "problem", &["TeRP", "TeCP"], "NTeP"),
                rule("PP", "problem", "problem", &["PIP"], "NPP"),
            ],
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("schema {}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Config("schema has no pair rules".into()));
        }
        let mut labels = HashSet::new();
        for (i, r) in self.pairs.iter().enumerate() {
            for other in &self.pairs[..i] {
                if other.matches(&r.types[0], &r.types[1]) {
                    return Err(Error::Config(format!(
                        "type pair ({}, {}) listed twice",
                        r.types[0], r.types[1]
                    )));
                }
            }
            for l in r.positive.iter().chain(std::iter::once(&r.negative)) {
                if !labels.insert(l.as_str()) {
                    return Err(Error::Config(format!(
                        "class {l} appears more than once in the schema"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn rule_for(&self, a: &str, b: &str) -> Option<&PairRule> {
        self.pairs.iter().find(|r| r.matches(a, b))
    }

    /// All classes in index order: each rule's positives, then its negative.
    pub fn class_names(&self) -> Vec<String> {
        self.pairs
            .iter()
            .flat_map(|r| {
                r.positive
                    .iter()
                    .cloned()
                    .chain(std::iter::once(r.negative.clone()))
            })
            .collect()
    }

    pub fn positive_classes(&self) -> Vec<String> {
        self.pairs
            .iter()
            .flat_map(|r| r.positive.iter().cloned())
            .collect()
    }

    pub fn is_positive(&self, label: &str) -> bool {
        self.pairs
            .iter()
            .any(|r| r.positive.iter().any(|p| p == label))
    }

    pub fn category_of(&self, label: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|r| r.negative == label || r.positive.iter().any(|p| p == label))
            .map(|r| r.category.as_str())
    }
}

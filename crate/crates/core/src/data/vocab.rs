use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::layers::PAD;

use super::pairs::RelationSample;
use super::schema::PairSchema;

/// Id of the out-of-vocabulary token.
pub const UNK: usize = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub name: String,
    pub positive: bool,
    pub category: String,
}

/// Token, position and class maps. Only the ordered token list is
/// serialized; the reverse index is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vocab {
    tokens: Vec<String>,
    clip: i64,
    classes: Vec<ClassInfo>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabRepr {
    tokens: Vec<String>,
    clip: i64,
    classes: Vec<ClassInfo>,
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = VocabRepr::deserialize(d)?;
        Vocab::from_parts(r.tokens, r.clip, r.classes).map_err(serde::de::Error::custom)
    }
}

impl Vocab {
    pub fn from_parts(tokens: Vec<String>, clip: i64, classes: Vec<ClassInfo>) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::Format(
                "vocabulary must start with <pad>, <unk>".into(),
            ));
        }
        if clip < 1 {
            return Err(Error::Config(format!(
                "position clip must be positive, got {clip}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("token {t:?} listed twice")));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for c in &classes {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Format(format!("class {} listed twice", c.name)));
            }
        }
        Ok(Self {
            tokens,
            clip,
            classes,
            index,
        })
    }

    /// Number of token ids, including PAD and UNK.
    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Number of position ids: every clipped distance plus PAD.
    pub fn num_positions(&self) -> usize {
        (2 * self.clip + 2) as usize
    }

    pub fn clip(&self) -> i64 {
        self.clip
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn position_id(&self, distance: i64) -> usize {
        (distance.clamp(-self.clip, self.clip) + self.clip + 1) as usize
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn encode_tokens(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.token_id(t)).collect()
    }

    pub fn decode_tokens(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN))
            .collect()
    }
}

/// Builds the vocabulary from training samples. Ids are assigned by
/// descending frequency, ties broken lexicographically.
pub fn build_vocab(
    samples: &[RelationSample],
    min_count: usize,
    clip: i64,
    schema: &PairSchema,
) -> Result<Vocab> {
    if samples.is_empty() {
        return Err(Error::Input(
            "cannot build a vocabulary from zero samples".into(),
        ));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in samples {
        for t in &s.blinded_tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count.max(1) && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens = [PAD_TOKEN, UNK_TOKEN]
        .into_iter()
        .chain(kept.into_iter().map(|(t, _)| t))
        .map(String::from)
        .collect();
    let classes = schema
        .pairs
        .iter()
        .flat_map(|r| {
            r.positive
                .iter()
                .map(move |p| (p, true, &r.category))
                .chain(std::iter::once((&r.negative, false, &r.category)))
        })
        .map(|(name, positive, category)| ClassInfo {
            name: name.clone(),
            positive,
            category: category.clone(),
        })
        .collect();
    Vocab::from_parts(tokens, clip, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(tokens: &[&str]) -> RelationSample {
        RelationSample {
            id: "x".into(),
            blinded_tokens: tokens.iter().map(|s| s.to_string()).collect(),
            c1_index: 0,
            c2_index: 1,
            label: "NTrP".into(),
            pos1: vec![0; tokens.len()],
            pos2: vec![0; tokens.len()],
        }
    }

    #[test]
    fn min_count_threshold() {
        let v = build_vocab(&[sample(&["a", "a", "b"])], 2, 50, &PairSchema::i2b2()).unwrap();
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "a"]);
        assert_eq!(v.token_id("b"), UNK);
        assert_eq!(v.token_id("a"), 2);
    }

    #[test]
    fn position_range() {
        let v = build_vocab(&[sample(&["a"])], 1, 50, &PairSchema::i2b2()).unwrap();
        assert_eq!(v.num_positions(), 102);
        assert_eq!(v.position_id(-50), 1);
        assert_eq!(v.position_id(-80), 1);
        assert_eq!(v.position_id(0), 51);
        assert_eq!(v.position_id(50), 101);
        assert_eq!(v.position_id(60), 101);
    }

    #[test]
    fn unseen_token_is_unk_and_vocab_is_fixed() {
        let v = build_vocab(&[sample(&["a", "b"])], 1, 50, &PairSchema::i2b2()).unwrap();
        let before = v.num_tokens();
        assert_eq!(v.encode_tokens(&["zzz".to_string()]), vec![UNK]);
        assert_eq!(v.num_tokens(), before);
    }

    #[test]
    fn ordering_and_round_trip() {
        let v = build_vocab(&[sample(&["b", "c", "a", "c"])], 1, 5, &PairSchema::i2b2()).unwrap();
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "c", "a", "b"]);
        let toks: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        assert_eq!(v.decode_tokens(&v.encode_tokens(&toks)), ["a", "b", "c"]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.token_id("c"), 2);
    }

    #[test]
    fn classes_carry_flags() {
        let v = build_vocab(&[sample(&["a"])], 1, 50, &PairSchema::i2b2()).unwrap();
        assert_eq!(v.classes().len(), 11);
        let ntrp = &v.classes()[v.class_index("NTrP").unwrap()];
        assert!(!ntrp.positive);
        assert_eq!(ntrp.category, "TrP");
        assert!(v.classes()[v.class_index("PIP").unwrap()].positive);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            build_vocab(&[], 1, 50, &PairSchema::i2b2()),
            Err(Error::Input(_))
        ));
    }
}

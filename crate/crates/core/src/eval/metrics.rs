use serde::{Deserialize, Serialize};

use crate::data::ClassInfo;
use crate::error::{Error, Result};

use super::records::PredictionRecord;

/// Precision, recall and F1 in percent, with the underlying counts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Prf {
    /// Any zero denominator yields 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| {
            if b == 0 {
                0.0
            } else {
                100.0 * a as f64 / b as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Micro-averaged scores over the classes in `positive`.
pub fn micro_f1<'a, I, S>(records: I, positive: &[S]) -> Result<Prf>
where
    I: IntoIterator<Item = &'a PredictionRecord>,
    S: AsRef<str>,
{
    if positive.is_empty() {
        return Err(Error::Config("no positive classes".into()));
    }
    let is_pos = |l: &str| positive.iter().any(|p| p.as_ref() == l);
    let (mut tp, mut fp, mut fn_, mut n) = (0, 0, 0, 0);
    for r in records {
        n += 1;
        let hit = r.gold == r.pred;
        if is_pos(&r.pred) {
            if hit {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        if is_pos(&r.gold) && !hit {
            fn_ += 1;
        }
    }
    if n == 0 {
        return Err(Error::Input("no prediction records".into()));
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

/// Fraction of exact matches in percent.
pub fn accuracy(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Input("no prediction records".into()));
    }
    let hits = records.iter().filter(|r| r.gold == r.pred).count();
    Ok(100.0 * hits as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub category: String,
    pub scores: Prf,
    /// Number of records whose gold label is this class.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub scores: Prf,
    pub support: usize,
}

/// One-vs-rest rows for each positive class, and micro scores per category
/// over that category's positive classes. Categories keep first-seen order.
pub fn per_class_and_category(
    records: &[PredictionRecord],
    classes: &[ClassInfo],
) -> Result<(Vec<ClassRow>, Vec<CategoryRow>)> {
    if records.is_empty() {
        return Err(Error::Input("no prediction records".into()));
    }
    for r in records {
        for l in [&r.gold, &r.pred] {
            if !classes.iter().any(|c| &c.name == l) {
                return Err(Error::Config(format!("class {l} has no category mapping")));
            }
        }
    }
    let positives: Vec<&ClassInfo> = classes.iter().filter(|c| c.positive).collect();
    let class_rows = positives
        .iter()
        .map(|c| {
            let scores = micro_f1(records, &[c.name.as_str()])?;
            Ok(ClassRow {
                class: c.name.clone(),
                category: c.category.clone(),
                support: records.iter().filter(|r| r.gold == c.name).count(),
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut categories: Vec<&str> = Vec::new();
    for c in &positives {
        if !categories.contains(&c.category.as_str()) {
            categories.push(&c.category);
        }
    }
    let category_rows = categories
        .into_iter()
        .map(|cat| {
            let members: Vec<&str> = positives
                .iter()
                .filter(|c| c.category == cat)
                .map(|c| c.name.as_str())
                .collect();
            Ok(CategoryRow {
                category: cat.to_string(),
                scores: micro_f1(records, &members)?,
                support: records
                    .iter()
                    .filter(|r| members.contains(&r.gold.as_str()))
                    .count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((class_rows, category_rows))
}

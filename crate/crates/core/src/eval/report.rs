use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::ClassInfo;
use crate::error::{Error, Result};

use super::bootstrap::{bootstrap_many, CiConfig};
use super::curve::{distance_curve, CurveConfig, DistanceCurve};
use super::metrics::{accuracy, micro_f1, per_class_and_category, Prf};
use super::records::PredictionRecord;

/// A percentage with an optional bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl From<Prf> for Scores {
    fn from(p: Prf) -> Self {
        let m = |value| Metric { value, ci: None };
        Self {
            precision: m(p.precision),
            recall: m(p.recall),
            f1: m(p.f1),
            tp: p.tp,
            fp: p.fp,
            fn_: p.fn_,
        }
    }
}

impl Scores {
    fn metrics_mut(&mut self) -> [&mut Metric; 3] {
        [&mut self.precision, &mut self.recall, &mut self.f1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub category: String,
    pub support: usize,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    pub category: String,
    pub support: usize,
    pub scores: Scores,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    pub ci: Option<CiConfig>,
    pub curve: CurveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    pub accuracy: f64,
    pub micro: Scores,
    pub per_class: Vec<ClassScores>,
    pub per_category: Vec<CategoryScores>,
    pub distance_curve: DistanceCurve,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<CiConfig>,
}

/// Every number of the report, scored against `classes`.
pub fn build_report(
    records: &[PredictionRecord],
    classes: &[ClassInfo],
    opts: &ReportOptions,
) -> Result<EvalReport> {
    let positive: Vec<&str> = classes
        .iter()
        .filter(|c| c.positive)
        .map(|c| c.name.as_str())
        .collect();
    if positive.is_empty() {
        return Err(Error::Config("class set has no positive classes".into()));
    }
    let (class_rows, category_rows) = per_class_and_category(records, classes)?;
    let mut report = EvalReport {
        records: records.len(),
        accuracy: accuracy(records)?,
        micro: micro_f1(records, &positive)?.into(),
        per_class: class_rows
            .into_iter()
            .map(|r| ClassScores {
                class: r.class,
                category: r.category,
                support: r.support,
                scores: r.scores.into(),
            })
            .collect(),
        per_category: category_rows
            .into_iter()
            .map(|r| CategoryScores {
                category: r.category,
                support: r.support,
                scores: r.scores.into(),
            })
            .collect(),
        distance_curve: distance_curve(records, &positive, &opts.curve)?,
        ci: opts.ci,
    };
    if let Some(ci) = &opts.ci {
        let groups: Vec<Vec<&str>> = std::iter::once(positive.clone())
            .chain(report.per_class.iter().map(|c| vec![c.class.as_str()]))
            .chain(report.per_category.iter().map(|cat| {
                classes
                    .iter()
                    .filter(|c| c.positive && c.category == cat.category)
                    .map(|c| c.name.as_str())
                    .collect()
            }))
            .collect();
        let intervals = bootstrap_many(
            records,
            |sample| {
                let mut out = Vec::with_capacity(3 * groups.len());
                for g in &groups {
                    let p = micro_f1(sample.iter().copied(), g)?;
                    out.extend([p.precision, p.recall, p.f1]);
                }
                Ok(out)
            },
            ci,
        )?;
        let targets = std::iter::once(&mut report.micro)
            .chain(report.per_class.iter_mut().map(|c| &mut c.scores))
            .chain(report.per_category.iter_mut().map(|c| &mut c.scores));
        let mut it = intervals.into_iter();
        for scores in targets {
            for m in scores.metrics_mut() {
                let (lo, hi) = it.next().expect("one interval per metric");
                m.ci = Some([lo, hi]);
            }
        }
    }
    Ok(report)
}

fn cell(m: &Metric) -> String {
    match m.ci {
        Some([lo, hi]) => format!("{:.1} [{:.1}, {:.1}]", m.value, lo, hi),
        None => format!("{:.1}", m.value),
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable tables with one decimal.
    pub fn to_table(&self) -> String {
        let w = if self.ci.is_some() { 23 } else { 8 };
        let mut out = String::new();
        let header = |out: &mut String, first: &str| {
            let _ = writeln!(
                out,
                "{first:<10}{:>w$}{:>w$}{:>w$}{:>9}",
                "P", "R", "F1", "support"
            );
        };
        let row = |out: &mut String, name: &str, s: &Scores, support: usize| {
            let _ = writeln!(
                out,
                "{name:<10}{:>w$}{:>w$}{:>w$}{support:>9}",
                cell(&s.precision),
                cell(&s.recall),
                cell(&s.f1)
            );
        };
        let _ = writeln!(
            out,
            "records {}  accuracy {:.1}",
            self.records, self.accuracy
        );
        out.push('\n');
        header(&mut out, "class");
        for c in &self.per_class {
            row(&mut out, &c.class, &c.scores, c.support);
        }
        out.push('\n');
        header(&mut out, "category");
        for c in &self.per_category {
            row(&mut out, &c.category, &c.scores, c.support);
        }
        out.push('\n');
        let support: usize = self.per_category.iter().map(|c| c.support).sum();
        row(&mut out, "micro", &self.micro, support);
        out.push('\n');
        match &self.distance_curve.warning {
            Some(w) => {
                let _ = writeln!(out, "distance curve: {w}");
            }
            None => {
                let _ = writeln!(out, "{:<10}{:>8}{:>9}", "distance", "F1", "count");
                for p in &self.distance_curve.points {
                    let _ = writeln!(out, "{:<10}{:>8.1}{:>9}", p.distance, p.f1, p.count);
                }
            }
        }
        out
    }

    /// Curve points as TSV for external plotting.
    pub fn curve_tsv(&self) -> String {
        let mut out = String::from("distance\tf1\tcount\n");
        for p in &self.distance_curve.points {
            let _ = writeln!(out, "{}\t{}\t{}", p.distance, p.f1, p.count);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes() -> Vec<ClassInfo> {
        let c = |name: &str, positive, category: &str| ClassInfo {
            name: name.into(),
            positive,
            category: category.into(),
        };
        vec![c("A", true, "X"), c("B", true, "X"), c("NX", false, "X")]
    }

    fn records(n: usize, correct: bool) -> Vec<PredictionRecord> {
        (0..n)
            .map(|i| {
                let gold = ["A", "B", "NX"][i % 3];
                PredictionRecord {
                    sample_id: format!("r{i}"),
                    gold: gold.into(),
                    pred: if correct || i % 4 != 0 { gold } else { "NX" }.into(),
                    distance: 1 + i % 6,
                }
            })
            .collect()
    }

    #[test]
    fn all_correct_ci_is_degenerate() {
        let opts = ReportOptions {
            ci: Some(CiConfig::default()),
            ..ReportOptions::default()
        };
        let r = build_report(&records(60, true), &classes(), &opts).unwrap();
        assert_eq!(r.micro.f1.ci, Some([100.0, 100.0]));
        assert!(r
            .per_class
            .iter()
            .all(|c| c.scores.f1.ci == Some([100.0, 100.0])));
        let json = r.to_json();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.to_table().contains("100.0 [100.0, 100.0]"));
    }

    #[test]
    fn ci_fields_only_with_flag() {
        let r = build_report(&records(60, false), &classes(), &ReportOptions::default()).unwrap();
        assert!(!r.to_json().contains("\"ci\""));
        assert!(r.micro.f1.value < 100.0);
    }
}

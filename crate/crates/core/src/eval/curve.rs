use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::metrics::micro_f1;
use super::records::PredictionRecord;

/// Which count decides where the curve ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    /// Records at exactly distance `d`.
    #[default]
    Exact,
    /// Records inside the window around `d`.
    Windowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    /// Half-width of the distance window.
    pub window: usize,
    /// The curve ends at the largest `d` whose count exceeds this.
    pub min_support: usize,
    pub truncation: Truncation,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            window: 2,
            min_support: 20,
            truncation: Truncation::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub distance: usize,
    pub f1: f64,
    /// Records inside the window.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCurve {
    pub points: Vec<CurvePoint>,
    /// Last distance kept; `None` when no distance has enough support.
    pub cutoff: Option<usize>,
    pub warning: Option<String>,
}

/// Micro-F1 over records with distance in `[d - w, d + w]` for each `d` from
/// 1 to the cutoff. Distances whose window holds no record are skipped.
pub fn distance_curve<S: AsRef<str>>(
    records: &[PredictionRecord],
    positive: &[S],
    cfg: &CurveConfig,
) -> Result<DistanceCurve> {
    let mut exact: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records {
        *exact.entry(r.distance).or_default() += 1;
    }
    let max_d = exact.keys().next_back().copied().unwrap_or(0);
    let in_window = |d: usize, x: usize| x + cfg.window >= d && x <= d + cfg.window;
    let windowed = |d: usize| {
        exact
            .range(d.saturating_sub(cfg.window)..=d + cfg.window)
            .map(|(_, c)| c)
            .sum::<usize>()
    };
    let cutoff = (1..=max_d + cfg.window).rev().find(|&d| {
        let count = match cfg.truncation {
            Truncation::Exact => exact.get(&d).copied().unwrap_or(0),
            Truncation::Windowed => windowed(d),
        };
        count > cfg.min_support
    });
    let Some(cutoff) = cutoff else {
        let msg = format!(
            "no distance has more than {} records; distance curve is empty",
            cfg.min_support
        );
        log::warn!("{msg}");
        return Ok(DistanceCurve {
            points: Vec::new(),
            cutoff: None,
            warning: Some(msg),
        });
    };
    let mut points = Vec::new();
    for d in 1..=cutoff {
        let subset: Vec<&PredictionRecord> = records
            .iter()
            .filter(|r| in_window(d, r.distance))
            .collect();
        if subset.is_empty() {
            continue;
        }
        points.push(CurvePoint {
            distance: d,
            f1: micro_f1(subset.iter().copied(), positive)?.f1,
            count: subset.len(),
        });
    }
    Ok(DistanceCurve {
        points,
        cutoff: Some(cutoff),
        warning: None,
    })
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scored sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub gold: String,
    pub pred: String,
    /// Token distance between the two concepts after blinding.
    pub distance: usize,
}

const HEADER: &str = "sample_id\tgold\tpred\tdistance";

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.sample_id, r.gold, r.pred, r.distance
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, &path.display().to_string())
}

pub(crate) fn parse_predictions(text: &str, source: &str) -> Result<Vec<PredictionRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        location: format!("{source}:{line}"),
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err(err(1, format!("expected header {HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(err(i + 1, format!("expected 4 fields, found {}", f.len())));
        }
        let distance = f[3]
            .parse()
            .map_err(|e| err(i + 1, format!("distance {:?}: {e}", f[3])))?;
        out.push(PredictionRecord {
            sample_id: f[0].to_string(),
            gold: f[1].to_string(),
            pred: f[2].to_string(),
            distance,
        });
    }
    Ok(out)
}

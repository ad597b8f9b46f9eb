use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::tensor::Rng;

/// Stratified fold assignment: each class is shuffled with its own seeded
/// stream and dealt round robin. The dealing offset carries over between
/// classes so overall fold sizes stay balanced.
pub fn make_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if labels.len() < folds {
        return Err(Error::Input(format!(
            "{} samples cannot fill {folds} folds",
            labels.len()
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut out = vec![0; labels.len()];
    let mut offset = 0;
    for (&class, members) in by_class.iter_mut() {
        if members.len() < folds {
            warn!(
                "class {class} has {} samples for {folds} folds",
                members.len()
            );
        }
        let mut rng = Rng::derive(seed, class as u64);
        rng.shuffle(members);
        for (j, &i) in members.iter().enumerate() {
            out[i] = (offset + j) % folds;
        }
        offset = (offset + members.len()) % folds;
    }
    Ok(out)
}
